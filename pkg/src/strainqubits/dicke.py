"""Mean-field Dicke-Ising solver.

One selected phonon mode is kept as a classical amplitude ``<a>``; the rest
are eliminated into the residual ``G``/``Gamma`` matrices.  The qubits see
the shifted detunings ``D_k + 2 lambda_k Re<a>`` and, self-consistently,

    <a> = sum_k lambda_k <sz_k> / (i gamma - 2 omega).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .coupling import (
    QubitEnsemble,
    coupling_rate,
    effective_matrices,
    equal_strain_positions,
    thermal_occupation,
)
from .elasticity import ModeSpectrum
from .liouville import (
    DEFAULT_DECAY_CONVENTION,
    build_liouvillian_reduced,
    detuning_generators,
    steady_state,
)


@dataclass(frozen=True)
class DickeConfig:
    ensemble: QubitEnsemble
    lambdas: np.ndarray  # couplings to the selected mode, rad/s
    omega: float
    gamma: float
    nbar: float = 0.0
    G: np.ndarray | None = None
    Gamma: np.ndarray | None = None
    selected_mode: int | None = None
    excluded_mode: int | None = None
    initial_guess: complex | None = None
    tol: float = 1e-6
    max_iter: int = 200
    damping: float = 1.0
    decay_convention: str = DEFAULT_DECAY_CONVENTION

    def __post_init__(self):
        n = self.ensemble.n
        lam = np.broadcast_to(np.asarray(self.lambdas, dtype=float), (n,)).copy()
        object.__setattr__(self, "lambdas", lam)
        for name in ("G", "Gamma"):
            mat = getattr(self, name)
            mat = np.zeros((n, n)) if mat is None else np.asarray(mat, dtype=float)
            if mat.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
            object.__setattr__(self, name, mat)
        if self.omega <= 0 or self.gamma <= 0:
            raise ValueError("selected-mode frequency and damping must be positive")
        if self.selected_mode is not None and self.excluded_mode != self.selected_mode:
            raise ValueError(
                f"residual couplings exclude mode {self.excluded_mode}, not the selected mode {self.selected_mode}"
            )
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")

    @property
    def n(self) -> int:
        return self.ensemble.n

    @property
    def guess(self) -> complex:
        return complex(math.sqrt(self.n) if self.initial_guess is None else self.initial_guess)

    def with_(self, **changes) -> "DickeConfig":
        return replace(self, **changes)

    def with_coupling(self, lam: float) -> "DickeConfig":
        """Same setup with every qubit coupled at ``lam`` to the selected mode."""
        return replace(self, lambdas=np.full(self.n, float(lam)))

    @classmethod
    def from_spectrum(
        cls,
        spectrum: ModeSpectrum,
        n_qubits: int,
        detuning=0.0,
        rabi=None,
        kappa=2 * math.pi * 20e6,
        temperature: float | None = None,
        **kwargs,
    ) -> "DickeConfig":
        """Equal-strain qubits on mode ``n_qubits + 1``; that mode is kept explicit."""
        mode = n_qubits + 1
        z = equal_strain_positions(spectrum, n_qubits)
        omega = float(spectrum.omega[mode - 1])
        rabi = 5 * omega if rabi is None else rabi
        ensemble = QubitEnsemble(z, detuning, rabi, kappa)
        T = spectrum.device.temperature if temperature is None else temperature
        residual = effective_matrices(ensemble, spectrum, T, excluded_mode=mode)
        return cls(
            ensemble=ensemble,
            lambdas=coupling_rate(spectrum, z, [mode])[:, 0],
            omega=omega,
            gamma=float(spectrum.gamma[mode - 1]),
            nbar=float(thermal_occupation(omega, T)),
            G=residual.G,
            Gamma=residual.Gamma,
            selected_mode=mode,
            excluded_mode=residual.excluded_mode,
            **kwargs,
        )


@dataclass
class FixedPointTrace:
    iterates: list
    errors: list
    converged: bool
    spins: np.ndarray
    n: int
    limit_cycle: bool = False
    damping: float = 1.0

    @property
    def value(self) -> complex:
        return self.iterates[-1]

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def order_parameter(self) -> float:
        return abs(self.value) / math.sqrt(self.n)


def order_parameter_from_spins(lambdas, sz, omega: float, gamma: float) -> complex:
    if omega <= 0:
        raise ValueError("mode frequency must be positive")
    return complex(np.dot(np.asarray(lambdas, dtype=float), np.asarray(sz, dtype=float)) / (1j * gamma - 2 * omega))


def relative_error(a_new: complex, a_old: complex) -> float:
    num = abs(abs(a_new) - abs(a_old))
    den = abs(a_new) + abs(a_old)
    return 0.0 if den == 0 else num / den


class _MeanFieldMap:
    """``<a> -> <a>'`` with the detuning-independent Liouvillian assembled once."""

    def __init__(self, config: DickeConfig):
        self.config = config
        base = build_liouvillian_reduced(
            config.ensemble, (config.G, config.Gamma), config.decay_convention
        )
        self.base = base.matrix
        self.shift = sp.csr_matrix(self.base.shape, dtype=complex)
        for lam, gen in zip(config.lambdas, detuning_generators(config.n)):
            self.shift = self.shift + 2 * lam * gen
        n = config.n
        idx = np.arange(2**n)
        # sz_k eigenvalue on basis state idx: +1 for |e> (bit 0)
        self.zsign = np.stack([1 - 2 * ((idx >> (n - 1 - k)) & 1) for k in range(n)]).astype(float)

    def spins(self, a: complex) -> np.ndarray:
        L = (self.base + a.real * self.shift).tocsr()
        rho = steady_state(L, uniqueness_check=False)
        return self.zsign @ np.real(np.diag(rho.data))

    def __call__(self, a: complex):
        sz = self.spins(a)
        c = self.config
        return order_parameter_from_spins(c.lambdas, sz, c.omega, c.gamma), sz


def dicke_fixed_point(config: DickeConfig, initial_guess: complex | None = None) -> FixedPointTrace:
    """Damped self-consistent iteration for the selected-mode amplitude."""
    fmap = _MeanFieldMap(config)
    a = config.guess if initial_guess is None else complex(initial_guess)
    if not np.any(config.lambdas):
        # the map is constant: one evaluation gives the exact fixed point
        new, sz = fmap(a)
        return FixedPointTrace([a, new], [0.0], True, sz, config.n, damping=config.damping)
    eta = config.damping
    iterates, errors = [a], []
    sz = None
    limit_cycle = False
    converged = False
    for _ in range(config.max_iter):
        new, sz = fmap(a)
        nxt = (1 - eta) * a + eta * new
        err = relative_error(nxt, a)
        iterates.append(nxt)
        errors.append(err)
        if err < config.tol:
            converged = True
            break
        if len(iterates) >= 3:
            d1 = abs(iterates[-1]) - abs(iterates[-2])
            d0 = abs(iterates[-2]) - abs(iterates[-3])
            scale = abs(iterates[-1]) + abs(iterates[-2]) + 1e-300
            if abs(iterates[-1] - iterates[-3]) < 10 * config.tol * scale:
                limit_cycle = True
            if d1 * d0 < 0 and abs(d1) >= 0.5 * abs(d0):
                eta *= 0.5
        a = nxt
    return FixedPointTrace(iterates, errors, converged, sz, config.n, limit_cycle and not converged, eta)


# --------------------------------------------------------------------------


@dataclass
class CriticalCouplings:
    lambda_c: float
    lambda_c0: float
    always_superradiant: bool = False


def analytic_critical(
    omega: float, gamma: float, n: int, rabi: float, kappa: float, G: float = 0.0, Gamma: float = 0.0
) -> CriticalCouplings:
    """Routh-Hurwitz critical couplings with and without the residual Ising terms.

    A negative radicand means the normal phase is never stable; ``lambda_c``
    is then NaN and ``always_superradiant`` is set.
    """
    if rabi <= 0:
        raise ValueError("the Rabi frequency must be positive")
    lc0 = math.sqrt(omega * (4 * kappa**2 + rabi**2) / (n * rabi))
    # (gamma^2/4 + omega^2) / omega, written so that gamma = 0 reproduces lc0 bit for bit
    mode = omega + gamma**2 / (4 * omega)
    radicand = mode * ((0.5 * Gamma + 2 * kappa) ** 2 + rabi**2 - 0.5 * G * rabi) / (n * rabi)
    if radicand < 0:
        return CriticalCouplings(math.nan, lc0, True)
    return CriticalCouplings(math.sqrt(radicand), lc0)


# --------------------------------------------------------------------------


@dataclass
class PhaseScan:
    omega: float
    rows: list = field(default_factory=list)  # (lam, rabi, order, iterations, converged)
    critical: dict = field(default_factory=dict)  # rabi -> lambda_c estimate (or None)
    threshold: float = 1e-2

    def to_csv(self, path, metadata: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for key, value in (metadata or {}).items():
                fh.write(f"# {key}: {value}\n")
            for rabi, lc in self.critical.items():
                crit = "nan" if lc is None else f"{lc / self.omega:.17g}"
                fh.write(f"# critical lambda/omega at rabi/omega={rabi / self.omega:.17g}: {crit}\n")
            w = csv.writer(fh)
            w.writerow(["lambda_over_omega", "rabi_over_omega", "order_parameter", "iterations", "converged"])
            for lam, rabi, order, its, ok in self.rows:
                w.writerow([f"{lam / self.omega:.17g}", f"{rabi / self.omega:.17g}", f"{order:.17g}", its, int(ok)])


def _sweep(config: DickeConfig, lams, threshold, warm_start, refine, refine_tol):
    rows, prev, crit = [], None, None
    below = None
    for lam in lams:
        cfg = config.with_coupling(lam)
        guess = prev.value if (warm_start and prev is not None and abs(prev.value) > 0) else None
        trace = dicke_fixed_point(cfg, guess)
        rows.append((lam, trace))
        if not trace.converged:
            continue
        if trace.order_parameter > threshold and crit is None:
            crit = (below, (lam, trace))
        elif crit is None:
            below = (lam, trace)
        prev = trace
    if crit is None:
        return rows, None
    below, above = crit
    if below is None or not refine:
        return rows, above[0]
    lo, lo_trace = below
    hi = above[0]
    while (hi - lo) > refine_tol * hi:
        mid = 0.5 * (lo + hi)
        guess = lo_trace.value if warm_start else None
        trace = dicke_fixed_point(config.with_coupling(mid), guess)
        if trace.converged and trace.order_parameter > threshold:
            hi = mid
        else:
            lo, lo_trace = mid, trace
    return rows, hi


def phase_scan(
    config: DickeConfig,
    lams,
    rabis=None,
    threshold: float = 1e-2,
    warm_start: bool = True,
    refine: bool = True,
    refine_tol: float = 1e-4,
    threads: int = 1,
) -> PhaseScan:
    """Sweep the selected-mode coupling upward, one sweep line per Rabi frequency.

    The critical coupling is the first converged point whose order parameter
    exceeds ``threshold``, refined by bisection against the last point below.
    Non-converged points are kept in the table but skipped for the estimate.
    """
    lams = np.asarray(lams, dtype=float)
    if np.any(np.diff(lams) <= 0):
        raise ValueError("the coupling grid must be strictly increasing")
    rabis = [float(config.ensemble.rabi[0])] if rabis is None else [float(r) for r in rabis]

    def line(rabi):
        cfg = config.with_(ensemble=config.ensemble.with_(rabi=rabi))
        return _sweep(cfg, lams, threshold, warm_start, refine, refine_tol)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(line, rabis))
    scan = PhaseScan(config.omega, threshold=threshold)
    for rabi, (rows, crit) in zip(rabis, results):
        for lam, trace in rows:
            scan.rows.append((lam, rabi, trace.order_parameter, trace.iterations, trace.converged))
        scan.critical[rabi] = crit
    return scan
