"""Strain-mediated qubit-phonon couplings and the phonon-induced qubit matrices.

A qubit at position ``z`` couples to mode ``n`` at the rate

    lambda_{k,n} = xi / (2 L^2) * x_zp,n^2 * (dpsi_n/ds)(z_k)^2

and eliminating the thermal phonon bath leaves a coherent Ising matrix ``G``
and a collective dephasing matrix ``Gamma`` (both rad/s).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .constants import HBAR, K_B
from .elasticity import DeviceConfig, ModeSpectrum


class TruncationWarning(UserWarning):
    pass


@dataclass
class QubitEnsemble:
    """Per-qubit positions (m) and drive/decay parameters (rad/s)."""

    positions: np.ndarray
    detuning: np.ndarray
    rabi: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        self.positions = np.atleast_1d(np.asarray(self.positions, dtype=float))
        n = self.positions.size
        self.detuning = np.broadcast_to(np.asarray(self.detuning, dtype=float), (n,)).copy()
        self.rabi = np.broadcast_to(np.asarray(self.rabi, dtype=float), (n,)).copy()
        self.kappa = np.broadcast_to(np.asarray(self.kappa, dtype=float), (n,)).copy()
        if np.any(self.kappa <= 0):
            raise ValueError("decay rates must be positive")

    @property
    def n(self) -> int:
        return self.positions.size

    def check_positions(self, length: float) -> None:
        z = self.positions
        if np.any(z <= 0) or np.any(z >= length):
            raise ValueError("qubit positions must lie strictly inside (0, L)")
        if z.size > 1:
            gaps = np.abs(z[:, None] - z[None, :])[np.triu_indices(z.size, 1)]
            if gaps.min() < length / 1000:
                warnings.warn("two qubits are closer than L/1000", stacklevel=2)

    def permuted(self, order) -> "QubitEnsemble":
        order = list(order)
        return QubitEnsemble(self.positions[order], self.detuning[order], self.rabi[order], self.kappa[order])

    def with_(self, **changes) -> "QubitEnsemble":
        data = dict(positions=self.positions, detuning=self.detuning, rabi=self.rabi, kappa=self.kappa)
        data.update(changes)
        return QubitEnsemble(**data)


@dataclass
class CouplingMatrices:
    G: np.ndarray
    Gamma: np.ndarray
    lambdas: np.ndarray  # (N, n_modes)
    n_max: int
    temperature: float
    excluded_mode: int | None = None
    truncation_tail: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    def to_csv(self, path) -> None:
        """Write lambda table, G and Gamma with '#' metadata lines."""
        meta = dict(self.metadata)
        meta.update(
            temperature_k=self.temperature,
            n_max=self.n_max,
            excluded_mode=self.excluded_mode,
            truncation_tail=self.truncation_tail,
        )
        with open(path, "w", newline="") as fh:
            for key, value in meta.items():
                fh.write(f"# {key}: {json.dumps(value, default=str)}\n")
            w = csv.writer(fh)
            w.writerow(["block", "row", "col", "value_rad_s"])
            for name, mat in (("lambda", self.lambdas), ("G", self.G), ("Gamma", self.Gamma)):
                for (i, j), v in np.ndenumerate(mat):
                    w.writerow([name, i, j + (1 if name == "lambda" else 0), f"{v:.17g}"])


def geometry_hash(device: DeviceConfig) -> str:
    blob = json.dumps(asdict(device), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --------------------------------------------------------------------------


def coupling_rate(spectrum: ModeSpectrum, z, n=None) -> np.ndarray:
    """lambda(z, n) in rad/s for positions ``z`` (m) and 1-based modes ``n``.

    Returns an array of shape ``(len(z), len(n))``; scalars are squeezed.
    """
    device = spectrum.device
    modes = list(range(1, spectrum.n_max + 1)) if n is None else list(np.atleast_1d(n))
    slope = spectrum.slope(z, modes)
    xzp2 = spectrum.x_zp[[m - 1 for m in modes]] ** 2
    lam = device.xi / (2 * device.length**2) * xzp2 * slope**2
    if np.ndim(z) == 0 and np.ndim(n) == 0 and n is not None:
        return float(lam[0, 0])
    return lam


def pinned_coupling_closed_form(device: DeviceConfig, z, n: int):
    """Closed form of the pinned-branch coupling, width included."""
    T = device.built_in_tension
    pref = n * math.pi * HBAR * device.xi / (
        2 * device.length**2 * device.width * math.sqrt(device.areal_density * T)
    )
    return pref * np.cos(n * math.pi * np.asarray(z) / device.length) ** 2


def thermal_occupation(omega, temperature):
    """Bose-Einstein occupation; zero at T = 0 and for hbar w / kT > 700."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("frequency must be positive")
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        return np.zeros_like(omega)[()]
    x = HBAR * omega / (K_B * temperature)
    out = np.zeros_like(x)
    ok = x <= 700
    out[ok] = 1.0 / np.expm1(x[ok])
    return out[()]


def bath_correlator(omega, gamma, nbar):
    """C^+ = [gamma (nbar + 1/2) + i omega] / (gamma^2/4 + omega^2); C^- is its conjugate."""
    omega = np.asarray(omega, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    den = 0.25 * gamma**2 + omega**2
    return (gamma * (np.asarray(nbar) + 0.5) + 1j * omega) / den


def phonon_matrices(lambdas, omega, gamma, nbar) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """G, Gamma and the per-mode weight products from a coupling table.

    ``lambdas`` has shape (N, M); the remaining arguments shape (M,).
    """
    lambdas = np.asarray(lambdas, dtype=float)
    c_plus = bath_correlator(omega, gamma, nbar)
    G = np.einsum("jm,km,m->jk", lambdas, lambdas, c_plus.imag)
    Gamma = 0.5 * np.einsum("jm,km,m->jk", lambdas, lambdas, c_plus.real)
    return 0.5 * (G + G.T), 0.5 * (Gamma + Gamma.T), c_plus


def _tail_ratio(lambdas, weights, tail) -> float:
    full = np.einsum("jm,km,m->jk", lambdas, lambdas, weights)
    part = np.einsum("jm,km,m->jk", lambdas[:, tail], lambdas[:, tail], weights[tail])
    norm = np.linalg.norm(full)
    return float(np.linalg.norm(part) / norm) if norm > 0 else 0.0


def effective_matrices(
    ensemble: QubitEnsemble,
    spectrum: ModeSpectrum,
    temperature: float | None = None,
    excluded_mode: int | None = None,
    tail_modes: int = 10,
    tail_tolerance: float = 0.01,
) -> CouplingMatrices:
    """Phonon-mediated G and Gamma for the qubits of ``ensemble``.

    ``excluded_mode`` (1-based) drops that mode from both sums; the Dicke
    solver uses it to keep the selected mode explicit.
    """
    device = spectrum.device
    ensemble.check_positions(device.length)
    T = device.temperature if temperature is None else temperature
    lam = coupling_rate(spectrum, ensemble.positions)
    keep = np.ones(spectrum.n_max, dtype=bool)
    if excluded_mode is not None:
        if not 1 <= excluded_mode <= spectrum.n_max:
            raise ValueError(f"excluded mode {excluded_mode} outside 1..{spectrum.n_max}")
        keep[excluded_mode - 1] = False
    nbar = thermal_occupation(spectrum.omega, T)
    G, Gamma, c_plus = phonon_matrices(lam[:, keep], spectrum.omega[keep], spectrum.gamma[keep], nbar[keep])

    idx = np.flatnonzero(keep)
    tail = np.arange(idx.size)[idx >= spectrum.n_max - tail_modes]
    tails = {
        "G": _tail_ratio(lam[:, keep], c_plus.imag, tail),
        "Gamma": _tail_ratio(lam[:, keep], c_plus.real, tail),
    }
    if max(tails.values()) > tail_tolerance:
        warnings.warn(
            f"last {tail_modes} modes carry {max(tails.values()):.2%} of the coupling; raise n_max",
            TruncationWarning,
            stacklevel=2,
        )
    return CouplingMatrices(
        G=G,
        Gamma=Gamma,
        lambdas=lam,
        n_max=spectrum.n_max,
        temperature=T,
        excluded_mode=excluded_mode,
        truncation_tail=tails,
        metadata={"geometry_hash": geometry_hash(device), "positions_m": ensemble.positions.tolist()},
    )


def equal_strain_positions(spectrum: ModeSpectrum, n_qubits: int, rtol: float = 1e-3) -> np.ndarray:
    """Positions (m) of ``n_qubits`` equally coupled qubits on mode ``n_qubits + 1``.

    Mode n has n + 1 local maxima of (dpsi/ds)^2; the two next to the ends are
    discarded and the n - 1 interior ones are used.  On the clamped ribbon the
    outermost of these sit a few percent higher than the rest, so they are
    moved off-peak to the common (lowest) level.
    """
    from scipy import optimize

    mode = n_qubits + 1
    if mode > spectrum.n_max:
        raise ValueError(f"mode {mode} is not in the spectrum (n_max={spectrum.n_max})")
    shape = spectrum.shapes[mode - 1]
    s = np.linspace(0.0, 1.0, 40 * mode + 401)
    strain = shape(s, 1) ** 2
    peaks = np.flatnonzero((strain[1:-1] > strain[:-2]) & (strain[1:-1] >= strain[2:])) + 1
    refined = []
    for i in peaks:
        res = optimize.minimize_scalar(
            lambda t: -float(shape(np.array(t), 1) ** 2),
            bounds=(s[i - 1], s[i + 1]),
            method="bounded",
            options={"xatol": 1e-12},
        )
        refined.append(res.x)
    refined = np.array(refined)
    interior = refined[1:-1] if spectrum.boundary == "clamped" else refined[(refined > 1e-9) & (refined < 1 - 1e-9)]
    if interior.size < n_qubits:
        raise ValueError(f"mode {mode} has only {interior.size} interior equal-strain maxima, need {n_qubits}")
    interior = interior[:n_qubits]
    peak = shape(interior, 1) ** 2
    target = peak.min()
    if (peak.max() - target) / peak.max() > rtol:
        # Peaks next to the clamps are a few percent stronger: slide those
        # qubits down the flank facing the ribbon centre until they match.
        for i, (s0, p0) in enumerate(zip(interior, peak)):
            if (p0 - target) / p0 <= 1e-12:
                continue
            step = 0.5 / mode
            edge = s0 + step if s0 < 0.5 else s0 - step
            lo, hi = sorted((s0, edge))
            interior[i] = optimize.brentq(lambda t: float(shape(np.array(t), 1) ** 2) - target, lo, hi, xtol=1e-14)
    z = interior * spectrum.device.length
    lam = coupling_rate(spectrum, z, [mode])[:, 0]
    spread = (lam.max() - lam.min()) / lam.max()
    if spread > rtol:
        raise ValueError(f"could not equalize the couplings of mode {mode} (spread {spread:.2e})")
    return z
