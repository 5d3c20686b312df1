"""Flexural normal modes of a doubly-clamped (or tension-dominated) ribbon.

Profiles are functions of the normalized coordinate ``s = z / L`` and are
scaled so that ``max |psi| = 1``.  Derivatives are taken with respect to
``s``; multiply by ``1 / L`` for the physical slope.

Two frequency models are available for the clamped branch:

``"profile_integral"`` (default)
    ``omega_n**2 = D / (rho h) * (k_n / L)**4`` with
    ``k_n**4 = int_0^1 psi psi'''' ds`` evaluated on the unit-maximum profile.
    This is the convention the reference device numbers are quoted in.
``"eigen"``
    ``k_n = alpha_n``, i.e. the textbook Euler-Bernoulli frequencies.  The
    same quadrature on an L2-normalized profile reproduces it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy import integrate, optimize

from .constants import HBAR

Boundary = Literal["clamped", "pinned"]
FrequencyModel = Literal["profile_integral", "eigen"]

DEFAULT_GRID_POINTS = 2048


class SolverError(RuntimeError):
    """A root or fixed point could not be found."""


class NumericalError(RuntimeError):
    """A quadrature or factorization produced an unusable result."""


@dataclass(frozen=True)
class DeviceConfig:
    """Geometry, material and environment of the ribbon.

    ``deformation_susceptibility`` is the strain response of the emitter line
    in the unit named by ``susceptibility_unit``: ``"hz"`` means ordinary
    frequency per unit strain and is multiplied by 2 pi internally.
    """

    length: float = 1e-6
    width: float = 3e-9
    thickness: float = 9.5e-10
    mass_density: float = 2.1e3
    youngs_modulus: float = 850e9
    poisson_ratio: float = 0.211
    quality_factor: float = 5e5
    deformation_susceptibility: float = 2.98e15
    susceptibility_unit: Literal["hz", "rad_s"] = "hz"
    temperature: float = 0.03
    boundary_model: Boundary = "clamped"
    built_in_tension: float | None = None

    def __post_init__(self):
        positive = dict(
            length=self.length,
            width=self.width,
            thickness=self.thickness,
            mass_density=self.mass_density,
            youngs_modulus=self.youngs_modulus,
            quality_factor=self.quality_factor,
            deformation_susceptibility=self.deformation_susceptibility,
        )
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not 0 < self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must lie in (0, 0.5)")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.boundary_model not in ("clamped", "pinned"):
            raise ValueError(f"unknown boundary model {self.boundary_model!r}")
        if self.susceptibility_unit not in ("hz", "rad_s"):
            raise ValueError(f"unknown susceptibility unit {self.susceptibility_unit!r}")
        if self.boundary_model == "pinned" and not (self.built_in_tension or 0) > 0:
            raise ValueError("pinned boundary model needs a positive built_in_tension (N/m)")

    @property
    def bending_rigidity(self) -> float:
        """D = E h^3 / 12 (1 - sigma^2)."""
        return self.youngs_modulus * self.thickness**3 / (12 * (1 - self.poisson_ratio**2))

    @property
    def areal_density(self) -> float:
        return self.mass_density * self.thickness

    @property
    def xi(self) -> float:
        """Deformation susceptibility in rad/s per unit strain."""
        if self.susceptibility_unit == "hz":
            return 2 * math.pi * self.deformation_susceptibility
        return self.deformation_susceptibility

    def with_(self, **changes) -> "DeviceConfig":
        return replace(self, **changes)


# --------------------------------------------------------------------------
# clamped-clamped eigenvalues


def _clamped_residual(alpha: float) -> float:
    # cos(a) cosh(a) = 1 divided through by cosh(a)
    return math.cos(alpha) - 1.0 / math.cosh(alpha) if alpha < 700 else math.cos(alpha)


def _clamped_residual_prime(alpha: float) -> float:
    if alpha >= 700:
        return -math.sin(alpha)
    return -math.sin(alpha) + math.tanh(alpha) / math.cosh(alpha)


def clamped_alphas(n_max: int, max_iter: int = 100) -> np.ndarray:
    """First ``n_max`` positive roots of ``cos(a) cosh(a) = 1``.

    Each root is bracketed in ``[n pi, (n + 1) pi]`` around the asymptote
    ``(n + 1/2) pi`` and refined by safeguarded Newton iteration.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    roots = np.empty(n_max)
    for n in range(1, n_max + 1):
        lo, hi = n * math.pi, (n + 1) * math.pi
        f_lo = _clamped_residual(lo)
        x = (n + 0.5) * math.pi
        for _ in range(max_iter):
            fx = _clamped_residual(x)
            if abs(fx) < 1e-15:
                break
            if (fx < 0) == (f_lo < 0):
                lo, f_lo = x, fx
            else:
                hi = x
            step = fx / _clamped_residual_prime(x)
            x_new = x - step
            if not lo < x_new < hi:
                x_new = 0.5 * (lo + hi)
            if abs(x_new - x) < 1e-15 * x:
                x = x_new
                break
            x = x_new
        else:
            raise SolverError(f"clamped root {n} did not converge in {max_iter} iterations")
        if abs(_clamped_residual(x)) > 1e-10:
            raise SolverError(f"clamped root {n} has residual {_clamped_residual(x):.3e}")
        roots[n - 1] = x
    return roots


# --------------------------------------------------------------------------
# mode shapes


def _clamped_coefficients(alpha: float) -> tuple[float, float, float]:
    # psi(x) = cos x - r sin x + c1 exp(x - a) - c2 exp(-x), x = a s.
    # Algebraically identical to the cos/cosh - sin/sinh combination but never
    # forms cosh(a) explicitly.
    e = math.exp(-alpha)
    s, c = math.sin(alpha), math.cos(alpha)
    den = 1 - e * e - 2 * s * e
    r = (1 + e * e - 2 * c * e) / den
    c1 = (e + s - c) / den
    c2 = (1 - e * (s + c)) / den
    return r, c1, c2


def _clamped_shape(alpha: float, s: np.ndarray, order: int) -> np.ndarray:
    """Unnormalized clamped profile derivative of ``order`` (0-4) w.r.t. s."""
    r, c1, c2 = _clamped_coefficients(alpha)
    x = alpha * np.asarray(s, dtype=float)
    grow = c1 * np.exp(x - alpha)
    decay = c2 * np.exp(-x)
    cos, sin = np.cos(x), np.sin(x)
    k = order % 4
    if k == 0:
        trig = cos - r * sin
    elif k == 1:
        trig = -sin - r * cos
    elif k == 2:
        trig = -cos + r * sin
    else:
        trig = sin + r * cos
    return alpha**order * (trig + grow - (-1) ** order * decay)


def _pinned_shape(n: int, s: np.ndarray, order: int) -> np.ndarray:
    beta = n * math.pi
    x = beta * np.asarray(s, dtype=float)
    k = order % 4
    base = (np.sin(x), np.cos(x), -np.sin(x), -np.cos(x))[k]
    return beta**order * base


def _clamped_scale(alpha: float) -> float:
    """Signed factor that makes the clamped profile's extreme value +1."""
    grid = np.linspace(0.0, 1.0, max(4097, int(60 * alpha)))
    vals = _clamped_shape(alpha, grid, 0)
    i = int(np.argmax(np.abs(vals)))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        lambda t: -abs(float(_clamped_shape(alpha, np.array(t), 0))),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-13},
    )
    peak = float(_clamped_shape(alpha, np.array(res.x), 0))
    if abs(peak) < abs(vals[i]):
        peak = float(vals[i])
    return 1.0 / peak


@dataclass(frozen=True)
class ModeShape:
    """Analytic, unit-maximum profile of one flexural mode."""

    boundary: Boundary
    n: int
    eigen: float  # alpha_n (clamped) or beta_n = n pi (pinned)
    scale: float = 1.0

    @classmethod
    def build(cls, boundary: Boundary, n: int, alpha: float | None = None) -> "ModeShape":
        if n < 1:
            raise ValueError("mode index starts at 1")
        if boundary == "pinned":
            return cls("pinned", n, n * math.pi, 1.0)
        if alpha is None:
            alpha = float(clamped_alphas(n)[-1])
        return cls("clamped", n, alpha, _clamped_scale(alpha))

    def __call__(self, s, order: int = 0) -> np.ndarray:
        if self.boundary == "pinned":
            return _pinned_shape(self.n, s, order)
        return self.scale * _clamped_shape(self.eigen, s, order)


def mode_profile(n: int, device: DeviceConfig, z=None, grid_points: int = DEFAULT_GRID_POINTS):
    """Sample ``(psi_n, dpsi_n/ds)`` at positions ``z`` (metres).

    Without ``z`` a uniform grid of ``grid_points`` over ``[0, L]`` is used.
    """
    shape = ModeShape.build(device.boundary_model, n)
    if z is None:
        s = np.linspace(0.0, 1.0, grid_points)
    else:
        s = np.asarray(z, dtype=float) / device.length
    return shape(s, 0), shape(s, 1)


# --------------------------------------------------------------------------
# spectrum


def wavenumber(shape: ModeShape, s: np.ndarray, normalization: Literal["max", "l2"] = "max") -> float:
    """``[int psi psi'''' ds]**(1/4)`` by Simpson quadrature on grid ``s``."""
    psi = shape(s, 0)
    integrand = psi * shape(s, 4)
    value = integrate.simpson(integrand, x=s)
    if normalization == "l2":
        value /= integrate.simpson(psi * psi, x=s)
    if not value > 0:
        raise NumericalError(f"non-positive int psi psi'''' ({value:.3e}) for mode {shape.n}")
    return value**0.25


@dataclass
class ModeSpectrum:
    """Retained flexural modes of one device."""

    device: DeviceConfig
    frequency_model: str
    shapes: list[ModeShape]
    omega: np.ndarray  # rad/s
    gamma: np.ndarray  # rad/s
    mass: np.ndarray  # kg
    x_zp: np.ndarray  # m
    wavenumbers: np.ndarray
    s: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)  # (n_max, grid)
    dpsi: np.ndarray = field(repr=False)  # d psi / ds

    @property
    def n_max(self) -> int:
        return len(self.shapes)

    @property
    def boundary(self) -> str:
        return self.device.boundary_model

    @property
    def eigen(self) -> np.ndarray:
        return np.array([sh.eigen for sh in self.shapes])

    @property
    def z(self) -> np.ndarray:
        return self.s * self.device.length

    def slope(self, z, modes=None) -> np.ndarray:
        """Analytic ``dpsi/ds`` at positions ``z`` (m); shape (len(z), n_modes)."""
        s = np.atleast_1d(np.asarray(z, dtype=float)) / self.device.length
        idx = range(self.n_max) if modes is None else [m - 1 for m in modes]
        return np.stack([self.shapes[i](s, 1) for i in idx], axis=-1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "alpha_or_beta", "omega_rad_s", "gamma_rad_s", "m_eff_kg", "x_zp_m"])
            for i, sh in enumerate(self.shapes):
                w.writerow(
                    [sh.n]
                    + [f"{v:.17g}" for v in (sh.eigen, self.omega[i], self.gamma[i], self.mass[i], self.x_zp[i])]
                )


def mode_frequencies(
    device: DeviceConfig,
    n_max: int = 75,
    grid_points: int = DEFAULT_GRID_POINTS,
    frequency_model: FrequencyModel = "profile_integral",
) -> ModeSpectrum:
    """Frequencies, effective masses and zero-point amplitudes of modes 1..n_max."""
    if frequency_model not in ("profile_integral", "eigen"):
        raise ValueError(f"unknown frequency model {frequency_model!r}")
    if grid_points < 2000:
        raise ValueError("profile grid needs at least 2000 points")
    s = np.linspace(0.0, 1.0, grid_points)
    L = device.length
    rho_h = device.areal_density

    if device.boundary_model == "clamped":
        alphas = clamped_alphas(n_max)
        shapes = [ModeShape.build("clamped", n, a) for n, a in enumerate(alphas, start=1)]
        if frequency_model == "profile_integral":
            k = np.array([wavenumber(sh, s, "max") for sh in shapes])
        else:
            k = alphas.copy()
        omega = np.sqrt(device.bending_rigidity / rho_h) * (k / L) ** 2
    else:
        shapes = [ModeShape.build("pinned", n) for n in range(1, n_max + 1)]
        k = np.array([sh.eigen for sh in shapes])
        omega = math.sqrt(device.built_in_tension / rho_h) * k / L

    psi = np.stack([sh(s, 0) for sh in shapes])
    dpsi = np.stack([sh(s, 1) for sh in shapes])
    mass = rho_h * device.width * L * integrate.simpson(psi**2, x=s, axis=1)
    x_zp = np.sqrt(HBAR / (2 * mass * omega))
    return ModeSpectrum(
        device=device,
        frequency_model=frequency_model,
        shapes=shapes,
        omega=omega,
        gamma=omega / device.quality_factor,
        mass=mass,
        x_zp=x_zp,
        wavenumbers=k,
        s=s,
        psi=psi,
        dpsi=dpsi,
    )
