"""Entanglement and metrology functionals for qubit registers.

All functions accept a :class:`~strainqubits.liouville.DensityMatrix` or a
plain array; plain arrays are assumed to be qubit registers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from itertools import combinations

import numpy as np
from scipy.linalg import expm
from scipy.stats import unitary_group

from .liouville import DensityMatrix, partial_trace

QFI_CUTOFF = 1e-12

_SY2 = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])


def _unpack(rho, dims=None):
    if isinstance(rho, DensityMatrix):
        return rho.data, tuple(rho.dims)
    rho = np.asarray(rho, dtype=complex)
    if dims is None:
        dims = (2,) * int(round(np.log2(rho.shape[0])))
    return rho, tuple(dims)


def _check_partition(subset, n):
    subset = sorted(set(int(k) for k in subset))
    if not subset or len(subset) >= n or subset[0] < 0 or subset[-1] >= n:
        raise ValueError(f"partition {subset} is not a proper non-empty subset of {n} subsystems")
    return subset


# --------------------------------------------------------------------------
# bipartite


def partial_transpose(rho, subset, dims) -> np.ndarray:
    n = len(dims)
    t = np.asarray(rho).reshape(tuple(dims) * 2)
    axes = list(range(2 * n))
    for k in subset:
        axes[k], axes[n + k] = axes[n + k], axes[k]
    d = int(np.prod(dims))
    return t.transpose(axes).reshape(d, d)


def log_negativity(rho, subset=(0,), dims=None) -> float:
    """log2 of the trace norm of the partial transpose over ``subset``."""
    rho, dims = _unpack(rho, dims)
    subset = _check_partition(subset, len(dims))
    pt = partial_transpose(rho, subset, dims)
    norm = np.abs(np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))).sum()
    return max(0.0, float(np.log2(norm)))


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit state."""
    rho, _ = _unpack(rho)
    if rho.shape != (4, 4):
        raise ValueError("concurrence needs a two-qubit density matrix")
    flipped = _SY2 @ rho.conj() @ _SY2
    ev = np.linalg.eigvals(rho @ flipped)
    s = np.sort(np.sqrt(np.clip(ev.real, 0.0, None)))[::-1]
    return float(max(0.0, s[0] - s[1] - s[2] - s[3]))


def pure_tangle(rho_focus) -> float:
    """One-vs-rest tangle of a pure state from its single-qubit marginal."""
    return float(np.clip(4.0 * np.linalg.det(rho_focus).real, 0.0, 1.0))


# --------------------------------------------------------------------------
# convex roof of the one-vs-rest tangle


@dataclass
class RoofEstimate:
    value: float
    median: float
    restarts: list = field(repr=False, default_factory=list)

    @property
    def spread(self) -> float:
        return self.median - self.value


def _roof_objective(U, V, m):
    """Average tangle of the decomposition ``w_j = sum_i U_ji v_i`` and its gradient in conj(U)."""
    W = V @ U.T  # columns are unnormalized members
    k = W.shape[1]
    M = W.T.reshape(k, 2, m)
    R = M @ M.conj().transpose(0, 2, 1)
    p = np.einsum("jaa->j", R).real
    det = (R[:, 0, 0] * R[:, 1, 1] - R[:, 0, 1] * R[:, 1, 0]).real
    ok = p > 1e-14
    f = 4.0 * np.sum(det[ok] / p[ok])
    adj = np.empty_like(R)
    adj[:, 0, 0], adj[:, 1, 1] = R[:, 1, 1], R[:, 0, 0]
    adj[:, 0, 1], adj[:, 1, 0] = -R[:, 0, 1], -R[:, 1, 0]
    g = np.zeros_like(M)
    g[ok] = 4.0 * (adj[ok] @ M[ok] / p[ok, None, None] - det[ok, None, None] * M[ok] / p[ok, None, None] ** 2)
    g = g.reshape(k, -1)  # rows g_j
    return f, g @ V.conj()


def _descend(U, V, m, iterations, gtol):
    f, E = _roof_objective(U, V, m)
    step = 1.0
    for _ in range(iterations):
        A = E @ U.conj().T
        A = A - A.conj().T
        gnorm = np.linalg.norm(A)
        if gnorm < gtol:
            break
        while step > 1e-12:
            trial = expm(-step * A) @ U
            ft, Et = _roof_objective(trial, V, m)
            if ft <= f - 1e-4 * step * gnorm**2:
                U, f, E = trial, ft, Et
                step *= 2.0
                break
            step *= 0.5
        else:
            break
    return f, U


def convex_roof_tangle(
    rho,
    focus: int,
    dims=None,
    restarts: int = 6,
    iterations: int = 300,
    seed: int = 0,
    extra_members: int = 0,
    gtol: float = 1e-9,
) -> RoofEstimate:
    """Convex-roof estimate of the tangle between qubit ``focus`` and the rest.

    Decompositions are parametrized by isometries acting on the weighted
    eigenvectors of ``rho`` and optimized by Riemannian descent.  Restart 0
    starts from the eigendecomposition itself, the others from Haar-random
    unitaries drawn from ``seed``.
    """
    rho, dims = _unpack(rho, dims)
    n = len(dims)
    order = [focus] + [k for k in range(n) if k != focus]
    d = rho.shape[0]
    t = rho.reshape(tuple(dims) * 2).transpose(order + [n + k for k in order]).reshape(d, d)
    vals, vecs = np.linalg.eigh(0.5 * (t + t.conj().T))
    keep = vals > 1e-13 * max(vals.max(), 1e-300)
    V = vecs[:, keep] * np.sqrt(vals[keep])
    r = V.shape[1]
    m = d // 2
    if r == 1:
        v = V[:, 0].reshape(2, m)
        return RoofEstimate(pure_tangle(v @ v.conj().T), pure_tangle(v @ v.conj().T), [])
    k = r + extra_members
    rng = np.random.default_rng(seed)
    results = []
    for trial in range(restarts):
        if trial == 0:
            U = np.eye(k, dtype=complex)
        else:
            U = unitary_group.rvs(k, random_state=rng)
        U = U[:, :r]
        f, _ = _descend(U, V, m, iterations, gtol)
        results.append(float(f))
        if f < 1e-13:  # the tangle is non-negative: nothing left to find
            break
    results = np.clip(results, 0.0, 1.0)
    return RoofEstimate(float(results.min()), float(np.median(results)), list(results))


# --------------------------------------------------------------------------
# genuine multipartite residual


@dataclass
class GMEResult:
    value: float
    focus: int
    per_focus: dict
    low_confidence: bool = False
    spread: float = 0.0


def _is_pure(rho, tol=1e-10) -> bool:
    return abs(np.trace(rho @ rho).real - 1.0) < tol


def _focus_residual(rho, dims, focus, pure, roof_kwargs, tol, stats) -> float:
    n = len(dims)
    others = [k for k in range(n) if k != focus]
    cache: dict[tuple, float] = {}

    def tangle(subset):
        sites = sorted((focus,) + subset)
        if len(sites) == n and pure:
            return pure_tangle(partial_trace(rho, dims, [focus]))
        red = partial_trace(rho, dims, sites) if len(sites) < n else rho
        if len(sites) == 2:
            return concurrence(red) ** 2
        local = sites.index(focus)
        if _is_pure(red):
            return pure_tangle(partial_trace(red, (2,) * len(sites), [local]))
        est = convex_roof_tangle(red, local, (2,) * len(sites), **roof_kwargs)
        stats.append(est.spread)
        return est.value

    for size in range(1, n):
        for subset in combinations(others, size):
            lower = sum(cache[s] for r in range(1, size) for s in combinations(subset, r))
            cache[subset] = tangle(subset) - lower
    return cache[tuple(others)]


def gme_residual(rho, dims=None, tol: float = 1e-3, max_qubits: int = 7, **roof_kwargs) -> GMEResult:
    """Genuine multipartite residual tangle, minimized over the focus qubit.

    Pure inputs take the exact one-vs-rest path; mixed marginals of three or
    more qubits go through :func:`convex_roof_tangle`.  A result whose roof
    estimates disagree across restarts by more than ``tol`` is flagged.
    """
    rho, dims = _unpack(rho, dims)
    n = len(dims)
    if n > max_qubits:
        raise ValueError(f"multipartite residual limited to {max_qubits} qubits")
    if n < 2:
        raise ValueError("need at least two qubits")
    pure = _is_pure(rho)
    stats: list[float] = []
    per_focus = {f: _focus_residual(rho, dims, f, pure, roof_kwargs, tol, stats) for f in range(n)}
    focus = min(per_focus, key=per_focus.get)
    spread = max(stats, default=0.0)
    value = float(np.clip(per_focus[focus], 0.0, 1.0))
    return GMEResult(value, focus, per_focus, spread > tol, spread)


# --------------------------------------------------------------------------
# quantum Fisher information


@dataclass
class QFIResult:
    value: float
    n: int
    direction: np.ndarray | None = None
    axes: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return self.value / self.n


def collective_spins(n: int):
    """(J_x, J_y, J_z) = 1/2 sum_k sigma_k for ``n`` qubits, dense."""
    paulis = (
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]]),
        np.diag([1.0, -1.0]).astype(complex),
    )
    eye = np.eye(2)
    out = []
    for s in paulis:
        total = sum(reduce(np.kron, [s if j == k else eye for j in range(n)]) for k in range(n))
        out.append(0.5 * total)
    return tuple(out)


def _qfi_weights(rho, cutoff):
    vals, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    vals = np.clip(vals, 0.0, None)
    s = vals[:, None] + vals[None, :]
    w = np.zeros_like(s)
    mask = s > cutoff
    w[mask] = 2.0 * (vals[:, None] - vals[None, :])[mask] ** 2 / s[mask]
    return w, vecs


def qfi(rho, observable, cutoff: float = QFI_CUTOFF) -> float:
    rho, _ = _unpack(rho)
    w, vecs = _qfi_weights(rho, cutoff)
    o = vecs.conj().T @ np.asarray(observable) @ vecs
    return float(np.sum(w * np.abs(o) ** 2))


def qfi_optimal(rho, cutoff: float = QFI_CUTOFF) -> QFIResult:
    """Maximize the QFI of ``n . J`` over unit vectors ``n``."""
    rho, dims = _unpack(rho)
    n = len(dims)
    w, vecs = _qfi_weights(rho, cutoff)
    js = [vecs.conj().T @ j @ vecs for j in collective_spins(n)]
    F = np.empty((3, 3))
    for a in range(3):
        for b in range(a, 3):
            F[a, b] = F[b, a] = np.sum(w * (js[a] * js[b].T).real)
    vals, vecs3 = np.linalg.eigh(F)
    direction = vecs3[:, -1]
    direction = direction * np.sign(direction[np.argmax(np.abs(direction))])
    axes = {"Jx": F[0, 0], "Jy": F[1, 1], "Jz": F[2, 2]}
    return QFIResult(float(vals[-1]), n, direction, axes)


def ghz_state(n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return np.outer(psi, psi.conj())


def w_state(n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    for k in range(n):
        psi[1 << k] = 1 / np.sqrt(n)
    return np.outer(psi, psi.conj())
