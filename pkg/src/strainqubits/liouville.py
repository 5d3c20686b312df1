"""Hamiltonians, Liouvillians and steady states.

Conventions
-----------
* Qubit basis ``{|e>, |g>}`` with ``sigma_z = diag(1, -1)``; qubit 0 is the
  leftmost tensor factor, boson modes (if any) follow the qubits.
* Superoperators act on column-stacked density matrices,
  ``vec(A X B) = (B^T kron A) vec(X)``.
* Dissipators are written ``D_o[rho] = 2 o rho o^+ - o^+ o rho - rho o^+ o``.
  The qubit decay term ``(1/2) kappa D_{sigma^-}`` is scaled by the decay
  convention: ``"half"`` (default) gives a population decay rate ``kappa/2``,
  ``"full"`` gives ``kappa``.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply, splu

from .coupling import CouplingMatrices, QubitEnsemble, thermal_occupation

DECAY_CONVENTIONS = {"half": 0.5, "full": 1.0}
DEFAULT_DECAY_CONVENTION = "half"
MAX_QUBITS = 10
MAX_FULL_DIM = 4096

SZ = sp.csr_matrix(np.diag([1.0, -1.0]).astype(complex))
SX = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex))
SY = sp.csr_matrix(np.array([[0, -1j], [1j, 0]], dtype=complex))
SM = sp.csr_matrix(np.array([[0, 0], [1, 0]], dtype=complex))  # |g><e|


class SizeError(ValueError):
    pass


class LindbladFormError(ValueError):
    pass


class MultipleSteadyStatesError(RuntimeError):
    pass


class ConditioningError(RuntimeError):
    pass


class CutoffError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# density matrices

_MAGIC = b"SQDM"
_VERSION = 1


@dataclass
class DensityMatrix:
    data: np.ndarray
    dims: tuple = ()

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if not self.dims:
            n = int(round(np.log2(self.data.shape[0])))
            self.dims = (2,) * n
        self.dims = tuple(int(d) for d in self.dims)
        if int(np.prod(self.dims)) != self.data.shape[0]:
            raise ValueError("dims do not match the matrix size")

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def check(self, atol: float = 1e-10, psd_tol: float = 1e-8) -> None:
        herm = np.abs(self.data - self.data.conj().T).max()
        if herm > atol:
            raise ValueError(f"not Hermitian (max deviation {herm:.2e})")
        tr = np.trace(self.data).real
        if abs(tr - 1) > atol:
            raise ValueError(f"trace {tr} != 1")
        lo = np.linalg.eigvalsh(self.data).min()
        if lo < -psd_tol:
            raise ValueError(f"negative eigenvalue {lo:.2e}")

    def ptrace(self, keep) -> "DensityMatrix":
        return DensityMatrix(partial_trace(self.data, self.dims, keep), tuple(self.dims[k] for k in sorted(keep)))

    def expect(self, op) -> complex:
        op = op.toarray() if sp.issparse(op) else np.asarray(op)
        return complex(np.trace(op @ self.data))

    # serialization ----------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# dims: {','.join(map(str, self.dims))}\n")
            fh.write("row,col,re,im\n")
            for (i, j), v in np.ndenumerate(self.data):
                fh.write(f"{i},{j},{v.real:.17g},{v.imag:.17g}\n")

    @classmethod
    def from_csv(cls, path) -> "DensityMatrix":
        with open(path) as fh:
            dims = tuple(int(x) for x in fh.readline().split(":", 1)[1].split(","))
            fh.readline()
            d = int(np.prod(dims))
            data = np.zeros((d, d), dtype=complex)
            for line in fh:
                i, j, re, im = line.strip().split(",")
                data[int(i), int(j)] = complex(float(re), float(im))
        return cls(data, dims)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(struct.pack("<HH", _VERSION, len(self.dims)))
        buf.write(struct.pack(f"<{len(self.dims)}I", *self.dims))
        buf.write(np.ascontiguousarray(self.data, dtype="<c16").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DensityMatrix":
        if blob[:4] != _MAGIC:
            raise ValueError("not a density-matrix dump")
        version, ndims = struct.unpack_from("<HH", blob, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported dump version {version}")
        dims = struct.unpack_from(f"<{ndims}I", blob, 8)
        d = int(np.prod(dims))
        data = np.frombuffer(blob, dtype="<c16", offset=8 + 4 * ndims, count=d * d).reshape(d, d)
        return cls(data.copy(), dims)


def partial_trace(rho, dims, keep) -> np.ndarray:
    rho = np.asarray(rho)
    dims = list(dims)
    keep = sorted(keep)
    n = len(dims)
    t = rho.reshape(dims + dims)
    traced = [k for k in range(n) if k not in keep]
    for count, k in enumerate(traced):
        ax = k - count
        t = np.trace(t, axis1=ax, axis2=ax + t.ndim // 2)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(d, d)


# --------------------------------------------------------------------------
# operator helpers


def embed(op, k: int, dims) -> sp.csr_matrix:
    """Place ``op`` on subsystem ``k`` of a tensor product with ``dims``."""
    mats = [sp.identity(d, dtype=complex, format="csr") for d in dims]
    mats[k] = sp.csr_matrix(op, dtype=complex)
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


def destroy(n: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n, dtype=float)), 1, format="csr", dtype=complex)


def spre(a) -> sp.csr_matrix:
    return sp.kron(sp.identity(a.shape[0], dtype=complex), a, format="csr")


def spost(a) -> sp.csr_matrix:
    return sp.kron(a.T, sp.identity(a.shape[0], dtype=complex), format="csr")


def commutator_super(h) -> sp.csr_matrix:
    """Superoperator of ``-i [h, .]``."""
    return (-1j * (spre(h) - spost(h))).tocsr()


def lindblad_super(c, rate: float = 1.0) -> sp.csr_matrix:
    """``rate * (c . c^+ - 1/2 {c^+ c, .})``, i.e. ``rate/2 * D_c``."""
    cd = c.conj().T.tocsr()
    cdc = (cd @ c).tocsr()
    d = c.shape[0]
    eye = sp.identity(d, dtype=complex, format="csr")
    out = sp.kron(c.conj(), c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)
    return (rate * out).tocsr()


@dataclass
class Superoperator:
    matrix: sp.csr_matrix
    dims: tuple
    parts: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def __matmul__(self, vec):
        return self.matrix @ vec

    def apply(self, rho) -> np.ndarray:
        d = self.dim
        return (self.matrix @ np.asarray(rho).reshape(-1, order="F")).reshape(d, d, order="F")

    def __add__(self, other: "Superoperator") -> "Superoperator":
        parts = dict(self.parts)
        for k, v in other.parts.items():
            parts[k] = parts[k] + v if k in parts else v
        return Superoperator((self.matrix + other.matrix).tocsr(), self.dims, parts)


def _assemble(parts: dict, dims) -> Superoperator:
    total = reduce(lambda a, b: a + b, parts.values())
    return Superoperator(total.tocsr(), tuple(dims), parts)


# --------------------------------------------------------------------------
# reduced qubit model


def _check_size(n: int, max_qubits: int) -> None:
    if n > max_qubits:
        raise SizeError(f"{n} qubits exceed the cap of {max_qubits}")


def _as_matrices(couplings):
    if isinstance(couplings, CouplingMatrices):
        return np.asarray(couplings.G), np.asarray(couplings.Gamma)
    G, Gamma = couplings
    return np.asarray(G, dtype=float), np.asarray(Gamma, dtype=float)


def pauli(n: int):
    """Lists of embedded (sx, sy, sz, sm) for ``n`` qubits."""
    dims = (2,) * n
    return [[embed(o, k, dims) for k in range(n)] for o in (SX, SY, SZ, SM)]


def build_h_eff(ensemble: QubitEnsemble, G, detuning=None, max_qubits: int = MAX_QUBITS) -> sp.csr_matrix:
    """``1/2 sum (D_k sz_k + O_k sx_k) - 1/4 sum_jk G_jk sz_j sz_k``."""
    n = ensemble.n
    _check_size(n, max_qubits)
    G = np.asarray(G, dtype=float)
    delta = ensemble.detuning if detuning is None else np.asarray(detuning, dtype=float)
    sx, _, sz, _ = pauli(n)
    d = 2**n
    h = sp.csr_matrix((d, d), dtype=complex)
    for k in range(n):
        h = h + 0.5 * (delta[k] * sz[k] + ensemble.rabi[k] * sx[k])
    # sz_j sz_k is diagonal: accumulate it directly
    z = np.stack([sz[k].diagonal().real for k in range(n)])
    h = h + sp.diags(-0.25 * np.einsum("jk,ja,ka->a", G, z, z)).astype(complex)
    return h.tocsr()


def dephasing_operators(Gamma, n: int, tol: float = 1e-10):
    """Jump operators ``sqrt(g_a) sum_k v_ak sz_k`` from the eigensystem of Gamma."""
    Gamma = 0.5 * (Gamma + Gamma.T)
    vals, vecs = np.linalg.eigh(Gamma)
    scale = max(np.abs(vals).max(initial=0.0), 1e-300)
    if vals.min(initial=0.0) < -tol * scale:
        raise LindbladFormError(
            f"dissipative coupling matrix is not positive semidefinite (eigenvalue {vals.min():.3e})"
        )
    _, _, sz, _ = pauli(n)
    ops = []
    for g, v in zip(vals, vecs.T):
        if g <= tol * scale:
            continue
        op = reduce(lambda a, b: a + b, (v[k] * sz[k] for k in range(n)))
        ops.append((g, op.tocsr()))
    return ops


def build_liouvillian_reduced(
    ensemble: QubitEnsemble,
    couplings,
    decay_convention: str = DEFAULT_DECAY_CONVENTION,
    detuning=None,
    max_qubits: int = MAX_QUBITS,
) -> Superoperator:
    """Generator of the phonon-eliminated qubit master equation."""
    n = ensemble.n
    _check_size(n, max_qubits)
    G, Gamma = _as_matrices(couplings)
    factor = DECAY_CONVENTIONS[decay_convention]
    h = build_h_eff(ensemble, G, detuning, max_qubits)
    _, _, _, sm = pauli(n)
    d2 = 4**n
    parts = {"hamiltonian": commutator_super(h)}
    decay = sp.csr_matrix((d2, d2), dtype=complex)
    for k in range(n):
        decay = decay + lindblad_super(sm[k], factor * ensemble.kappa[k])
    parts["decay"] = decay.tocsr()
    deph = sp.csr_matrix((d2, d2), dtype=complex)
    for g, op in dephasing_operators(Gamma, n):
        deph = deph + lindblad_super(op, g)
    parts["dephasing"] = deph.tocsr()
    return _assemble(parts, (2,) * n)


def detuning_generators(n: int) -> list[sp.csr_matrix]:
    """Superoperators ``-i [sz_k / 2, .]``; adding ``d_k`` times each shifts detunings."""
    _, _, sz, _ = pauli(n)
    return [commutator_super(0.5 * z) for z in sz]


# --------------------------------------------------------------------------
# steady state


def _trace_row(d: int) -> sp.csr_matrix:
    cols = np.arange(d) * (d + 1)
    return sp.csr_matrix((np.ones(d, dtype=complex), (np.zeros(d, dtype=int), cols)), shape=(1, d * d))


def _solve_with_row(matrix: sp.csr_matrix, d: int, row: int) -> np.ndarray:
    m = matrix.tolil(copy=True)
    m[row, :] = _trace_row(d)
    rhs = np.zeros(d * d, dtype=complex)
    rhs[row] = 1.0
    lu = splu(m.tocsc(), permc_spec="COLAMD")
    return lu.solve(rhs)


AUTO_UNIQUENESS_DIM = 32


def steady_state(L, dims=None, uniqueness_check="auto", psd_tol: float = 1e-6) -> DensityMatrix:
    """Unique stationary state of ``L`` by sparse LU with a trace row.

    One redundant population equation is replaced by ``Tr rho = 1``.  With
    ``uniqueness_check`` a second solve replaces a different population row;
    a unique steady state gives the same answer both times.  ``"auto"`` does
    this for Hilbert-space dimensions up to ``AUTO_UNIQUENESS_DIM``; larger
    systems rely on the factorization reporting a singular matrix.
    """
    if isinstance(L, Superoperator):
        dims, matrix = L.dims, L.matrix
    else:
        matrix = sp.csr_matrix(L)
    d = int(round(np.sqrt(matrix.shape[0])))
    if dims is None:
        dims = (2,) * int(round(np.log2(d)))
    if uniqueness_check == "auto":
        uniqueness_check = d <= AUTO_UNIQUENESS_DIM
    try:
        vec = _solve_with_row(matrix, d, 0)
        if uniqueness_check and d > 1:
            other = _solve_with_row(matrix, d, (d - 1) * (d + 1))
    except RuntimeError as exc:  # exactly singular factor
        raise MultipleSteadyStatesError(f"steady-state system is singular: {exc}") from exc
    if not np.all(np.isfinite(vec)):
        raise MultipleSteadyStatesError("steady-state solve produced non-finite values")
    if uniqueness_check and d > 1:
        if not np.all(np.isfinite(other)) or np.abs(other - vec).max() > 1e-6 * max(np.abs(vec).max(), 1.0):
            raise MultipleSteadyStatesError("the Liouvillian has more than one stationary state")
    rho = vec.reshape(d, d, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -psd_tol:
        raise ConditioningError(f"steady state has eigenvalue {lo:.2e}; system is ill-conditioned")
    return DensityMatrix(rho, dims)


def steady_state_dense(L: Superoperator, tol: float = 1e-9) -> DensityMatrix:
    """Cross-check path: null vector of the dense generator from an SVD."""
    m = L.matrix.toarray()
    _, s, vh = np.linalg.svd(m)
    if np.sum(s < tol * s.max()) > 1:
        raise MultipleSteadyStatesError("the Liouvillian has more than one stationary state")
    d = L.dim
    rho = vh[-1].conj().reshape(d, d, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real, L.dims)


def residual(L: Superoperator, rho) -> float:
    """``||L vec(rho)|| / ||L||_F``."""
    vec = np.asarray(rho).reshape(-1, order="F")
    return float(np.linalg.norm(L.matrix @ vec) / sp.linalg.norm(L.matrix))


def null_space_dimension(L: Superoperator, tol: float = 1e-9) -> int:
    """Dense count of (near-)zero singular values; small systems only."""
    s = np.linalg.svd(L.matrix.toarray(), compute_uv=False)
    return int(np.sum(s < tol * s.max()))


def propagate(L: Superoperator, rho0, t: float) -> np.ndarray:
    d = L.dim
    vec = expm_multiply(L.matrix * t, np.asarray(rho0, dtype=complex).reshape(-1, order="F"))
    return vec.reshape(d, d, order="F")


# --------------------------------------------------------------------------
# explicit qubit + boson model


@dataclass
class BosonModes:
    """Explicit phonon modes: frequencies, damping, occupations (M,) and couplings (N, M)."""

    omega: np.ndarray
    gamma: np.ndarray
    nbar: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self):
        self.omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        m = self.omega.size
        self.gamma = np.broadcast_to(np.asarray(self.gamma, dtype=float), (m,)).copy()
        self.nbar = np.broadcast_to(np.asarray(self.nbar, dtype=float), (m,)).copy()
        self.lambdas = np.asarray(self.lambdas, dtype=float).reshape(-1, m)

    @property
    def m(self) -> int:
        return self.omega.size

    @classmethod
    def from_spectrum(cls, spectrum, ensemble: QubitEnsemble, retained, temperature=None) -> "BosonModes":
        from .coupling import coupling_rate

        retained = list(retained)
        T = spectrum.device.temperature if temperature is None else temperature
        idx = [m - 1 for m in retained]
        omega = spectrum.omega[idx]
        return cls(
            omega=omega,
            gamma=spectrum.gamma[idx],
            nbar=thermal_occupation(omega, T),
            lambdas=coupling_rate(spectrum, ensemble.positions, retained),
        )

    def effective(self):
        """(G, Gamma) these modes produce after elimination."""
        from .coupling import phonon_matrices

        G, Gamma, _ = phonon_matrices(self.lambdas, self.omega, self.gamma, self.nbar)
        return G, Gamma


def build_full_model(
    ensemble: QubitEnsemble,
    modes: BosonModes,
    fock_cutoffs,
    decay_convention: str = DEFAULT_DECAY_CONVENTION,
    residual_couplings=None,
    max_dim: int = MAX_FULL_DIM,
) -> Superoperator:
    """Liouvillian of qubits coupled to explicit, thermally damped boson modes.

    ``residual_couplings`` optionally adds the (G, Gamma) of modes that are not
    kept explicitly.
    """
    n = ensemble.n
    cutoffs = [int(c) for c in np.broadcast_to(fock_cutoffs, (modes.m,))]
    dims = (2,) * n + tuple(cutoffs)
    total = int(np.prod(dims))
    if total > max_dim:
        raise SizeError(f"full model dimension {total} exceeds {max_dim}")
    factor = DECAY_CONVENTIONS[decay_convention]
    sx = [embed(SX, k, dims) for k in range(n)]
    sz = [embed(SZ, k, dims) for k in range(n)]
    sm = [embed(SM, k, dims) for k in range(n)]
    b = [embed(destroy(c), n + m, dims) for m, c in enumerate(cutoffs)]

    h = sp.csr_matrix((total, total), dtype=complex)
    for k in range(n):
        h = h + 0.5 * (ensemble.detuning[k] * sz[k] + ensemble.rabi[k] * sx[k])
    for m in range(modes.m):
        bd = b[m].conj().T
        h = h + modes.omega[m] * (bd @ b[m])
        x = b[m] + bd
        for k in range(n):
            h = h + 0.5 * modes.lambdas[k, m] * (sz[k] @ x)
    G_res = Gamma_res = None
    if residual_couplings is not None:
        G_res, Gamma_res = _as_matrices(residual_couplings)
        for j in range(n):
            for k in range(n):
                h = h - 0.25 * G_res[j, k] * (sz[j] @ sz[k])

    parts = {"hamiltonian": commutator_super(h.tocsr())}
    decay = reduce(lambda a, c: a + c, (lindblad_super(sm[k], factor * ensemble.kappa[k]) for k in range(n)))
    parts["decay"] = decay.tocsr()
    boson = None
    for m in range(modes.m):
        g, nb = modes.gamma[m], modes.nbar[m]
        term = lindblad_super(b[m], g * (nb + 1))
        if nb > 0:
            term = term + lindblad_super(b[m].conj().T.tocsr(), g * nb)
        boson = term if boson is None else boson + term
    parts["boson"] = boson.tocsr()
    if Gamma_res is not None:
        vals, vecs = np.linalg.eigh(0.5 * (Gamma_res + Gamma_res.T))
        if vals.min() < -1e-10 * max(np.abs(vals).max(), 1e-300):
            raise LindbladFormError(f"residual Gamma not PSD (eigenvalue {vals.min():.3e})")
        deph = None
        for gval, v in zip(vals, vecs.T):
            if gval <= 0:
                continue
            op = reduce(lambda a, c: a + c, (v[k] * sz[k] for k in range(n))).tocsr()
            term = lindblad_super(op, gval)
            deph = term if deph is None else deph + term
        if deph is not None:
            parts["dephasing"] = deph.tocsr()
    return _assemble(parts, dims)


@dataclass
class FullModelState:
    rho: DensityMatrix
    qubits: DensityMatrix
    boson_populations: list
    cutoff_converged: bool

    def mean_occupation(self, m: int = 0) -> float:
        p = self.boson_populations[m]
        return float(np.dot(np.arange(p.size), p))


def full_model_steady_state(L: Superoperator, n_qubits: int, tol: float = 1e-6, strict: bool = True) -> FullModelState:
    """Steady state of :func:`build_full_model`; checks the Fock truncation."""
    rho = steady_state(L)
    dims = rho.dims
    qubits = rho.ptrace(range(n_qubits))
    pops = []
    for m in range(n_qubits, len(dims)):
        pops.append(np.real(np.diag(partial_trace(rho.data, dims, [m]))))
    converged = all(p[-1] < tol for p in pops)
    if strict and not converged:
        worst = max(range(len(pops)), key=lambda i: pops[i][-1])
        raise CutoffError(
            f"mode {worst} has population {pops[worst][-1]:.2e} in its top Fock level; "
            f"try a cutoff of {2 * dims[n_qubits + worst]}"
        )
    return FullModelState(rho, qubits, pops, converged)
