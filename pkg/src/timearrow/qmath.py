"""Dense complex linear algebra on small Hilbert spaces.

Operators and kets are plain complex ``numpy`` arrays (2-D and 1-D).  The
only dedicated type is :class:`AntiUnitary`, which stores the unitary part
``V`` of ``Theta = V K`` with ``K`` complex conjugation in the computational
basis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import ValidationError

HERMITIAN_ATOL = 1e-12
UNITARY_ATOL = 1e-10
NORM_ATOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=complex)
    arr.setflags(write=False)
    return arr


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - dag(a)), initial=0.0) <= atol


def is_unitary(a: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return np.max(np.abs(dag(a) @ a - np.eye(a.shape[0])), initial=0.0) <= atol


def is_normalized(psi: np.ndarray, atol: float = NORM_ATOL) -> bool:
    return abs(np.vdot(psi, psi).real - 1.0) <= atol


def basis(dim: int, index: int) -> np.ndarray:
    """Computational basis ket ``|index>`` of a ``dim``-dimensional space."""
    if not 0 <= index < dim:
        raise ValidationError(f"basis index {index} out of range for dim {dim}")
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, np.conj(psi))


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of operators or kets (left to right)."""
    if not ops:
        raise ValidationError("tensor() needs at least one factor")
    return reduce(np.kron, (np.asarray(o, dtype=complex) for o in ops))


def matrix_exponential(h: np.ndarray, t: float) -> np.ndarray:
    """Return ``exp(-i h t)`` for Hermitian ``h`` via its eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h):
        raise ValidationError("matrix_exponential requires a Hermitian generator")
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1j * evals * t)) @ dag(evecs)


def expm_hermitian_batch(hs: np.ndarray, dt: float) -> np.ndarray:
    """``exp(-i H_k dt)`` for a stack of Hermitian matrices ``hs[k]``."""
    evals, evecs = np.linalg.eigh(hs)
    return (evecs * np.exp(-1j * evals * dt)[..., None, :]) @ dag(evecs)


@dataclass(frozen=True)
class AntiUnitary:
    """Anti-unitary map ``psi -> unitary @ conj(psi)``."""

    unitary: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=complex)
        if not is_unitary(u):
            raise ValidationError("AntiUnitary needs a unitary part")
        object.__setattr__(self, "unitary", _frozen(u))

    @classmethod
    def conjugation(cls, dim: int) -> AntiUnitary:
        """Pure complex conjugation in the computational basis."""
        return cls(np.eye(dim, dtype=complex))

    @property
    def dim(self) -> int:
        return self.unitary.shape[0]

    def dagger(self) -> AntiUnitary:
        # (V K)^dagger = K V^dagger = V^T K
        return AntiUnitary(self.unitary.T)

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        return apply_antiunitary(self, psi)

    def __matmul__(self, other: AntiUnitary) -> np.ndarray:
        """Composition of two anti-unitaries, which is a linear unitary."""
        # V1 K V2 K = V1 conj(V2)
        return self.unitary @ np.conj(other.unitary)


def apply_antiunitary(theta: AntiUnitary, psi: np.ndarray) -> np.ndarray:
    """Apply ``theta`` to a ket, or column-wise to a matrix of kets."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[0] != theta.dim:
        raise ValidationError(f"dimension mismatch: operator {theta.dim}, state {psi.shape[0]}")
    return theta.unitary @ np.conj(psi)


def conjugate_operator(theta: AntiUnitary, a: np.ndarray) -> np.ndarray:
    """Return ``Theta A Theta^dagger = V conj(A) V^dagger``."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape != (theta.dim, theta.dim):
        raise ValidationError(f"operator shape {a.shape} incompatible with anti-unitary of dim {theta.dim}")
    v = theta.unitary
    return v @ np.conj(a) @ dag(v)


def _keep_list(keep) -> list[int]:
    return sorted({int(k) for k in (keep if np.iterable(keep) else [keep])})


def partial_trace(rho: np.ndarray, dims, keep) -> np.ndarray:
    """Reduced operator on the subsystems listed in ``keep``.

    ``dims`` lists the subsystem dimensions in tensor order; kept subsystems
    stay in their original relative order.
    """
    rho = np.asarray(rho, dtype=complex)
    dims = [int(d) for d in dims]
    if any(d <= 0 for d in dims):
        raise ValidationError("subsystem dimensions must be positive")
    total = int(np.prod(dims))
    if rho.ndim != 2 or rho.shape != (total, total):
        raise ValidationError(f"operator of shape {rho.shape} does not match dims {dims}")
    keep = _keep_list(keep)
    if any(not 0 <= k < len(dims) for k in keep):
        raise ValidationError(f"keep indices {keep} out of range")
    n = len(dims)
    traced = [k for k in range(n) if k not in keep]
    t = rho.reshape(dims + dims)
    # contract each traced subsystem, highest index first so axes stay valid
    for k in sorted(traced, reverse=True):
        cur = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + cur)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(dk, dk)


def reduced_from_ket(psi: np.ndarray, dims, keep) -> np.ndarray:
    """Reduced density operator of a pure (possibly unnormalized) ket."""
    psi = np.asarray(psi, dtype=complex).reshape([int(d) for d in dims])
    keep = _keep_list(keep)
    traced = [k for k in range(psi.ndim) if k not in keep]
    psi = np.moveaxis(psi, keep + traced, list(range(psi.ndim)))
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    m = psi.reshape(dk, -1)
    return m @ dag(m)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = np.asarray(a) - np.asarray(b)
    diff = 0.5 * (diff + dag(diff))
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
