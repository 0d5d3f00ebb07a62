"""Dense complex linear algebra and entropies for small joint systems.

State vectors and matrices are plain ``numpy`` arrays of ``complex128``.
Tensor products follow ``numpy.kron`` ordering: the first factor is the most
significant index.  All entropies are in bits.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from . import tolerances
from .errors import DomainError

KET0 = np.array([1.0, 0.0], dtype=complex)
KET1 = np.array([0.0, 1.0], dtype=complex)
PLUS = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
MINUS = np.array([1.0, -1.0], dtype=complex) / math.sqrt(2.0)

Z_BASIS = (KET0, KET1)
X_BASIS = (PLUS, MINUS)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

MAX_DIM = 64


def basis_state(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def kron(*factors) -> np.ndarray:
    out = np.ones((1,), dtype=complex) if np.ndim(factors[0]) == 1 else np.ones((1, 1), dtype=complex)
    for f in factors:
        out = np.kron(out, f)
    return out


def is_unitary(u: np.ndarray, atol: float | None = None) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    atol = tolerances.get().unitary if atol is None else atol
    err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    return bool(err <= atol)


def is_hermitian(m: np.ndarray, atol: float | None = None) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    atol = tolerances.get().hermitian if atol is None else atol
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= atol)


def is_density(rho: np.ndarray, trace: float = 1.0) -> bool:
    """Hermitian, PSD and of the declared trace, all within tolerance."""
    tol = tolerances.get()
    if not is_hermitian(rho):
        return False
    if abs(np.trace(rho).real - trace) > tol.trace:
        return False
    return bool(hermitian_eigenvalues(rho)[-1] >= -tol.psd)


def _as_square(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise DomainError(f"dimension {a.shape[0]} exceeds supported maximum {MAX_DIM}")
    return a


def hermitian_eigenvalues(m) -> np.ndarray:
    """Real spectrum of a Hermitian matrix in descending order.

    Cyclic Jacobi sweeps with complex plane rotations; iteration stops once
    the Frobenius norm of the off-diagonal part drops below the
    ``jacobi_offdiag`` tolerance (scaled by the matrix norm when it exceeds 1).
    """
    a = _as_square(m)
    if not is_hermitian(a):
        raise DomainError("matrix is not Hermitian")
    a = 0.5 * (a + a.conj().T)
    n = a.shape[0]
    if n == 1:
        return np.array([a[0, 0].real])
    scale = max(1.0, float(np.linalg.norm(a)))
    target = tolerances.get().jacobi_offdiag * scale
    iu = np.triu_indices(n, 1)

    for _ in range(100):
        off = math.sqrt(2.0 * float(np.sum(np.abs(a[iu]) ** 2)))
        if off < target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r == 0.0:
                    continue
                phase = apq / r
                app, aqq = a[p, p].real, a[q, q].real
                theta = 0.5 * math.atan2(2.0 * r, aqq - app)
                c, s = math.cos(theta), math.sin(theta)
                # columns p, q of diag(1, conj(phase)) @ [[c, s], [-s, c]]
                rot = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                cols = a[:, [p, q]] @ rot
                a[:, p], a[:, q] = cols[:, 0], cols[:, 1]
                rows = rot.conj().T @ a[[p, q], :]
                a[p, :], a[q, :] = rows[0], rows[1]
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
    else:  # pragma: no cover - Jacobi converges quadratically at these sizes
        raise RuntimeError("Jacobi iteration did not converge")

    return np.sort(np.diag(a).real)[::-1]


def _plogp_sum(p: np.ndarray) -> float:
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log2(nz))) + 0.0


def shannon_entropy(dist: Iterable[float]) -> float:
    """H(p_1, ..., p_n) in bits with 0 log 0 = 0.

    Sub-normalized inputs are accepted and summed term by term.
    """
    p = np.asarray(list(dist) if not isinstance(dist, np.ndarray) else dist, dtype=float).ravel()
    if np.any(p < 0.0) or np.any(~np.isfinite(p)):
        raise DomainError("probabilities must be finite and non-negative")
    return max(_plogp_sum(p), 0.0)


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binary entropy argument {p!r} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def spectrum(rho) -> np.ndarray:
    """Eigenvalues of a density operator with tiny negative values clamped to zero."""
    lam = hermitian_eigenvalues(rho)
    floor = -tolerances.get().psd
    if lam[-1] < floor:
        raise DomainError(f"matrix is not positive semidefinite (eigenvalue {lam[-1]:.3e})")
    return np.clip(lam, 0.0, None)


def von_neumann_entropy(rho) -> float:
    return shannon_entropy(spectrum(rho))


def _check_dims(n: int, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise DomainError(f"subsystem dimensions must be positive, got {dims}")
    if math.prod(dims) != n:
        raise DomainError(f"dims {dims} do not multiply to matrix dimension {n}")
    return dims


def partial_trace(rho, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Reduced operator on the subsystems listed in ``keep`` (kept in ascending order)."""
    a = _as_square(rho)
    dims = _check_dims(a.shape[0], dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise DomainError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    traced = [k for k in range(len(dims)) if k not in keep]
    n = len(dims)
    t = a.reshape(dims + dims)
    # contract each traced subsystem's row index with its column index
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for k in traced:
        col[k] = row[k]
    out = "".join(row[k] for k in keep) + "".join(col[k] for k in keep)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = math.prod(dims[k] for k in keep) if keep else 1
    return reduced.reshape(d, d)


def conditional_entropy(rho, dims: Sequence[int], subsystem_a: Iterable[int], given: Iterable[int] | None = None) -> float:
    """S(A|B) = S(AB) - S(B).

    ``given`` defaults to every subsystem not in ``subsystem_a``; subsystems in
    neither set are traced out first.
    """
    a = _as_square(rho)
    dims = _check_dims(a.shape[0], dims)
    sa = set(int(k) for k in subsystem_a)
    sb = set(range(len(dims))) - sa if given is None else set(int(k) for k in given)
    if sa & sb:
        raise DomainError("conditioning set overlaps the conditioned subsystems")
    joint = sorted(sa | sb)
    if len(joint) < len(dims):
        a = partial_trace(a, dims, joint)
        dims = tuple(dims[k] for k in joint)
        remap = {old: new for new, old in enumerate(joint)}
        sb = {remap[k] for k in sb}
    s_ab = von_neumann_entropy(a)
    s_b = von_neumann_entropy(partial_trace(a, dims, sb)) if sb else 0.0
    return s_ab - s_b
