"""Dense complex linear-algebra kernel.

Thin, validated wrappers around LAPACK routines (through numpy) with
deterministic phase and ordering conventions. Everything is double-precision
complex; inputs are never modified.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

HERMITIAN_RTOL = 1e-10
NEG_EIG_TOL = 1e-10


def as_complex(m) -> np.ndarray:
    """Return ``m`` as a complex128 array, rejecting non-finite entries."""
    a = np.asarray(m, dtype=np.complex128)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("non-finite entries in input array")
    return a


def svd(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``m = u @ diag(s) @ vh`` with singular values descending.

    Each left singular vector is rotated so that its largest-magnitude entry
    is real and positive; the compensating phase is moved onto ``vh``.
    """
    a = as_complex(m)
    if a.ndim != 2:
        raise InvalidInputError(f"svd expects a matrix, got shape {a.shape}")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if u.shape[1]:
        idx = np.argmax(np.abs(u), axis=0)
        pivots = u[idx, np.arange(u.shape[1])]
        phases = np.where(np.abs(pivots) > 0, pivots / np.abs(pivots), 1.0)
        u = u * phases.conj()[None, :]
        vh = vh * phases[:, None]
    return u, s, vh


def hermitize(h) -> np.ndarray:
    """Check that ``h`` is Hermitian within tolerance and return (h + h^dag)/2."""
    a = as_complex(h)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
    scale = np.linalg.norm(a)
    dev = np.linalg.norm(a - a.conj().T)
    if dev > HERMITIAN_RTOL * max(scale, 1e-300) and dev > 1e-14:
        raise InvalidInputError(f"matrix is not Hermitian (deviation {dev:.3e})")
    return 0.5 * (a + a.conj().T)


def eigh(h) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigendecomposition with eigenvalues in descending order."""
    a = hermitize(h)
    lam, vecs = np.linalg.eigh(a)
    return lam[::-1].copy(), vecs[:, ::-1].copy()


def density_spectrum(rho) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a density matrix with eigenvalues clipped to [0, 1].

    Eigenvalues below ``-NEG_EIG_TOL`` indicate a non-positive input and raise.
    """
    lam, vecs = eigh(rho)
    if lam.size and lam[-1] < -NEG_EIG_TOL:
        raise InvalidInputError(f"density matrix has negative eigenvalue {lam[-1]:.3e}")
    return np.clip(lam, 0.0, 1.0), vecs


def expm_hermitian(h, t: float) -> np.ndarray:
    """``exp(-1j * t * h)`` for Hermitian ``h``, via its eigendecomposition."""
    lam, vecs = eigh(h)
    return (vecs * np.exp(-1j * t * lam)[None, :]) @ vecs.conj().T


def is_unitary(u, atol: float = 1e-10) -> bool:
    a = np.asarray(u)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return bool(np.linalg.norm(a.conj().T @ a - np.eye(a.shape[0])) <= atol)


def unitarity_defect(u) -> float:
    a = np.asarray(u)
    return float(np.linalg.norm(a.conj().T @ a - np.eye(a.shape[1])))


def kron(*ops) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.complex128)
    for op in ops:
        out = np.kron(out, op)
    return out


def apply_to_axes(op: np.ndarray, tensor: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Apply a matrix acting on the listed tensor axes (in order, first axis most significant)."""
    dims = [tensor.shape[a] for a in axes]
    k = len(axes)
    op_t = op.reshape(dims + dims)
    out = np.tensordot(op_t, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def partial_trace(rho: np.ndarray, dims: tuple[int, ...], keep: tuple[int, ...]) -> np.ndarray:
    """Reduced density matrix on subsystems ``keep`` (kept in the given order)."""
    n = len(dims)
    t = rho.reshape(tuple(dims) + tuple(dims))
    traced = [i for i in range(n) if i not in keep]
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for i in traced:
        col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = int(np.prod([dims[i] for i in keep]))
    return res.reshape(d, d)


def von_neumann_entropy(rho: np.ndarray, base: float = 2.0, floor: float = 1e-14) -> float:
    """Von Neumann entropy; eigenvalues below ``floor`` contribute zero."""
    lam, _ = density_spectrum(rho)
    lam = lam[lam >= floor]
    return float(-np.sum(lam * np.log(lam)) / np.log(base))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(0.5 * ((a - b) + (a - b).conj().T))
    return float(0.5 * np.sum(np.abs(ev)))
