"""Dense symmetric / SPD linear algebra.

Every matrix function goes through a full symmetric eigendecomposition.
Inputs are symmetrized with ``(A + A.T) / 2`` before decomposition so that
drift from repeated arithmetic never leaks into the spectrum.
"""
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, InvalidInput, NotSpd


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray   # descending
    eigenvectors: np.ndarray  # columns match eigenvalue order


def sym(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def spd_eps(A):
    """Admission threshold for positive definiteness, relative to the entry scale."""
    A = np.asarray(A, dtype=float)
    return 1e-12 * (1.0 + (np.max(np.abs(A)) if A.size else 0.0))


def _check_square(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix has non-finite entries")
    return A


def sym_eigen(A):
    """Symmetric eigendecomposition with a deterministic ordering and sign.

    Eigenvalues are sorted in descending order and each eigenvector is
    flipped so that its first nonzero component is positive.

    Parameters
    ----------
    A : array_like, shape (p, p)
        Symmetric matrix (symmetrized internally).

    Returns
    -------
    EigenDecomposition
    """
    A = sym(_check_square(A))
    w, V = np.linalg.eigh(A)
    order = np.argsort(-w, kind="stable")   # ties keep LAPACK's order
    w = w[order]
    V = V[:, order]
    scale = np.max(np.abs(V), axis=0)
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > 1e-10 * scale[j])
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return EigenDecomposition(w, V)


def spd_fun(S, f: Callable[[np.ndarray], np.ndarray]):
    """Apply a scalar function to a symmetric matrix through its spectrum.

    Returns ``P diag(f(lam)) P^T``. Raises DomainError if ``f`` produces a
    non-finite value at any eigenvalue.
    """
    w, V = sym_eigen(S)
    with np.errstate(all="ignore"):
        fw = np.asarray(f(w), dtype=float)
    if not np.all(np.isfinite(fw)):
        raise DomainError("matrix function undefined at an eigenvalue")
    return sym((V * fw) @ V.T)


def is_spd(A, eps=None):
    """True iff ``A`` is symmetric within ``eps`` and its smallest eigenvalue exceeds ``eps``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.all(np.isfinite(A)):
        return False
    if eps is None:
        eps = spd_eps(A)
    if np.max(np.abs(A - A.T), initial=0.0) > eps:
        return False
    return bool(np.linalg.eigvalsh(sym(A))[0] > eps)


def as_spd(A, name="matrix"):
    """Validate and symmetrize an SPD matrix; the package's SpdMatrix constructor."""
    A = sym(_check_square(A))
    if np.linalg.eigvalsh(A)[0] <= spd_eps(A):
        raise NotSpd(f"{name} is not positive definite")
    return A


def sqrtm(S):
    return spd_fun(S, np.sqrt)


def invsqrtm(S):
    return spd_fun(S, lambda w: 1.0 / np.sqrt(w))


def logm(S):
    return spd_fun(S, np.log)


def expm(A):
    """Exponential of a symmetric matrix."""
    return spd_fun(A, np.exp)


def powm(S, t):
    return spd_fun(S, lambda w: w ** t)


def inv(S):
    return spd_fun(S, lambda w: 1.0 / w)


def logdet(S):
    sign, val = np.linalg.slogdet(S)
    if sign <= 0:
        raise NotSpd("determinant is not positive")
    return val


def _same_dim(S0, S1):
    if S0.shape != S1.shape:
        raise InvalidInput(f"dimension mismatch: {S0.shape} vs {S1.shape}")


def geodesic_point(S0, S1, t):
    r"""Point at position ``t`` on the affine-invariant geodesic from ``S0`` to ``S1``.

    .. math:: \Sigma_t = \Sigma_0^{1/2} (\Sigma_0^{-1/2} \Sigma_1 \Sigma_0^{-1/2})^t \Sigma_0^{1/2}
    """
    S0 = as_spd(S0)
    S1 = as_spd(S1)
    _same_dim(S0, S1)
    w, V = sym_eigen(S0)
    R = (V * np.sqrt(w)) @ V.T
    Ri = (V / np.sqrt(w)) @ V.T
    return sym(R @ powm(Ri @ S1 @ Ri, t) @ R)


def riemannian_distance(S0, S1):
    """Affine-invariant distance ``||log(S0^{-1/2} S1 S0^{-1/2})||_F``."""
    S0 = as_spd(S0)
    S1 = as_spd(S1)
    _same_dim(S0, S1)
    # generalized eigenvalues of (S1, S0) are the spectrum of S0^{-1/2} S1 S0^{-1/2}
    L = np.linalg.cholesky(S0)
    Li = np.linalg.inv(L)
    w = np.linalg.eigvalsh(sym(Li @ S1 @ Li.T))
    if w[0] <= 0:
        raise NotSpd("second argument is not positive definite")
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def random_spd(p, rng, scale=1.0):
    """SPD matrix ``expm(S)`` with symmetric ``S`` having entries uniform in ``[-scale, scale]``."""
    A = rng.uniform(-scale, scale, size=(p, p))
    return expm(np.triu(A) + np.triu(A, 1).T)
