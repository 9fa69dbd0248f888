"""Loss families for M-estimation of scatter and the objectives built on them.

A loss family is a function ``rho`` on ``s >= 0`` (``s`` is the squared
Mahalanobis distance ``x^T Sigma^{-1} x``) with weight ``u = rho'``.
The M-loss of a scatter matrix is

    ell(Sigma) = mean_i rho(x_i^T Sigma^{-1} x_i) + log det Sigma

and its penalized version adds ``eta * Pi(Sigma)``.
Data are rows of an ``(n, p)`` array, assumed centered.
"""
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DomainError, InvalidInput
from .spd import as_spd, logdet

GAUSSIAN = "gaussian"
STUDENT_T = "student_t"
TYLER = "tyler"
HUBER = "huber"

_ALIASES = {
    "gaussian": GAUSSIAN, "normal": GAUSSIAN,
    "student_t": STUDENT_T, "studentt": STUDENT_T, "t": STUDENT_T,
    "cauchy": STUDENT_T,
    "tyler": TYLER,
    "huber": HUBER,
}

ZERO_ROW_RTOL = 1e-12


@dataclass(frozen=True)
class LossFamily:
    """A monotone M-estimation loss.

    Use :func:`make_loss` rather than constructing directly.
    """

    name: str
    p: int = None
    nu: float = None
    r: float = None
    c2: float = None
    b: float = None

    def rho(self, s):
        s = np.asarray(s, dtype=float)
        if self.name == GAUSSIAN:
            return s.copy()
        if self.name == STUDENT_T:
            return (self.nu + self.p) * np.log(self.nu + s)
        if self.name == TYLER:
            with np.errstate(divide="ignore"):
                return self.p * np.log(s)
        # Huber: antiderivative of the weight with rho(0) = 0
        if not np.isfinite(self.c2):
            return s / self.b
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = (self.c2 / self.b) * (np.log(s / self.c2) + 1.0)
        return np.where(s <= self.c2, s / self.b, tail)

    def weight(self, s):
        """Weight function ``u(s) = rho'(s)``."""
        s = np.asarray(s, dtype=float)
        if self.name == GAUSSIAN:
            return np.ones_like(s)
        if self.name == STUDENT_T:
            return (self.nu + self.p) / (self.nu + s)
        if self.name == TYLER:
            with np.errstate(divide="ignore"):
                return self.p / s
        if not np.isfinite(self.c2):
            return np.full_like(s, 1.0 / self.b)
        with np.errstate(divide="ignore"):
            return np.where(s <= self.c2, 1.0 / self.b, self.c2 / (s * self.b))

    def psi(self, s):
        """Influence-type function ``psi(s) = s u(s)``."""
        s = np.asarray(s, dtype=float)
        if self.name == TYLER:
            return np.full_like(s, float(self.p))
        return s * self.weight(s)

    @property
    def sill(self):
        if self.name == GAUSSIAN:
            return np.inf
        if self.name == STUDENT_T:
            return self.nu + self.p
        if self.name == TYLER:
            return float(self.p)
        return self.c2 / self.b

    @property
    def bounded_below(self):
        return self.name != TYLER

    @property
    def concave_rho(self):
        return True

    @property
    def gconvex_rho(self):
        return True

    @property
    def strictly_concave_rho(self):
        if self.name == HUBER:
            return False  # linear below c^2
        return self.name != GAUSSIAN

    def describe(self):
        out = {"name": self.name}
        if self.name == STUDENT_T:
            out["nu"] = self.nu
        if self.name == HUBER:
            out["r"] = self.r
        if self.p is not None:
            out["p"] = self.p
        return out


def huber_constants(r, p):
    """Tuning constant ``c^2`` and consistency factor ``b`` for Huber's weights.

    ``c^2`` is the ``r``-quantile of chi-square(p); ``b`` makes the estimator
    consistent for the covariance at the normal model, ``E[psi(s)] = p``.
    """
    if r >= 1.0:
        return np.inf, 1.0
    c2 = float(stats.chi2.ppf(r, p))
    b = float(special.gammainc((p + 2) / 2.0, c2 / 2.0) + c2 * (1.0 - r) / p)
    return c2, b


def make_loss(name, p=None, nu=None, r=None):
    """Build a loss family by name.

    Parameters
    ----------
    name : {"gaussian", "student_t", "cauchy", "tyler", "huber"}
    p : int
        Dimension; required for everything except the Gaussian loss.
    nu : float
        Degrees of freedom for ``student_t`` (``cauchy`` fixes ``nu = 1``).
    r : float
        Huber coverage probability in ``(0, 1]``.
    """
    key = _ALIASES.get(str(name).lower())
    if key is None:
        raise InvalidInput(f"unknown loss {name!r}")
    if str(name).lower() == "cauchy":
        nu = 1.0
    if key != GAUSSIAN and (p is None or int(p) != p or p < 1):
        raise InvalidInput(f"loss {name!r} needs a positive integer dimension p")
    p = None if p is None else int(p)
    if key == GAUSSIAN:
        return LossFamily(GAUSSIAN, p=p)
    if key == STUDENT_T:
        if nu is None or not np.isfinite(nu) or nu <= 0:
            raise InvalidInput("student_t needs nu > 0")
        return LossFamily(STUDENT_T, p=p, nu=float(nu))
    if key == TYLER:
        return LossFamily(TYLER, p=p)
    if r is None or not (0.0 < r <= 1.0):
        raise InvalidInput("huber needs 0 < r <= 1")
    c2, b = huber_constants(float(r), p)
    return LossFamily(HUBER, p=p, r=float(r), c2=c2, b=b)


def as_data(X, p=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise InvalidInput(f"data must be a 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("data has non-finite entries")
    if p is not None and X.shape[1] != p:
        raise InvalidInput(f"data has {X.shape[1]} columns, expected {p}")
    return X


def nonzero_rows(X):
    """Boolean mask of rows counted as nonzero for Tyler's loss."""
    norms = np.linalg.norm(X, axis=1)
    if norms.size == 0:
        return norms > 0
    return norms > ZERO_ROW_RTOL * np.max(norms)


def _effective_data(loss, X, drop_zero):
    if loss.name != TYLER:
        return X
    mask = nonzero_rows(X)
    if mask.all():
        return X
    if not drop_zero:
        raise DomainError("Tyler's loss is undefined at a zero observation")
    if not mask.any():
        raise DomainError("all observations are zero")
    return X[mask]


def quad_forms(X, S):
    """``x_i^T S^{-1} x_i`` for every row, via one Cholesky factorization."""
    L = np.linalg.cholesky(S)
    Z = np.linalg.solve(L, X.T)
    return np.einsum("ij,ij->j", Z, Z)


def m_loss(loss, X, S, drop_zero=True):
    """M-loss ``mean rho(x^T S^{-1} x) + log det S``.

    An empty data set contributes nothing but the log-determinant.
    """
    S = as_spd(S)
    X = _effective_data(loss, as_data(X, S.shape[0]), drop_zero)
    ld = logdet(S)
    if X.shape[0] == 0:
        return float(ld)
    return float(np.mean(loss.rho(quad_forms(X, S))) + ld)


def weighted_cov(loss, X, S, drop_zero=True):
    """Weighted covariance ``M(S) = mean u(x^T S^{-1} x) x x^T``."""
    S = as_spd(S)
    X = _effective_data(loss, as_data(X, S.shape[0]), drop_zero)
    n, p = X.shape
    if n == 0:
        return np.zeros((p, p))
    w = loss.weight(quad_forms(X, S))
    M = (X * w[:, None]).T @ X / n
    return 0.5 * (M + M.T)


def sample_cov(X):
    """Second-moment matrix ``X^T X / n`` of (already centered) data."""
    X = as_data(X)
    M = X.T @ X / X.shape[0]
    return 0.5 * (M + M.T)


def gaussian_objective(S, M, eta=0.0, penalty=None):
    """Penalized Gaussian objective ``tr(S^{-1} M) + log det S + eta Pi(S)``."""
    from .penalties import penalty_value

    S = as_spd(S)
    val = float(np.trace(np.linalg.solve(S, M)) + logdet(S))
    if penalty is not None and eta != 0:
        val += eta * penalty_value(penalty, S)
    return val


def penalized_loss(loss, X, S, penalty, eta, drop_zero=True):
    """Penalized M-loss ``m_loss + eta * Pi(S)``."""
    from .penalties import penalty_value

    if eta < 0:
        raise InvalidInput("eta must be nonnegative")
    val = m_loss(loss, X, S, drop_zero=drop_zero)
    if eta == 0 or penalty is None:
        return val
    return val + eta * penalty_value(penalty, S)
