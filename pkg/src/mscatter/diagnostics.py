"""Numerical probes of geodesic convexity, coercivity, existence and optimality.

These are evidence, not proofs: each report carries a ``disclaimer`` field.
The probes exist to catch implementation errors in objectives and solvers.
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import BudgetExceeded
from .losses import TYLER, as_data, nonzero_rows
from .spd import as_spd, expm, geodesic_point, sym

DISCLAIMER = "numerical evidence only"
GCONVEX_TOL = 1e-8


@dataclass
class GConvexityReport:
    trials: int
    max_violation: float
    worst_case: Optional[Tuple[np.ndarray, np.ndarray, float]] = field(default=None, repr=False)
    disclaimer: str = DISCLAIMER

    @property
    def passed(self):
        return self.max_violation <= GCONVEX_TOL


def random_log_spd(p, rng, bound=2.0):
    """``expm(S)`` for symmetric ``S`` with entries uniform in ``[-bound, bound]``."""
    A = rng.uniform(-bound, bound, size=(p, p))
    return expm(np.triu(A) + np.triu(A, 1).T)


def check_gconvexity(f: Callable, p, trials=200, seed=0, ts=(0.25, 0.5, 0.75)):
    """Test ``f(S_t) <= (1-t) f(S0) + t f(S1)`` on random geodesics.

    ``max_violation`` is the largest signed excess of the left side over the
    right side; the report passes iff it is at most 1e-8.
    """
    rng = np.random.default_rng(seed)
    worst = -np.inf
    worst_case = None
    for _ in range(trials):
        S0 = random_log_spd(p, rng)
        S1 = random_log_spd(p, rng)
        f0, f1 = f(S0), f(S1)
        for t in ts:
            excess = f(geodesic_point(S0, S1, t)) - ((1 - t) * f0 + t * f1)
            if excess > worst:
                worst, worst_case = excess, (S0, S1, t)
    return GConvexityReport(trials, float(worst), worst_case)


@dataclass
class ExistenceReport:
    holds: bool
    witness: Optional[np.ndarray] = None     # orthonormal basis of a violating subspace
    mass: Optional[float] = None             # P_n of the witness
    bound: Optional[float] = None            # 1 - (p - dim) / K
    heuristic: bool = False
    subspaces_checked: int = 0
    disclaimer: str = DISCLAIMER


def _bound(p, dim, sill):
    if np.isinf(sill):
        return 1.0
    return 1.0 - (p - dim) / sill


def _span(points, tol=1e-10):
    """Orthonormal basis of the span of the rows of ``points``."""
    if points.size == 0:
        return np.zeros((points.shape[1] if points.ndim == 2 else 0, 0))
    U, s, _ = np.linalg.svd(points.T, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return U[:, :rank]


def _mass(X, basis, tol=1e-9):
    if X.shape[0] == 0:
        return 0.0
    if basis.shape[1] == 0:
        return float(np.mean(~nonzero_rows(X)))
    resid = X - (X @ basis) @ basis.T
    norms = np.linalg.norm(X, axis=1)
    return float(np.mean(np.linalg.norm(resid, axis=1) <= tol * np.maximum(1.0, norms)))


def existence_check(X, loss, budget=10 ** 6, allow_heuristic=False, seed=0, mc_draws=20000):
    """Check ``P_n(V) < 1 - (p - dim V) / K`` for every proper subspace ``V``.

    It suffices to check the zero subspace and subspaces spanned by data
    points (Tyler's loss drops zero rows and exempts the zero subspace): if ``V`` violates the condition, the span ``W`` of the data in
    ``V`` carries the same mass and a bound no larger, since
    ``dim W <= dim V``. Subsets of 1 .. p-1 nonzero points are enumerated.

    Raises
    ------
    BudgetExceeded
        When the number of subsets exceeds ``budget``; the exception carries a
        Monte-Carlo verdict over random subsets in ``fallback`` (also returned
        directly when ``allow_heuristic`` is set).
    """
    X = as_data(X)
    p = X.shape[1]
    sill = loss.sill
    if loss.name == TYLER:
        # zero rows carry no information and the zero subspace is exempt
        X = X[nonzero_rows(X)]
    elif not _mass(X, np.zeros((p, 0))) < _bound(p, 0, sill):
        return ExistenceReport(False, np.zeros((p, 0)), _mass(X, np.zeros((p, 0))),
                               _bound(p, 0, sill), subspaces_checked=1)
    pts = X[nonzero_rows(X)]
    total = math.comb(len(pts), p - 1) if p > 1 else 0
    if total > budget:
        fallback = _existence_monte_carlo(X, pts, p, sill, seed, mc_draws)
        if allow_heuristic:
            return fallback
        raise BudgetExceeded(f"{total} subsets exceed the budget of {budget}", fallback=fallback)
    checked = 1
    seen = set()
    for k in range(1, p):
        for idx in itertools.combinations(range(len(pts)), k):
            basis = _span(pts[list(idx)])
            dim = basis.shape[1]
            if dim == 0 or dim >= p:
                continue
            key = tuple(np.round((basis @ basis.T).ravel(), 8))
            if key in seen:
                continue
            seen.add(key)
            checked += 1
            mass, bound = _mass(X, basis), _bound(p, dim, sill)
            if not mass < bound:
                return ExistenceReport(False, basis, mass, bound, subspaces_checked=checked)
    return ExistenceReport(True, subspaces_checked=checked)


def _existence_monte_carlo(X, pts, p, sill, seed, draws):
    rng = np.random.default_rng(seed)
    for i in range(draws):
        k = int(rng.integers(1, p))
        idx = rng.choice(len(pts), size=min(k, len(pts)), replace=False)
        basis = _span(pts[idx])
        dim = basis.shape[1]
        if 0 < dim < p:
            mass, bound = _mass(X, basis), _bound(p, dim, sill)
            if not mass < bound:
                return ExistenceReport(False, basis, mass, bound, heuristic=True,
                                       subspaces_checked=i + 1)
    return ExistenceReport(True, heuristic=True, subspaces_checked=draws)


@dataclass
class CoercivityReport:
    min_growth: float
    growths: List[float]
    disclaimer: str = DISCLAIMER


def gcoercivity_probe(f: Callable, p, rays=20, seed=0, taus=(2.0, 4.0, 8.0, 16.0)):
    """Growth of ``f`` along geodesic rays ``expm(tau D)`` from the identity.

    Rays are the two scale directions ``+-I/sqrt(p)`` followed by ``rays``
    random symmetric unit directions. ``min_growth`` is the smallest
    ``f(expm(16 D)) - f(expm(8 D))``; overflow counts as infinite growth.
    """
    rng = np.random.default_rng(seed)
    dirs = [np.eye(p) / np.sqrt(p), -np.eye(p) / np.sqrt(p)]
    for _ in range(rays):
        A = rng.standard_normal((p, p))
        D = sym(A)
        dirs.append(D / np.linalg.norm(D))
    t_lo, t_hi = taus[-2], taus[-1]
    growths = []
    for D in dirs:
        try:
            with np.errstate(all="raise"):
                g = f(expm(t_hi * D)) - f(expm(t_lo * D))
            if not np.isfinite(g):
                g = np.inf
        except (FloatingPointError, OverflowError):
            g = np.inf
        growths.append(float(g))
    return CoercivityReport(float(min(growths)), growths)


@dataclass
class DirectionalReport:
    min_derivative: float
    derivatives: List[float]
    disclaimer: str = DISCLAIMER


def directional_optimality(f: Callable, S, directions=20, seed=0, t=1e-5, symmetric=True):
    """One-sided difference quotients ``(f(B e^{t D} B^T) - f(B B^T)) / t``.

    ``B`` is the Cholesky factor of ``S``. Directions are the signed
    elementary diagonals, ``directions`` random unit diagonals and, when
    ``symmetric`` is set, as many random unit symmetric matrices. A minimum
    of at least ``-1e-6`` indicates approximate stationarity, also for
    non-smooth objectives.
    """
    S = as_spd(S)
    p = S.shape[0]
    B = np.linalg.cholesky(S)
    rng = np.random.default_rng(seed)
    dirs = []
    for i in range(p):
        E = np.zeros((p, p))
        E[i, i] = 1.0
        dirs += [E, -E]
    for _ in range(directions):
        d = rng.standard_normal(p)
        dirs.append(np.diag(d / np.linalg.norm(d)))
    if symmetric:
        for _ in range(directions):
            D = sym(rng.standard_normal((p, p)))
            dirs.append(D / np.linalg.norm(D))
    f0 = f(S)
    ders = [float((f(sym(B @ expm(t * D) @ B.T)) - f0) / t) for D in dirs]
    return DirectionalReport(min(ders), ders)
