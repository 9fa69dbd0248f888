"""Independent brute-force oracles shared by unit and acceptance tests."""
import itertools

import numpy as np


def pava_grid_oracle(d, a, eta, step=1e-3, fine=1e-5):
    """Minimize ``sum d_i e^{-t_i} + (1 + eta a_i) t_i`` over ``t_1 >= t_2`` by grid search.

    A ``step`` grid over a box around the unconstrained minimizers is refined
    on a ``fine`` grid around the best coarse point. Returns ``exp(t)``.
    """
    d = np.asarray(d, float)
    c = 1.0 + eta * np.asarray(a, float)
    free = np.log(d / np.where(c > 0, c, np.nan))
    cands = np.append(free, np.log(d.sum() / c.sum()))   # the pooled solution
    lo, hi = np.nanmin(cands) - 0.5, np.nanmax(cands) + 0.5

    def obj(t1, t2):
        val = d[0] * np.exp(-t1) + c[0] * t1 + d[1] * np.exp(-t2) + c[1] * t2
        return np.where(t1 >= t2, val, np.inf)

    def search(lo1, hi1, lo2, hi2, h):
        g1 = np.arange(lo1, hi1 + h / 2, h)
        g2 = np.arange(lo2, hi2 + h / 2, h)
        F = obj(g1[:, None], g2[None, :])
        i, j = np.unravel_index(np.argmin(F), F.shape)
        return g1[i], g2[j]

    t1, t2 = search(lo, hi, lo, hi, step)
    w = 2 * step
    t1, t2 = search(t1 - w, t1 + w, t2 - w, t2 + w, fine)
    return np.exp([t1, t2])


def _basis(points, tol=1e-10):
    if len(points) == 0:
        return None
    U, s, _ = np.linalg.svd(np.asarray(points, float).T, full_matrices=False)
    r = int(np.sum(s > tol * max(1.0, s[0])))
    return U[:, :r]


def existence_oracle(X, sill, drop_zero):
    """Exhaustive check over coordinate subspaces and spans of data subsets.

    Every subset of data points (any size) and every coordinate subspace of
    dimension 1 .. p-1 is a candidate; masses are counted with exact
    integer arithmetic on the projections.
    """
    X = np.asarray(X, float)
    if drop_zero:
        X = X[np.any(X != 0, axis=1)]
    n, p = X.shape

    def bound(dim):
        return 1.0 if np.isinf(sill) else 1.0 - (p - dim) / sill

    def mass(B):
        if B is None or B.shape[1] == 0:
            return np.mean(np.all(X == 0, axis=1)) if n else 0.0
        R = X - X @ B @ B.T
        return np.mean(np.linalg.norm(R, axis=1) <= 1e-9 * np.maximum(1, np.linalg.norm(X, axis=1)))

    cands = []
    if not drop_zero:
        cands.append(np.zeros((p, 0)))
    for k in range(1, p):
        for idx in itertools.combinations(range(p), k):
            cands.append(np.eye(p)[:, list(idx)])
    for k in range(1, n + 1):
        for idx in itertools.combinations(range(n), k):
            B = _basis(X[list(idx)])
            if B is not None and 0 < B.shape[1] < p:
                cands.append(B)
    for B in cands:
        if not mass(B) < bound(B.shape[1]):
            return False
    return True


def random_target(p, rng, spread=1.0):
    """Random SPD target ``Q diag(exp(g)) Q^T``."""
    Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    return (Q * np.exp(spread * rng.standard_normal(p))) @ Q.T
