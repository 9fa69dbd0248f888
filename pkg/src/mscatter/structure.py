"""Structured scatter estimation under geodesically convex constraints.

``constrained_reweight_solve`` is the constrained counterpart of the
reweighting algorithm: each step forms ``M(S_k)`` and minimizes the Gaussian
loss ``tr(S^{-1} M) + log det S`` over the constraint set. A constraint
object supplies that Gaussian solve.

Kronecker data come as an ``(n, p1, p2)`` array; a matrix ``X`` is identified
with its row-major vectorization, whose scatter under the model is
``c * kron(S1, S2)`` with ``det S1 = det S2 = 1``.
"""
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy import optimize

from .errors import InternalError, InvalidInput, NoConvergence, NotSpd
from .losses import TYLER, as_data, m_loss, sample_cov, weighted_cov
from .penalties import penalty_infimum, penalty_value
from .solvers import (MONOTONE_TOL, SolveOptions, SolveReport, Status,
                      reweight_solve, tyler_reweight_solve)
from .spd import as_spd, is_spd, logdet, riemannian_distance, sym


# ---------------------------------------------------------------------------
# constraint sets
# ---------------------------------------------------------------------------

class Unconstrained:
    """The whole SPD cone."""

    def solve_gaussian(self, M, start=None):
        return sym(M)

    def is_feasible(self, S, tol=1e-9):
        return is_spd(S)

    def default_start(self, X):
        p = X.shape[1]
        return np.eye(p) * max(np.trace(sample_cov(X)) / p, 1e-300)


class ScaledIdentity:
    """Multiples of the identity, ``{c I : c > 0}``."""

    def solve_gaussian(self, M, start=None):
        p = M.shape[0]
        return np.eye(p) * (np.trace(M) / p)

    def is_feasible(self, S, tol=1e-9):
        S = np.asarray(S, dtype=float)
        c = np.trace(S) / S.shape[0]
        return c > 0 and np.linalg.norm(S - c * np.eye(S.shape[0])) <= tol * (1.0 + abs(c))

    def default_start(self, X):
        return Unconstrained().default_start(X)


def _check_orthogonal_list(mats, q, name):
    out = []
    for U in mats:
        U = np.asarray(U, dtype=float)
        if U.shape != (q, q):
            raise InvalidInput(f"{name} element has shape {U.shape}, expected {(q, q)}")
        if np.linalg.norm(U.T @ U - np.eye(q)) > 1e-10:
            raise InvalidInput(f"{name} element is not orthogonal")
        out.append(U)
    if not out:
        out = [np.eye(q)]
    if not any(np.linalg.norm(U - np.eye(q)) <= 1e-10 for U in out):
        raise InvalidInput(f"{name} must contain the identity")
    return tuple(out)


@dataclass(frozen=True)
class KroneckerGroupConstraint:
    """``S = c * kron(S1, S2)`` with ``det S_j = 1`` and ``U S_j U^T = S_j`` for listed ``U``.

    The group lists are used exactly as given (no closure is computed); they
    must contain the identity.
    """

    p1: int
    p2: int
    K1: Sequence[np.ndarray] = ()
    K2: Sequence[np.ndarray] = ()
    inner_tol: float = 1e-13
    inner_max_iter: int = 2000

    def __post_init__(self):
        if self.p1 < 1 or self.p2 < 1:
            raise InvalidInput("p1 and p2 must be positive")
        object.__setattr__(self, "K1", _check_orthogonal_list(self.K1, self.p1, "K1"))
        object.__setattr__(self, "K2", _check_orthogonal_list(self.K2, self.p2, "K2"))

    @property
    def p(self):
        return self.p1 * self.p2

    # -- representation ----------------------------------------------------
    def compose(self, c, S1, S2):
        return c * np.kron(S1, S2)

    def factorize(self, S):
        """Return ``(c, S1, S2)`` for a Kronecker-structured ``S``."""
        S4 = np.asarray(S, dtype=float).reshape(self.p1, self.p2, self.p1, self.p2)
        T1 = np.einsum("iaja->ij", S4)
        T2 = np.einsum("iaib->ab", S4)
        S1 = _det_normalize(sym(T1))
        S2 = _det_normalize(sym(T2))
        c = float(np.exp(logdet(S) / self.p))
        return c, S1, S2

    def symmetrize(self, M):
        """Average ``(U1 x U2^T) M (U1 x U2^T)^T`` over the listed pairs."""
        out = np.zeros_like(M)
        for U1 in self.K1:
            for U2 in self.K2:
                W = np.kron(U1, U2.T)
                out += W @ M @ W.T
        return sym(out / (len(self.K1) * len(self.K2)))

    def is_feasible(self, S, tol=1e-9):
        S = np.asarray(S, dtype=float)
        if S.shape != (self.p, self.p) or not is_spd(S):
            return False
        c, S1, S2 = self.factorize(S)
        if np.linalg.norm(S - self.compose(c, S1, S2)) > tol * (1.0 + np.linalg.norm(S)):
            return False
        return group_residual(self, S1, S2) <= tol

    def default_start(self, X):
        return Unconstrained().default_start(X)

    # -- Gaussian solve ----------------------------------------------------
    def solve_gaussian(self, M, start=None):
        """Minimize ``tr(S^{-1} M) + log det S`` over the constraint set.

        Block-coordinate (flip-flop) descent over ``(c S1, S2)`` then
        ``(S1, c S2)``; each block step is an exact minimization, so the
        objective never increases from ``start``.
        """
        M = self.symmetrize(sym(M))
        M4 = M.reshape(self.p1, self.p2, self.p1, self.p2)
        if start is None:
            S1, S2 = np.eye(self.p1), np.eye(self.p2)
        else:
            _, S1, S2 = self.factorize(start)
        f_old = np.inf
        c = 1.0
        for _ in range(self.inner_max_iter):
            T1 = np.einsum("ab,iajb->ij", np.linalg.inv(S2), M4) / self.p2
            c, S1_new = _split_scale(T1)
            T2 = np.einsum("ij,iajb->ab", np.linalg.inv(S1_new), M4) / self.p1
            c, S2_new = _split_scale(T2)
            S = self.compose(c, S1_new, S2_new)
            f = float(np.trace(np.linalg.solve(S, M)) + logdet(S))
            step = np.linalg.norm(S1_new - S1) + np.linalg.norm(S2_new - S2)
            S1, S2 = S1_new, S2_new
            if abs(f_old - f) <= self.inner_tol * (1.0 + abs(f)) and step <= 1e-11:
                break
            f_old = f
        return sym(self.compose(c, S1, S2))


def _det_normalize(T):
    q = T.shape[0]
    ld = logdet(T)
    return sym(T / np.exp(ld / q))


def _split_scale(T):
    T = sym(T)
    if not is_spd(T):
        raise NotSpd("flip-flop factor update is singular")
    q = T.shape[0]
    c = float(np.exp(logdet(T) / q))
    return c, T / c


def group_residual(constraint, S1, S2):
    """``max ||U S_j U^T - S_j||_F`` over the listed group elements."""
    r = 0.0
    for U in constraint.K1:
        r = max(r, float(np.linalg.norm(U @ S1 @ U.T - S1)))
    for U in constraint.K2:
        r = max(r, float(np.linalg.norm(U @ S2 @ U.T - S2)))
    return r


def as_matrix_data(X, p1, p2):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape[1] == p1 * p2:
        X = X.reshape(-1, p1, p2)
    if X.ndim != 3 or X.shape[1:] != (p1, p2):
        raise InvalidInput(f"matrix data must have shape (n, {p1}, {p2}), got {X.shape}")
    if X.shape[0] < 1 or not np.all(np.isfinite(X)):
        raise InvalidInput("matrix data must be finite and non-empty")
    return X


# ---------------------------------------------------------------------------
# Kronecker update as displayed
# ---------------------------------------------------------------------------

def kronecker_group_step(Xm, constraint, loss, S1, S2, scale=1.0):
    """One Jacobi-style Kronecker / group-symmetry update.

    With ``Y = U1 X_i U2`` over every listed pair and weights
    ``w = u(tr(S1^{-1} Y S2^{-1} Y^T) / scale)``::

        T1 = sum w Y S2^{-1} Y^T / (n p2 |K1| |K2|)
        T2 = sum w Y^T S1^{-1} Y / (n p1 |K1| |K2|)

    and both are rescaled to unit determinant. Both factors are computed
    from the same incoming pair. ``scale = 1`` reproduces the update without
    an overall scale coordinate.

    Returns
    -------
    tuple of ndarray
        ``(S1_next, S2_next)``.
    """
    p1, p2 = constraint.p1, constraint.p2
    Xm = as_matrix_data(Xm, p1, p2)
    S1 = as_spd(S1, "S1")
    S2 = as_spd(S2, "S2")
    for S in (S1, S2):
        if abs(logdet(S)) > 1e-9:
            raise InvalidInput("factors must have unit determinant")
    O1, O2 = np.linalg.inv(S1), np.linalg.inv(S2)
    n = Xm.shape[0]
    m = len(constraint.K1) * len(constraint.K2)
    T1 = np.zeros((p1, p1))
    T2 = np.zeros((p2, p2))
    for U1 in constraint.K1:
        for U2 in constraint.K2:
            Y = U1 @ Xm @ U2
            YO2 = Y @ O2                                   # (n, p1, p2)
            s = np.einsum("ij,njb,nib->n", O1, YO2, Y)     # tr(O1 Y O2 Y^T)
            w = loss.weight(s / scale)
            T1 += np.einsum("n,nia,nja->ij", w, YO2, Y)
            T2 += np.einsum("n,nia,ij,njb->ab", w, Y, O1, Y)
    T1 = sym(T1 / (n * p2 * m))
    T2 = sym(T2 / (n * p1 * m))
    if not (is_spd(T1) and is_spd(T2)):
        raise NotSpd("Kronecker update produced a singular factor")
    return _split_scale(T1)[1], _split_scale(T2)[1]


def kronecker_scale_residual(Xm, constraint, loss, S1, S2, scale):
    """``|mean psi(s_i / c) - p| / p`` for the overall-scale coordinate ``c``."""
    Xm = as_matrix_data(Xm, constraint.p1, constraint.p2)
    O1, O2 = np.linalg.inv(S1), np.linalg.inv(S2)
    s = np.einsum("ij,nja,ab,nib->n", O1, Xm, O2, Xm)
    return float(abs(np.mean(loss.psi(s / scale)) - constraint.p) / constraint.p)


def kronecker_residual(Xm, constraint, loss, S):
    """Fixed-point residual of the Kronecker update at ``S = c kron(S1, S2)``.

    Sum of the factor changes under :func:`kronecker_group_step` (at the
    current scale) and the scale-equation residual.
    """
    c, S1, S2 = constraint.factorize(S)
    N1, N2 = kronecker_group_step(Xm, constraint, loss, S1, S2, scale=c)
    r = float(np.linalg.norm(N1 - S1) + np.linalg.norm(N2 - S2))
    if loss.name != TYLER:
        r += kronecker_scale_residual(Xm, constraint, loss, S1, S2, c)
    return r


# ---------------------------------------------------------------------------
# constrained reweighting
# ---------------------------------------------------------------------------

def constrained_reweight_solve(X, loss, constraint, S0=None, opts=None):
    """Reweighting under a constraint: ``S_{k+1} = argmin_{S in C} ell(S; M(S_k))``.

    Parameters
    ----------
    X : array_like
        ``(n, p)`` observations, or ``(n, p1, p2)`` matrices for a
        :class:`KroneckerGroupConstraint`.
    loss : LossFamily
    constraint : object
        Provides ``solve_gaussian(M, start)``, ``is_feasible(S)`` and
        ``default_start(X)``.
    S0 : array_like, optional
        Feasible starting point.
    opts : SolveOptions, optional

    Returns
    -------
    SolveReport
        ``objective_trace`` holds the unpenalized M-loss.
    """
    opts = opts or SolveOptions()
    if isinstance(constraint, KroneckerGroupConstraint):
        X = as_matrix_data(X, constraint.p1, constraint.p2).reshape(-1, constraint.p)
    X = as_data(X)
    S = constraint.default_start(X) if S0 is None else as_spd(S0, "initial value")
    if not constraint.is_feasible(S):
        raise InvalidInput("initial value is not feasible for the constraint")
    obj = m_loss(loss, X, S)
    trace = [obj] if opts.record_trace else []
    dists = []
    status = Status.MAX_ITERS
    message = ""
    k = 0
    for k in range(1, opts.max_iters + 1):
        M = weighted_cov(loss, X, S)
        try:
            S_new = constraint.solve_gaussian(M, S)
        except NotSpd as exc:
            status, message = Status.DIVERGED, f"step {k}: {exc}"
            break
        if not is_spd(S_new):
            status, message = Status.DIVERGED, f"iterate degenerated at step {k}"
            break
        obj_new = m_loss(loss, X, S_new)
        dist = riemannian_distance(S, S_new)
        dists.append(dist)
        if obj_new > obj + MONOTONE_TOL * max(1.0, abs(obj)):
            status = Status.INTERNAL_ERROR
            message = f"objective increased by {obj_new - obj:.3e} at step {k}"
            S = S_new
            if opts.record_trace:
                trace.append(obj_new)
            break
        small_obj = abs(obj - obj_new) <= opts.tol_rel * (1.0 + abs(obj_new))
        S, obj = S_new, obj_new
        if opts.record_trace:
            trace.append(obj)
        if small_obj and dist <= opts.tol_dist:
            status = Status.CONVERGED
            k -= 1
            break
    return SolveReport(estimate=S, status=status, iters=k, objective_trace=trace,
                       distance_trace=dists, final_objective=obj, message=message)


# ---------------------------------------------------------------------------
# penalized <-> constrained duality
# ---------------------------------------------------------------------------

@dataclass
class DualityPath:
    eta_grid: np.ndarray
    kappa_values: np.ndarray
    estimates: List[np.ndarray]
    reports: List[SolveReport] = field(default_factory=list, repr=False)


def penalized_solve(X, loss, penalty, eta, S0=None, opts=None):
    """Dispatch to the Tyler or general reweighting solver."""
    if loss.name == TYLER and (eta == 0 or penalty.shape_invariant):
        return tyler_reweight_solve(X, penalty, eta, S0, opts)
    return reweight_solve(X, loss, penalty, eta, S0, opts)


def duality_path(X, loss, penalty, eta_grid, opts=None, S0=None, check_tol=1e-8):
    """Solve along an increasing eta grid and record ``kappa(eta) = Pi(S_eta)``.

    ``kappa`` must be non-increasing in ``eta``; a violation beyond
    ``check_tol`` raises :class:`InternalError`.
    """
    grid = np.asarray(eta_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise InvalidInput("eta grid must be a non-empty increasing sequence of nonnegative values")
    kappas, estimates, reports = [], [], []
    for eta in grid:
        rep = penalized_solve(X, loss, penalty, float(eta), S0, opts)
        if rep.status == Status.INTERNAL_ERROR:
            raise InternalError(rep.message)
        reports.append(rep)
        estimates.append(rep.estimate)
        kappas.append(penalty_value(penalty, rep.estimate))
    kappas = np.array(kappas)
    bad = np.flatnonzero(np.diff(kappas) > check_tol * (1.0 + np.abs(kappas[:-1])))
    if bad.size:
        i = bad[0]
        raise InternalError(f"kappa increased between eta={grid[i]} and eta={grid[i + 1]}")
    return DualityPath(grid, kappas, estimates, reports)


def constrained_via_duality(X, loss, penalty, kappa, opts=None, tol_kappa=None,
                            eta_lo=None, eta_hi=1.0, max_expand=40):
    """Solve ``min ell(S)`` subject to ``Pi(S) <= kappa`` through the penalized path.

    Finds ``eta`` with ``Pi(S_eta) = kappa`` by bracketing (``eta_hi``
    multiplied by 4 until ``kappa(eta_hi) <= kappa``) and Brent's safeguarded
    bisection. The returned report carries the matching ``eta`` in its
    message and in the ``eta`` attribute. A target above ``kappa(eta_lo)`` is
    clamped to ``eta_lo``; the message says so.
    """
    X = as_data(X)
    p = X.shape[1]
    kappa = float(kappa)
    if tol_kappa is None:
        tol_kappa = 1e-4 * (1.0 + abs(kappa))
    k_low = penalty_infimum(penalty, p)
    if kappa <= k_low:
        raise InvalidInput(f"kappa={kappa} is not above inf Pi = {k_low}")
    if eta_lo is None:
        eta_lo = 1e-8 if loss.name == TYLER and not penalty.shape_invariant else 0.0

    cache = {}

    def solve(eta):
        if eta not in cache:
            near = min(cache, key=lambda e: abs(e - eta)) if cache else None
            S0 = cache[near].estimate if near is not None else None
            rep = penalized_solve(X, loss, penalty, eta, S0, opts)
            if rep.status == Status.INTERNAL_ERROR:
                raise InternalError(rep.message)
            rep.eta = eta
            rep.kappa = penalty_value(penalty, rep.estimate)
            cache[eta] = rep
        return cache[eta]

    lo = solve(eta_lo)
    if lo.kappa <= kappa + tol_kappa:
        lo.message = (f"eta={eta_lo}: " + ("target kappa is above kappa(eta_lo); clamped"
                                           if lo.kappa < kappa - tol_kappa else "matched"))
        return lo
    hi_eta = float(eta_hi)
    for _ in range(max_expand):
        hi = solve(hi_eta)
        if hi.kappa <= kappa:
            break
        hi_eta *= 4.0
    else:
        raise NoConvergence("could not bracket the target kappa")
    if abs(hi.kappa - kappa) <= tol_kappa * 1e-6:
        hi.message = f"eta={hi_eta}"
        return hi
    eta_star = optimize.brentq(lambda e: solve(e).kappa - kappa, eta_lo, hi_eta,
                               xtol=1e-13, rtol=1e-13, maxiter=200)
    rep = solve(eta_star)
    if abs(rep.kappa - kappa) > tol_kappa:
        raise NoConvergence(f"|Pi - kappa| = {abs(rep.kappa - kappa):.3e} exceeds tolerance", best=rep)
    rep.message = f"eta={eta_star!r}"
    return rep
