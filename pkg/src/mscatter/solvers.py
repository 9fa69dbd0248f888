"""Outer iterations for penalized M-estimation of scatter.

Two algorithms are provided:

* :func:`fixed_point_iterate` iterates the penalized estimating equation
  ``S <- M(S) + eta * grad Pi(S^{-1})`` directly. It carries no descent
  guarantee and may leave the SPD cone; that outcome is reported, not raised.
* :func:`reweight_solve` alternates the weighted covariance ``M(S_k)`` with an
  exact solve of the penalized Gaussian problem at ``M(S_k)``. For concave,
  g-convex ``rho`` the penalized M-loss never increases along the iterates.
"""
import enum
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DomainError, InternalError, InvalidInput, NotSpd, Unsupported
from .losses import (TYLER, as_data, make_loss, nonzero_rows, penalized_loss,
                     sample_cov, weighted_cov)
from .penalties import (GaussianSubproblem, check_eta, penalty_grad_inv,
                        solve_subproblem)
from .spd import as_spd, is_spd, riemannian_distance

MONOTONE_TOL = 1e-10


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    DIVERGED = "Diverged"
    NOT_SPD = "NotSpd"
    INTERNAL_ERROR = "InternalError"


@dataclass
class SolveOptions:
    max_iters: int = 1000
    tol_rel: float = 1e-9
    tol_dist: float = 1e-8
    divergence_norm: float = 1e12
    record_trace: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidInput("max_iters must be positive")
        for name in ("tol_rel", "tol_dist", "divergence_norm"):
            if not getattr(self, name) > 0:
                raise InvalidInput(f"{name} must be positive")


@dataclass
class SolveReport:
    """Outcome of an iterative solve.

    ``iters`` counts the updates made before the fixed point was reached; the
    final confirming update that moved the iterate by less than the tolerance
    is not counted. ``objective_trace[k]`` is the objective at iterate ``k``
    (starting from the initial value).
    """

    estimate: np.ndarray
    status: Status
    iters: int
    objective_trace: List[float] = field(default_factory=list)
    distance_trace: List[float] = field(default_factory=list)
    final_residual: float = float("nan")
    final_objective: float = float("nan")
    message: str = ""
    eta: Optional[float] = None
    kappa: Optional[float] = None

    @property
    def converged(self):
        return self.status == Status.CONVERGED


def default_init(X):
    """``tr(S_n)/p * I`` when the trace is positive, else the identity."""
    X = as_data(X)
    p = X.shape[1]
    t = float(np.trace(sample_cov(X))) / p if X.shape[0] else 0.0
    return np.eye(p) * (t if t > 0 else 1.0)


def _start(X, S0):
    return default_init(X) if S0 is None else as_spd(S0, "initial value")


def _objective(loss, X, S, penalty, eta):
    try:
        return penalized_loss(loss, X, S, penalty, eta)
    except (ValueError, np.linalg.LinAlgError):
        return float("nan")


def estimating_equation_residual(X, loss, penalty, eta, S):
    """Relative residual ``||S - M(S) - eta grad Pi(S^{-1})||_F / (1 + ||S||_F)``.

    Non-smooth penalties have no estimating equation; use
    :func:`mscatter.diagnostics.directional_optimality` instead.
    """
    S = as_spd(S)
    R = S - weighted_cov(loss, X, S)
    if eta:
        if penalty is None:
            raise InvalidInput("eta > 0 needs a penalty")
        if not penalty.smooth:
            raise Unsupported(f"{penalty.name} penalty has no estimating equation")
        R = R - eta * penalty_grad_inv(penalty, S)
    return float(np.linalg.norm(R) / (1.0 + np.linalg.norm(S)))


def _residual_or_nan(X, loss, penalty, eta, S):
    try:
        return estimating_equation_residual(X, loss, penalty, eta, S)
    except Unsupported:
        return float("nan")


def fixed_point_iterate(X, loss, penalty, eta, S0=None, opts=None):
    """Iterate ``S_{k+1} = M(S_k) + eta * grad Pi(S_k^{-1})``.

    Stops with ``Converged`` once successive iterates are within
    ``opts.tol_dist`` in Riemannian distance, and with ``Diverged`` when an
    iterate leaves the SPD cone, exceeds ``opts.divergence_norm`` in Frobenius
    norm, or the step length grows by a factor of 1e6 over the first step.
    """
    opts = opts or SolveOptions()
    X = as_data(X)
    if eta < 0:
        raise InvalidInput("eta must be nonnegative")
    if eta and (penalty is None or not penalty.smooth):
        raise Unsupported("the fixed-point iteration needs a smooth penalty")
    S = _start(X, S0)
    trace = [_objective(loss, X, S, penalty, eta)] if opts.record_trace else []
    dists = []
    first = None
    status = Status.MAX_ITERS
    message = ""
    k = 0
    for k in range(1, opts.max_iters + 1):
        S_new = weighted_cov(loss, X, S)
        if eta:
            S_new = S_new + eta * penalty_grad_inv(penalty, S)
        S_new = 0.5 * (S_new + S_new.T)
        if not np.all(np.isfinite(S_new)) or np.linalg.norm(S_new) > opts.divergence_norm:
            status, message = Status.DIVERGED, f"iterate norm blew up at step {k}"
            break
        if not is_spd(S_new):
            status, message = Status.DIVERGED, f"iterate left the SPD cone at step {k}"
            break
        dist = riemannian_distance(S, S_new)
        dists.append(dist)
        S = S_new
        if opts.record_trace:
            trace.append(_objective(loss, X, S, penalty, eta))
        if first is None:
            first = dist
        if dist <= opts.tol_dist:
            status = Status.CONVERGED
            k -= 1
            break
        if first > 0 and dist > 1e6 * first:
            status, message = Status.DIVERGED, f"step length grew by 1e6 at step {k}"
            break
    return SolveReport(
        estimate=S, status=status, iters=k, objective_trace=trace,
        distance_trace=dists,
        final_residual=_residual_or_nan(X, loss, penalty, eta, S),
        final_objective=_objective(loss, X, S, penalty, eta), message=message,
    )


def _reweight_loop(X, loss, penalty, eta, S, opts, normalize, subproblem_method):
    p = S.shape[0]
    obj = penalized_loss(loss, X, S, penalty, eta)
    trace = [obj] if opts.record_trace else []
    dists = []
    status = Status.MAX_ITERS
    message = ""
    k = 0
    for k in range(1, opts.max_iters + 1):
        M = weighted_cov(loss, X, S)
        try:
            S_new = solve_subproblem(GaussianSubproblem(M, eta, penalty, init=S),
                                     method=subproblem_method)
        except Unsupported as exc:
            status, message = Status.DIVERGED, f"step {k}: {exc}"
            break
        if normalize:
            S_new = S_new * (p / np.trace(S_new))
        if not is_spd(S_new) or np.linalg.norm(S_new) > opts.divergence_norm:
            status, message = Status.DIVERGED, f"iterate degenerated at step {k}"
            break
        obj_new = penalized_loss(loss, X, S_new, penalty, eta)
        dist = riemannian_distance(S, S_new)
        dists.append(dist)
        if obj_new > obj + MONOTONE_TOL * max(1.0, abs(obj)):
            status = Status.INTERNAL_ERROR
            message = f"objective increased by {obj_new - obj:.3e} at step {k}"
            if opts.record_trace:
                trace.append(obj_new)
            S = S_new
            break
        small_obj = abs(obj - obj_new) <= opts.tol_rel * (1.0 + abs(obj_new))
        S, obj = S_new, obj_new
        if opts.record_trace:
            trace.append(obj)
        if small_obj and dist <= opts.tol_dist:
            status = Status.CONVERGED
            k -= 1
            break
    return SolveReport(
        estimate=S, status=status, iters=k, objective_trace=trace,
        distance_trace=dists,
        final_residual=_residual_or_nan(X, loss, penalty, eta, S),
        final_objective=obj, message=message,
    )


def reweight_solve(X, loss, penalty, eta, S0=None, opts=None, subproblem_method="auto"):
    """Monotone reweighting algorithm for penalized M-estimators.

    Each step forms ``M_k = M(S_k)`` and sets ``S_{k+1}`` to the minimizer of
    ``tr(S^{-1} M_k) + log det S + eta Pi(S)``. Converged once the objective
    change is at most ``tol_rel * (1 + |obj|)`` and the iterate moved at most
    ``tol_dist``. An objective increase beyond round-off ends the solve with
    ``InternalError`` status.

    Parameters
    ----------
    X : array_like, shape (n, p)
        Centered observations.
    loss : LossFamily
        Must have concave, g-convex ``rho``.
    penalty : Penalty or None
    eta : float
    S0 : array_like, optional
        Initial value; defaults to :func:`default_init`.
    opts : SolveOptions, optional
    subproblem_method : {"auto", "geodesic"}

    Returns
    -------
    SolveReport
    """
    opts = opts or SolveOptions()
    X = as_data(X)
    p = X.shape[1]
    if not (loss.concave_rho and loss.gconvex_rho):
        raise Unsupported("reweighting needs a concave, g-convex rho")
    if loss.name == TYLER and (eta == 0 or penalty is None):
        raise Unsupported("Tyler's loss without a penalty is scale-indeterminate; "
                          "use tyler_reweight_solve")
    if penalty is not None:
        check_eta(penalty, eta, p)
    elif eta:
        raise InvalidInput("eta > 0 needs a penalty")
    S = _start(X, S0)
    return _reweight_loop(X, loss, penalty, eta, S, opts, False, subproblem_method)


def tyler_reweight_solve(X, penalty=None, eta=0.0, S0=None, opts=None):
    """Reweighting for Tyler's loss ``rho(s) = p log s``.

    Zero rows are dropped. When ``eta == 0`` or the penalty is scale
    invariant the objective is constant along rays, so each iterate is
    rescaled to ``tr(S) = p``; otherwise the penalty fixes the scale and no
    rescaling is applied.
    """
    opts = opts or SolveOptions()
    X = as_data(X)
    p = X.shape[1]
    mask = nonzero_rows(X)
    if not mask.any():
        raise DomainError("all observations are zero")
    X = X[mask]
    loss = make_loss("tyler", p=p)
    if eta and penalty is None:
        raise InvalidInput("eta > 0 needs a penalty")
    if penalty is not None:
        check_eta(penalty, eta, p)
    normalize = eta == 0 or penalty is None or penalty.shape_invariant
    S = _start(X, S0)
    if normalize:
        S = S * (p / np.trace(S))
    try:
        return _reweight_loop(X, loss, penalty if eta else None, eta, S, opts,
                              normalize, "auto")
    except NotSpd as exc:
        return SolveReport(estimate=S, status=Status.DIVERGED, iters=0, message=str(exc))


def raise_on_internal_error(report):
    if report.status == Status.INTERNAL_ERROR:
        raise InternalError(report.message)
    return report
