"""Penalty functions and the penalized Gaussian subproblem.

The subproblem is

    minimize_{S > 0}  tr(S^{-1} M) + log det S + eta * Pi(S)

for a PSD target ``M``. Every penalty here is orthogonally invariant, so
the minimizer shares eigenvectors with ``M`` and only the eigenvalues need
solving; several families have closed forms. ``generic_geodesic_descent``
solves any smooth instance directly on the SPD manifold and serves as an
independent check on the spectral routes.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import EtaTooSmall, InvalidInput, NoConvergence, Unsupported
from .spd import as_spd, expm, logdet, sym, sym_eigen

KL = "kl"
SYM_KL = "symkl"
TRACE_PRECISION = "trace_precision"
RIEMANNIAN = "riemannian"
RIEMANNIAN_SHAPE = "riemannian_shape"
ELASSO = "elasso"
LOG_CONDITION = "logcn"

PENALTY_NAMES = (KL, SYM_KL, TRACE_PRECISION, RIEMANNIAN, RIEMANNIAN_SHAPE,
                 ELASSO, LOG_CONDITION)

_ALIASES = {
    "kl": KL, "kullback_leibler": KL,
    "symkl": SYM_KL, "sym_kl": SYM_KL, "kls": SYM_KL,
    "trace_precision": TRACE_PRECISION, "tp": TRACE_PRECISION, "tr_inv": TRACE_PRECISION,
    "riemannian": RIEMANNIAN, "r": RIEMANNIAN,
    "riemannian_shape": RIEMANNIAN_SHAPE, "rs": RIEMANNIAN_SHAPE,
    "elasso": ELASSO,
    "logcn": LOG_CONDITION, "log_condition_number": LOG_CONDITION, "cn": LOG_CONDITION,
}


@dataclass(frozen=True)
class Penalty:
    """A g-convex penalty on SPD matrices.

    ``a`` holds the descending coefficient vector of the elasso penalty and is
    ignored by the other families.
    """

    name: str
    a: Optional[Tuple[float, ...]] = None

    @property
    def smooth(self):
        return self.name not in (ELASSO, LOG_CONDITION)

    @property
    def shape_invariant(self):
        if self.name in (RIEMANNIAN_SHAPE, LOG_CONDITION):
            return True
        if self.name == ELASSO:
            return abs(sum(self.a)) <= 1e-12 * max(1.0, max(abs(x) for x in self.a))
        return False

    @property
    def strictly_gconvex(self):
        return self.name in (KL, SYM_KL, RIEMANNIAN, TRACE_PRECISION)

    @property
    def eta_floor(self):
        return 0.0

    def coefficients(self, p):
        """Eigenvalue coefficients for the spectral (elasso-type) families."""
        if self.name == LOG_CONDITION:
            a = np.zeros(p)
            if p > 1:
                a[0], a[-1] = 1.0, -1.0
            return a
        if self.name == ELASSO:
            a = np.asarray(self.a, dtype=float)
            if a.size != p:
                raise InvalidInput(f"elasso coefficient vector has length {a.size}, expected {p}")
            return a
        raise Unsupported(f"{self.name} has no eigenvalue coefficient vector")

    def describe(self):
        out = {"name": self.name}
        if self.a is not None:
            out["a"] = list(self.a)
        return out


def make_penalty(name, a=None):
    key = _ALIASES.get(str(name).lower())
    if key is None:
        raise InvalidInput(f"unknown penalty {name!r}")
    if key != ELASSO:
        return Penalty(key)
    if a is None:
        raise InvalidInput("elasso needs a coefficient vector a")
    a = tuple(float(x) for x in a)
    if not all(np.isfinite(a)):
        raise InvalidInput("elasso coefficients must be finite")
    if any(a[i] < a[i + 1] for i in range(len(a) - 1)):
        raise InvalidInput("elasso coefficients must be in descending order")
    return Penalty(ELASSO, a)


def penalty_value(pen, S):
    S = as_spd(S)
    p = S.shape[0]
    if pen.name in (KL, SYM_KL, TRACE_PRECISION):
        tr_inv = float(np.trace(np.linalg.inv(S)))
        if pen.name == TRACE_PRECISION:
            return tr_inv
        if pen.name == KL:
            return tr_inv + logdet(S)
        return tr_inv + float(np.trace(S))
    lam = sym_eigen(S).eigenvalues
    loglam = np.log(lam)
    if pen.name == RIEMANNIAN:
        return float(np.sum(loglam ** 2))
    if pen.name == RIEMANNIAN_SHAPE:
        c = loglam - loglam.mean()
        return float(np.sum(c ** 2))
    return float(np.dot(pen.coefficients(p), loglam))


def penalty_grad_inv(pen, S):
    """Gradient of the penalty with respect to the precision matrix ``S^{-1}``.

    The fixed-point update reads ``S_new = M(S) + eta * penalty_grad_inv(pen, S)``.
    """
    if not pen.smooth:
        raise Unsupported(f"{pen.name} penalty is not differentiable")
    S = as_spd(S)
    p = S.shape[0]
    eye = np.eye(p)
    if pen.name == TRACE_PRECISION:
        return eye
    if pen.name == KL:
        return eye - S
    if pen.name == SYM_KL:
        return eye - S @ S
    w, V = sym_eigen(S)
    lw = np.log(w)
    if pen.name == RIEMANNIAN_SHAPE:
        lw = lw - lw.mean()
    return sym(-2.0 * (V * (lw * w)) @ V.T)


def penalty_infimum(pen, p):
    """``inf Pi(S)`` over SPD matrices of order ``p`` (may be ``-inf``)."""
    if pen.name == KL:
        return float(p)
    if pen.name == SYM_KL:
        return 2.0 * p
    if pen.name in (TRACE_PRECISION, RIEMANNIAN, RIEMANNIAN_SHAPE, LOG_CONDITION):
        return 0.0
    a = pen.coefficients(p)
    prefix = np.cumsum(a)
    if abs(prefix[-1]) > 1e-12 or np.any(prefix[:-1] < -1e-12):
        return -np.inf
    return 0.0


def eta_is_admissible(pen, eta, p):
    """Whether the penalized Gaussian subproblem is coercive at ``eta``.

    For the eigenvalue-coefficient families with a strictly positive target,
    coercivity holds iff every prefix sum of ``1 + eta * a_i`` is positive.
    """
    if not np.isfinite(eta) or eta < 0:
        return False
    if pen.smooth:
        return True
    c = 1.0 + eta * pen.coefficients(p)
    return bool(np.all(np.cumsum(c) > 0))


def check_eta(pen, eta, p):
    if not np.isfinite(eta) or eta < 0:
        raise InvalidInput(f"eta must be a finite nonnegative number, got {eta}")
    if not eta_is_admissible(pen, eta, p):
        raise EtaTooSmall(f"{pen.name} penalty subproblem is not coercive at eta={eta}")


# ---------------------------------------------------------------------------
# eigenvalue solvers
# ---------------------------------------------------------------------------

def pava_log_eigen(d, a, eta):
    """Ordered eigenvalue solve for elasso-type penalties.

    Minimizes ``sum_i d_i exp(-theta_i) + (1 + eta a_i) theta_i`` over
    ``theta_1 >= ... >= theta_p`` by pooling adjacent violators and returns
    ``exp(theta)``. On a pooled block ``B`` the optimum is
    ``theta_B = log(sum_B d / sum_B (1 + eta a))``.

    Parameters
    ----------
    d : array_like
        Strictly positive, descending eigenvalues of the target.
    a : array_like
        Descending coefficients.
    eta : float

    Returns
    -------
    ndarray
        Descending optimal eigenvalues.
    """
    d = np.asarray(d, dtype=float)
    a = np.asarray(a, dtype=float)
    if d.shape != a.shape or d.ndim != 1:
        raise InvalidInput("d and a must be vectors of equal length")
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise InvalidInput("d must be strictly positive")
    c = 1.0 + eta * a
    if np.any(np.cumsum(c) <= 0):
        raise EtaTooSmall(f"subproblem is not coercive at eta={eta}")
    # stack of blocks: [start, end, sum_d, sum_c]
    blocks = []

    def level(blk):
        return np.log(blk[2] / blk[3]) if blk[3] > 0 else np.inf

    for i in range(d.size):
        blocks.append([i, i + 1, d[i], c[i]])
        while len(blocks) > 1 and level(blocks[-1]) > level(blocks[-2]):
            top = blocks.pop()
            blocks[-1][1] = top[1]
            blocks[-1][2] += top[2]
            blocks[-1][3] += top[3]
    out = np.empty_like(d)
    for start, end, sd, sc in blocks:
        out[start:end] = sd / sc
    return out


def _spectral_newton(d, eta, shape, tol=1e-14, max_iter=200):
    """Minimize ``sum d_i e^{-t_i} + t_i + eta * Q(t)`` by damped Newton.

    ``Q(t) = ||t||^2`` or, for the shape variant, ``||t - mean(t)||^2``.
    """
    p = d.size
    t = np.where(d > 0, np.log(np.where(d > 0, d, 1.0)), 0.0)
    centre = np.eye(p) - np.full((p, p), 1.0 / p) if shape else np.eye(p)

    def obj(t):
        q = t - t.mean() if shape else t
        return np.sum(d * np.exp(-t) + t) + eta * np.dot(q, q)

    f = obj(t)
    polish = 0
    for _ in range(max_iter):
        q = t - t.mean() if shape else t
        g = -d * np.exp(-t) + 1.0 + 2.0 * eta * q
        H = np.diag(d * np.exp(-t)) + 2.0 * eta * centre
        step = np.linalg.solve(H, g)
        dec = float(np.dot(g, step))
        if dec <= tol * (1.0 + abs(f)):
            # quadratic regime: f no longer resolves progress, take full steps
            if polish == 2 or dec == 0.0:
                break
            t = t - step
            f = obj(t)
            polish += 1
            continue
        s = 1.0
        while True:
            t_new = t - s * step
            f_new = obj(t_new)
            if f_new <= f - 0.25 * s * dec or s < 1e-12:
                break
            s *= 0.5
        if f_new > f:
            break
        t, f = t_new, f_new
    return np.exp(t)


# ---------------------------------------------------------------------------
# generic manifold descent
# ---------------------------------------------------------------------------

def gaussian_subproblem_objective(M, eta, pen):
    """Objective and Euclidean gradient (w.r.t. ``S``) of the penalized Gaussian problem."""
    from .losses import gaussian_objective

    def f(S):
        return gaussian_objective(S, M, eta, pen)

    def grad(S):
        Om = np.linalg.inv(S)
        inner = M + (eta * penalty_grad_inv(pen, S) if eta else 0.0)
        return sym(Om - Om @ inner @ Om)

    return f, grad


def generic_geodesic_descent(f, grad, S0, tol=1e-9, max_iter=500, c1=1e-4,
                             shrink=0.5, step0=1.0):
    """Riemannian steepest descent on the SPD cone with Armijo backtracking.

    With ``S = B B^T`` and Euclidean gradient ``G``, the search direction in
    whitened coordinates is ``xi = B^T G B`` and the trial point is
    ``B expm(-t xi) B^T``. The factor is carried along the geodesic as
    ``B expm(-t xi / 2)``, so successive directions share coordinates and the
    first trial step is the Barzilai-Borwein step from the previous pair.
    Stops when ``||xi||_F <= tol``.

    Parameters
    ----------
    f, grad : callable
        Objective and its Euclidean gradient with respect to ``S``.
    S0 : array_like
        Starting point.

    Returns
    -------
    ndarray
        Approximate minimizer.

    Raises
    ------
    NoConvergence
        After ``max_iter`` iterations; the best iterate is attached.
    """
    S = as_spd(S0)
    B = np.linalg.cholesky(S)
    fS = f(S)
    prev = None             # (step taken in whitened coordinates, previous direction)
    for _ in range(max_iter):
        xi = sym(B.T @ grad(S) @ B)
        gn2 = float(np.sum(xi * xi))
        if np.sqrt(gn2) <= tol:
            return S
        t = step0
        if prev is not None:
            step, xi_old = prev
            sy = float(np.sum(step * (xi - xi_old)))
            if sy > 0:
                t = float(np.clip(np.sum(step * step) / sy, 1e-10, 1e10))
        # below this the Armijo decrease is lost in rounding of f
        floor = 1e-13 * (1.0 + abs(fS))
        accepted = False
        while t > 1e-16:
            E = expm(-0.5 * t * xi)
            trial = sym(B @ E @ E @ B.T)
            try:
                f_trial = f(trial)
            except (ValueError, np.linalg.LinAlgError):
                f_trial = np.inf
            if c1 * t * gn2 >= floor:
                if f_trial <= fS - c1 * t * gn2:
                    accepted = True
                    t, f_trial = _interpolate_step(f, B, xi, fS, gn2, t, f_trial)
                    E = expm(-0.5 * t * xi)
                    break
            elif f_trial <= fS + floor:
                # f cannot certify descent here; require a smaller gradient
                Bt = B @ E
                xi_t = Bt.T @ grad(trial) @ Bt
                if np.sum(xi_t * xi_t) < gn2:
                    accepted = True
                    break
            t *= shrink
        if not accepted:
            raise NoConvergence("line search failed", best=S)
        B = B @ E
        S, fS = sym(B @ B.T), f_trial
        prev = (-t * xi, xi)
    xi = B.T @ grad(S) @ B
    if np.linalg.norm(xi) <= tol:
        return S
    raise NoConvergence(f"no convergence in {max_iter} iterations", best=S)


def _interpolate_step(f, B, xi, fS, gn2, t, f_trial):
    """Step length from the quadratic through ``f(0)``, ``f'(0)`` and ``f(t)`` if it does better."""
    curv = f_trial - fS + t * gn2
    if curv <= 0:
        return t, f_trial
    tq = min(0.5 * gn2 * t * t / curv, 4.0 * t)
    if abs(tq - t) <= 1e-3 * t:
        return t, f_trial
    try:
        fq = f(sym(B @ expm(-tq * xi) @ B.T))
    except (ValueError, np.linalg.LinAlgError):
        return t, f_trial
    return (tq, fq) if fq < f_trial else (t, f_trial)


# ---------------------------------------------------------------------------
# subproblem
# ---------------------------------------------------------------------------

@dataclass
class GaussianSubproblem:
    M: np.ndarray
    eta: float
    penalty: Penalty
    init: Optional[np.ndarray] = field(default=None, repr=False)


def solve_subproblem(sp, method="auto"):
    """Global minimizer of ``tr(S^{-1} M) + log det S + eta Pi(S)``.

    Parameters
    ----------
    sp : GaussianSubproblem
    method : {"auto", "geodesic"}
        ``"auto"`` uses closed forms or spectral reductions; ``"geodesic"``
        forces :func:`generic_geodesic_descent` (smooth penalties only).

    Returns
    -------
    ndarray
        SPD minimizer.
    """
    M = sym(np.asarray(sp.M, dtype=float))
    p = M.shape[0]
    eta = float(sp.eta)
    pen = sp.penalty
    if pen is not None:
        check_eta(pen, eta, p)
    w, V = sym_eigen(M)
    floor = 1e-13 * max(1.0, abs(w[0]))

    if eta == 0.0 or pen is None:
        if w[-1] <= floor:
            raise Unsupported("target is singular and eta = 0; the unpenalized minimizer does not exist")
        return M.copy()

    if method == "geodesic":
        if not pen.smooth:
            raise Unsupported("geodesic descent needs a smooth penalty")
        f, grad = gaussian_subproblem_objective(M, eta, pen)
        S0 = sp.init if sp.init is not None else _default_start(M)
        return generic_geodesic_descent(f, grad, S0)
    if method != "auto":
        raise InvalidInput(f"unknown subproblem method {method!r}")

    eye = np.eye(p)
    if pen.name == KL:
        return sym((M + eta * eye) / (1.0 + eta))
    if pen.name == TRACE_PRECISION:
        return sym(M + eta * eye)
    if pen.name == SYM_KL:
        ev = w + eta
        sig = 2.0 * ev / (1.0 + np.sqrt(1.0 + 4.0 * eta * ev))
        return sym((V * sig) @ V.T)
    d = np.clip(w, 0.0, None)
    if pen.name in (RIEMANNIAN, RIEMANNIAN_SHAPE):
        if pen.name == RIEMANNIAN_SHAPE and d[0] <= floor:
            raise Unsupported("target is zero; shape-penalized subproblem is unbounded")
        lam = _spectral_newton(d, eta, shape=(pen.name == RIEMANNIAN_SHAPE))
        return sym((V * lam) @ V.T)
    if d[-1] <= floor:
        raise Unsupported(f"{pen.name} subproblem needs a nonsingular target")
    lam = pava_log_eigen(d, pen.coefficients(p), eta)
    return sym((V * lam) @ V.T)


def _default_start(M):
    p = M.shape[0]
    t = np.trace(M) / p
    return np.eye(p) * (t if t > 0 else 1.0)
