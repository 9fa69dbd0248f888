"""Command-line interface: ``mscatter {estimate,simulate,path,compare,check}``.

Every run prints one JSON result record per solve to stdout (or appends to
``--record``). Errors are printed to stderr as a JSON object. Exit status is
0 on success, 2 when a solve diverges or runs out of iterations, and 1 on
usage or input errors.
"""
import argparse
import json
import os
import sys
import time

import numpy as np

from .diagnostics import (check_gconvexity, directional_optimality,
                          existence_check, gcoercivity_probe)
from .errors import BudgetExceeded, MScatterError, NoConvergence
from .io import (ALGORITHMS, CENTERINGS, COMMANDS, SEED_ENV, ResultRecord,
                 RunConfig, append_record, load_config, load_csv,
                 read_matrices_csv, read_matrix_csv, write_csv)
from .losses import make_loss, penalized_loss
from .penalties import make_penalty, penalty_value
from .sampling import EllipticalSpec, example1_dataset, sample_elliptical
from .solvers import SolveOptions, Status, fixed_point_iterate
from .structure import (KroneckerGroupConstraint, constrained_reweight_solve,
                        duality_path, penalized_solve)

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# building blocks from a config
# ---------------------------------------------------------------------------

def build_loss(cfg, p):
    spec = dict(cfg.loss)
    return make_loss(spec.pop("name"), p=p, **spec)


def build_penalty(cfg):
    if cfg.penalty is None:
        return None
    spec = dict(cfg.penalty)
    return make_penalty(spec.pop("name"), **spec)


def build_options(cfg):
    return SolveOptions(**cfg.solve)


def build_constraint(cfg):
    c = dict(cfg.constraint)
    p1, p2 = int(c["p1"]), int(c["p2"])
    K1 = read_matrices_csv(c["k1"], p1) if c.get("k1") else [np.eye(p1)]
    K2 = read_matrices_csv(c["k2"], p2) if c.get("k2") else [np.eye(p2)]
    return KroneckerGroupConstraint(p1, p2, K1, K2)


def load_data(cfg):
    if cfg.data_path is None:
        return example1_dataset()
    return load_csv(cfg.data_path, cfg.centering)


def load_init(cfg):
    return None if cfg.init_path is None else read_matrix_csv(cfg.init_path)


def _record(cfg, rep, penalty=None, t0=None, **extra):
    kappa = None
    if penalty is not None and rep.estimate is not None:
        try:
            kappa = penalty_value(penalty, rep.estimate)
        except MScatterError:
            kappa = float("nan")
    return ResultRecord(
        config=cfg.to_dict(), status=rep.status.value,
        estimate=np.asarray(rep.estimate).tolist(), iters=int(rep.iters),
        final_objective=rep.final_objective, final_residual=rep.final_residual,
        objective_trace=list(rep.objective_trace) or None,
        timing=None if t0 is None else time.perf_counter() - t0,
        kappa=kappa, extra=dict(extra, message=rep.message) if rep.message else dict(extra),
    )


def _exit_for(statuses):
    return EXIT_OK if all(s == Status.CONVERGED.value for s in statuses) else EXIT_FAILED


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def solve_once(cfg, X, loss, penalty, eta, S0=None):
    opts = build_options(cfg)
    if cfg.algorithm == "fixed_point":
        return fixed_point_iterate(X, loss, penalty, eta, S0, opts)
    if cfg.algorithm == "constrained":
        if penalty is not None and eta:
            raise UsageError("the constrained algorithm takes no penalty")
        return constrained_reweight_solve(X, loss, build_constraint(cfg), S0, opts)
    return penalized_solve(X, loss, penalty, eta, S0, opts)


def cmd_estimate(cfg):
    t0 = time.perf_counter()
    X = load_data(cfg)
    loss, penalty = build_loss(cfg, X.shape[1]), build_penalty(cfg)
    eta = float(cfg.eta)
    rep = solve_once(cfg, X, loss, penalty, eta, load_init(cfg))
    rec = _record(cfg, rep, penalty=penalty, t0=t0)
    if cfg.output_path:
        write_csv(cfg.output_path, rep.estimate)
    return [rec], _exit_for([rec.status])


def cmd_simulate(cfg):
    t0 = time.perf_counter()
    sim = dict(cfg.simulate)
    if "sigma_path" in sim:
        sigma = read_matrix_csv(sim.pop("sigma_path"))
    else:
        sigma = np.array(sim.pop("sigma", [[1.0, 0.0], [0.0, 1.0]]), dtype=float)
    spec = EllipticalSpec(sim.pop("family", "gaussian"), sigma, int(sim.pop("n", 100)),
                          int(cfg.seed), nu=sim.pop("nu", None))
    if sim:
        raise UsageError(f"unknown simulate keys {sorted(sim)}")
    X = sample_elliptical(spec)
    write_csv(cfg.output_path, X, header=[f"x{j + 1}" for j in range(X.shape[1])])
    rec = ResultRecord(config=cfg.to_dict(), status="Complete",
                       timing=time.perf_counter() - t0,
                       extra={"n": int(X.shape[0]), "p": int(X.shape[1])})
    return [rec], EXIT_OK


def cmd_path(cfg):
    t0 = time.perf_counter()
    X = load_data(cfg)
    loss, penalty = build_loss(cfg, X.shape[1]), build_penalty(cfg)
    path = duality_path(X, loss, penalty, cfg.eta_grid(), build_options(cfg), load_init(cfg))
    objs = [penalized_loss(loss, X, S, penalty, e) for e, S in zip(path.eta_grid, path.estimates)]
    if cfg.output_path:
        write_csv(cfg.output_path, np.column_stack([path.eta_grid, path.kappa_values, objs]),
                  header=["eta", "kappa", "objective"])
    recs = []
    for eta, rep in zip(path.eta_grid, path.reports):
        rec = _record(cfg, rep, penalty=penalty, t0=t0, eta=float(eta))
        recs.append(rec)
    return recs, _exit_for([r.status for r in recs])


def compare_inits(p):
    """The identity and ``2 I + 1 1^T`` (``[[3, 1], [1, 3]]`` for ``p = 2``)."""
    return [np.eye(p), 2.0 * np.eye(p) + np.ones((p, p))]


def cmd_compare(cfg):
    X = load_data(cfg)
    p = X.shape[1]
    loss, penalty = build_loss(cfg, p), build_penalty(cfg)
    eta = float(cfg.eta)
    inits = compare_inits(p)
    if cfg.init_path:
        inits.append(read_matrix_csv(cfg.init_path))
    opts = build_options(cfg)
    recs = []
    for algorithm in ("fixed_point", "reweight"):
        for j, S0 in enumerate(inits):
            t0 = time.perf_counter()
            if algorithm == "fixed_point":
                rep = fixed_point_iterate(X, loss, penalty, eta, S0, opts)
            else:
                rep = penalized_solve(X, loss, penalty, eta, S0, opts)
            recs.append(_record(cfg, rep, penalty=penalty, t0=t0,
                                algorithm=algorithm, init=S0.tolist(), init_index=j))
    # compare's outcome is the table itself; divergence of the fixed point is
    # a finding, so only reweighting failures change the exit status
    return recs, _exit_for([r.status for r in recs if r.extra["algorithm"] == "reweight"])


def comparison_table(recs):
    lines = [f"{'algorithm':<12} {'init':>4} {'status':<10} {'iters':>5} {'objective':>22}"]
    for r in recs:
        lines.append(f"{r.extra['algorithm']:<12} {r.extra['init_index']:>4} {r.status:<10} "
                     f"{r.iters:>5} {r.final_objective!r:>22}")
    return "\n".join(lines)


def cmd_check(cfg):
    t0 = time.perf_counter()
    X = load_data(cfg)
    p = X.shape[1]
    loss, penalty = build_loss(cfg, p), build_penalty(cfg)
    eta = float(cfg.eta)

    def f(S):
        return penalized_loss(loss, X, S, penalty, eta)

    seed = int(cfg.seed)
    gc = check_gconvexity(f, p, trials=100, seed=seed)
    co = gcoercivity_probe(f, p, rays=20, seed=seed)
    try:
        ex = existence_check(X, loss)
    except BudgetExceeded as exc:
        ex = exc.fallback
    rep = penalized_solve(X, loss, penalty, eta, load_init(cfg), build_options(cfg))
    dd = directional_optimality(f, rep.estimate, seed=seed)
    extra = {
        "gconvexity": {"passed": gc.passed, "max_violation": gc.max_violation, "trials": gc.trials},
        "gcoercivity": {"min_growth": co.min_growth},
        "existence": {"holds": ex.holds, "heuristic": ex.heuristic,
                      "witness": None if ex.witness is None else ex.witness.tolist()},
        "directional": {"min_derivative": dd.min_derivative},
        "disclaimer": gc.disclaimer,
    }
    rec = _record(cfg, rep, penalty=penalty, t0=t0, **extra)
    rec.status = "Complete" if rep.status == Status.CONVERGED else rep.status.value
    return [rec], EXIT_OK if rep.status == Status.CONVERGED else EXIT_FAILED


COMMAND_FUNCS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "path": cmd_path,
                 "compare": cmd_compare, "check": cmd_check}


def run(cfg):
    """Execute a configuration; returns ``(records, exit_code)``."""
    return COMMAND_FUNCS[cfg.command](cfg)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = _Parser(prog="mscatter", description="Penalized and structured M-estimation of scatter.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--data", dest="data_path")
        sp.add_argument("--loss", help="gaussian, student_t, cauchy, tyler or huber")
        sp.add_argument("--nu", type=float)
        sp.add_argument("--r", type=float, help="Huber coverage probability")
        sp.add_argument("--penalty")
        sp.add_argument("--a", type=_float_list, help="comma-separated elasso coefficients")
        sp.add_argument("--eta", type=_float_list, help="value, or comma-separated grid for path")
        sp.add_argument("--algorithm", choices=ALGORITHMS)
        sp.add_argument("--centering", choices=CENTERINGS)
        sp.add_argument("--init", dest="init_path")
        sp.add_argument("--output", dest="output_path")
        sp.add_argument("--record", help="append JSON records here instead of stdout")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--n", type=int, help="simulate: sample size")
        sp.add_argument("--family", help="simulate: gaussian, student_t or cauchy")
    return parser


def config_from_args(args, env_seed=None):
    base = load_config(args.config).to_dict() if args.config else {}
    base["command"] = args.command
    for key in ("data_path", "algorithm", "centering", "init_path", "output_path"):
        if getattr(args, key) is not None:
            base[key] = getattr(args, key)
    if args.loss is not None:
        base["loss"] = {"name": args.loss}
    loss = dict(base.get("loss") or {"name": "gaussian"})
    if args.nu is not None:
        loss["nu"] = args.nu
    if args.r is not None:
        loss["r"] = args.r
    base["loss"] = loss
    if args.penalty is not None:
        base["penalty"] = {"name": args.penalty}
    if args.a is not None:
        base["penalty"] = dict(base.get("penalty") or {"name": "elasso"}, a=args.a)
    if args.eta is not None:
        base["eta"] = args.eta if args.command == "path" or len(args.eta) > 1 else args.eta[0]
    if args.max_iters is not None:
        base["solve"] = dict(base.get("solve") or {}, max_iters=args.max_iters)
    if args.seed is not None:
        base["seed"] = args.seed
    elif "seed" not in base and env_seed is not None:
        base["seed"] = env_seed
    if args.command == "simulate" and (args.n is not None or args.family or args.nu is not None):
        sim = dict(base.get("simulate") or {})
        if args.n is not None:
            sim["n"] = args.n
        if args.family:
            sim["family"] = args.family
        if args.nu is not None:
            sim["nu"] = args.nu
        base["simulate"] = sim
    if args.command == "simulate":
        base.setdefault("simulate", {})
        base["simulate"] = base["simulate"] or {"family": "gaussian"}
    return RunConfig.from_dict(base)


def _env_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw, 0)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _error(exc, code, stream):
    stream.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                             "exit_code": code}) + "\n")
    return code


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        env_seed = _env_seed()
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args, env_seed)
        records, code = run(cfg)
    except (UsageError, MScatterError, OSError, KeyError, TypeError) as exc:
        code = EXIT_FAILED if isinstance(exc, NoConvergence) else EXIT_USAGE
        return _error(exc, code, stderr)
    except Exception as exc:  # noqa: BLE001  never surface a bare traceback
        return _error(exc, EXIT_USAGE, stderr)
    for rec in records:
        if args.record:
            append_record(args.record, rec)
        else:
            stdout.write(rec.to_json() + "\n")
    if cfg.command == "compare":
        stderr.write(comparison_table(records) + "\n")
    return code


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
