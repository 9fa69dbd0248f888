"""CSV ingestion, run configuration and result records.

Configurations are YAML mappings; matrices (initial values, group elements,
simulation scatter) are referenced as CSV files. Result records are JSON
lines. Floats are written with ``repr``, which round-trips every double.
"""
import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml

from . import __version__
from .errors import InvalidInput, ParseError

COMMANDS = ("estimate", "simulate", "path", "compare", "check")
ALGORITHMS = ("reweight", "fixed_point", "constrained")
CENTERINGS = ("none", "mean", "marginal_median")
SEED_ENV = "MSCATTER_SEED"


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _parse_row(cells, lineno):
    try:
        vals = [float(c) for c in cells]
    except ValueError:
        raise ParseError(f"non-numeric cell in {cells!r}", line=lineno) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite value", line=lineno)
    return vals


def _is_numeric_row(cells):
    try:
        [float(c) for c in cells]
    except ValueError:
        return False
    return True


def read_matrix_csv(path):
    """Rectangular numeric CSV as a 2-D array; a non-numeric first row is a header."""
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in cells]
            if not cells or cells == [""]:
                continue
            if lineno == 1 and not _is_numeric_row(cells):
                continue
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ParseError(f"expected {width} columns, found {len(cells)}", line=lineno)
            rows.append(_parse_row(cells, lineno))
    if not rows:
        raise ParseError("no data rows", line=None)
    return np.array(rows, dtype=float)


def lower_median(X):
    """Columnwise median; for even ``n`` the lower of the two middle values."""
    Xs = np.sort(X, axis=0)
    return Xs[(X.shape[0] - 1) // 2]


def center(X, centering="marginal_median"):
    if centering not in CENTERINGS:
        raise InvalidInput(f"centering must be one of {CENTERINGS}")
    if centering == "none":
        return X.copy()
    loc = X.mean(axis=0) if centering == "mean" else lower_median(X)
    return X - loc


def load_csv(path, centering="marginal_median"):
    """Observations from a CSV file, centered columnwise.

    Raises
    ------
    ParseError
        Ragged rows, non-numeric cells or no data rows; the message carries
        the 1-based line number.
    """
    return center(read_matrix_csv(path), centering)


def write_csv(path, X, header=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(header)
        for row in X:
            w.writerow([repr(float(v)) for v in row])


def read_matrices_csv(path, q):
    """A vertical stack of ``q x q`` blocks, e.g. group elements."""
    A = read_matrix_csv(path)
    if A.shape[1] != q or A.shape[0] % q:
        raise ParseError(f"expected a stack of {q}x{q} blocks, got shape {A.shape}")
    return [A[i:i + q] for i in range(0, A.shape[0], q)]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_SOLVE_KEYS = ("max_iters", "tol_rel", "tol_dist", "divergence_norm", "record_trace")


@dataclass
class RunConfig:
    command: str
    data_path: Optional[str] = None
    loss: Dict[str, Any] = field(default_factory=lambda: {"name": "gaussian"})
    penalty: Optional[Dict[str, Any]] = None
    eta: Union[float, List[float]] = 0.0
    algorithm: str = "reweight"
    constraint: Optional[Dict[str, Any]] = None   # p1, p2, optional k1/k2 CSV paths
    centering: str = "marginal_median"
    init_path: Optional[str] = None
    solve: Dict[str, Any] = field(default_factory=dict)
    output_path: Optional[str] = None
    seed: int = 0
    simulate: Optional[Dict[str, Any]] = None     # family, n, nu, sigma (list) or sigma_path

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.command not in COMMANDS:
            raise InvalidInput(f"command must be one of {COMMANDS}")
        if self.algorithm not in ALGORITHMS:
            raise InvalidInput(f"algorithm must be one of {ALGORITHMS}")
        if self.centering not in CENTERINGS:
            raise InvalidInput(f"centering must be one of {CENTERINGS}")
        if not isinstance(self.loss, dict) or "name" not in self.loss:
            raise InvalidInput("loss must be a mapping with a name")
        if self.penalty is not None and (not isinstance(self.penalty, dict) or "name" not in self.penalty):
            raise InvalidInput("penalty must be a mapping with a name")
        unknown = set(self.solve) - set(_SOLVE_KEYS)
        if unknown:
            raise InvalidInput(f"unknown solve options {sorted(unknown)}")
        etas = self.eta_grid()
        if any(not math.isfinite(e) or e < 0 for e in etas):
            raise InvalidInput("eta must be finite and nonnegative")
        if self.command == "path":
            if self.penalty is None:
                raise InvalidInput("path needs a penalty")
            if len(etas) < 1:
                raise InvalidInput("path needs an eta grid")
        elif isinstance(self.eta, list):
            raise InvalidInput(f"{self.command} takes a single eta")
        if self.command == "estimate" and self.data_path is None:
            raise InvalidInput("estimate needs data_path")
        if self.command == "simulate":
            if not self.simulate:
                raise InvalidInput("simulate needs a simulate section")
            if self.output_path is None:
                raise InvalidInput("simulate needs output_path")
        if self.algorithm == "constrained" and not self.constraint:
            raise InvalidInput("constrained algorithm needs a constraint section")
        if any(e > 0 for e in etas) and self.penalty is None:
            raise InvalidInput("eta > 0 needs a penalty")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInput("seed must be a 64-bit unsigned integer")

    def eta_grid(self):
        if isinstance(self.eta, (list, tuple)):
            return [float(e) for e in self.eta]
        return [float(self.eta)]

    def to_dict(self):
        """Normalized form: every field present, eta as float or list of floats."""
        d = asdict(self)
        d["eta"] = self.eta_grid() if isinstance(self.eta, (list, tuple)) else float(self.eta)
        d["seed"] = int(self.seed)
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise InvalidInput("configuration must be a mapping")
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidInput(f"unknown configuration keys {sorted(unknown)}")
        if "command" not in d:
            raise InvalidInput("configuration needs a command")
        d = dict(d)
        if isinstance(d.get("eta"), (list, tuple)):
            d["eta"] = [float(e) for e in d["eta"]]
        elif d.get("eta") is not None:
            d["eta"] = float(d["eta"])
        else:
            d.pop("eta", None)
        d["solve"] = dict(d.get("solve") or {})
        return cls(**d)


def parse_config(text):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"invalid YAML: {exc}", line=None if mark is None else mark.line + 1) from None
    return RunConfig.from_dict(data or {})


def dump_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# result records
# ---------------------------------------------------------------------------

def _num_out(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _num_in(x):
    if x is None:
        return None
    return float(x)


@dataclass
class ResultRecord:
    config: Dict[str, Any]
    status: str
    estimate: Optional[List[List[float]]] = None
    iters: Optional[int] = None
    final_objective: Optional[float] = None
    final_residual: Optional[float] = None
    objective_trace: Optional[List[float]] = None
    timing: Optional[float] = None
    version: str = __version__
    kappa: Optional[float] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def estimate_array(self):
        return None if self.estimate is None else np.array(self.estimate, dtype=float)

    def to_json(self):
        """One JSON line; non-finite floats are written as strings ("nan", "inf")."""
        d = asdict(self)
        for key in ("final_objective", "final_residual", "timing", "kappa"):
            d[key] = _num_out(d[key])
        if d["objective_trace"] is not None:
            d["objective_trace"] = [_num_out(v) for v in d["objective_trace"]]
        if d["estimate"] is not None:
            d["estimate"] = [[_num_out(v) for v in row] for row in d["estimate"]]
        return json.dumps(d, sort_keys=True, allow_nan=False, default=_json_default)

    @classmethod
    def from_json(cls, line):
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid result record: {exc}") from None
        for key in ("final_objective", "final_residual", "timing", "kappa"):
            d[key] = _num_in(d.get(key))
        if d.get("objective_trace") is not None:
            d["objective_trace"] = [_num_in(v) for v in d["objective_trace"]]
        if d.get("estimate") is not None:
            d["estimate"] = [[_num_in(v) for v in row] for row in d["estimate"]]
        return cls(**d)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def append_record(path, record):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")


def read_records(path):
    with open(path, encoding="utf-8") as fh:
        return [ResultRecord.from_json(line) for line in fh if line.strip()]
