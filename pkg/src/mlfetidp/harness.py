"""Experiment runner: single configurations, the two summary tables and eigenvalue dumps.

A configuration is a flat ``key = value`` text file, e.g.::

    # three levels, coarsening ratio 3 on both
    levels = 3
    ratios = 3
    constraints = c+e
    method = fetidp-mf
    tol = 1e-8

``ratios`` is either one value (repeated on every level) or a comma
separated list of ``levels - 1`` values.  Command-line flags override the
file.
"""

from __future__ import annotations

import configparser
import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .coarse import CONSTRAINT_SETS, EDGE_DOF_MODES, Multilevel
from .decomposition import build_hierarchy
from .fem import StructuredGrid, assemble_global
from .krylov import arnoldi_topk, dense_spectrum, gmres_right, pcg
from .precond import (
    BddcPreconditioner,
    FetiDpSaddleSystem,
    MFPreconditioner,
    SchurOperator,
    condensed_rhs,
    make_coarse_solver,
    recover_solution,
)

__all__ = [
    "METHODS",
    "TABLE_SHAPES",
    "ConfigError",
    "ExperimentConfig",
    "Setup",
    "ResultRow",
    "TableRow",
    "TableResult",
    "load_config",
    "build_setup",
    "estimate_lambda_max",
    "solve",
    "run_experiment",
    "run_table",
    "emit_eigs",
    "read_table_csv",
]

log = logging.getLogger(__name__)

METHODS = ("bddc-pcg", "bddc-gmres", "fetidp-mf", "fetidp-bd")
METHOD_LABELS = {"fetidp-bd": "BD", "fetidp-mf": "FETI-DP",
                 "bddc-gmres": "BDDC-GMRES", "bddc-pcg": "BDDC-PCG"}
# (ratio, levels) of the rows of both tables, in display order
TABLE_SHAPES = ((3, 2), (3, 3), (3, 4), (3, 5), (4, 2), (4, 3), (4, 4), (6, 2), (6, 3))
TABLE_CONSTRAINTS = {"table1": "c", "table2": "c+e"}
# interface sizes up to this use a dense eigensolve for lambda_max
DENSE_GUARD = 2000

_ALIASES = {"corners": "c", "corners_edges": "c+e", "c+e": "c+e", "c": "c"}


class ConfigError(ValueError):
    pass


def _parse_ratios(value, levels=None):
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    elif np.isscalar(value):
        value = [value]
    try:
        ratios = [int(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"ratios must be integers, got {value!r}") from None
    if levels is not None and len(ratios) == 1 and levels > 2:
        ratios = ratios * (levels - 1)
    return tuple(ratios)


@dataclass
class ExperimentConfig:
    """One experiment.

    ``method`` and ``constraints`` accept the spellings with ``-`` or ``_``
    (``fetidp_mf``) and the long names ``corners`` / ``corners_edges``.
    ``load`` is a constant body load or the string ``"random"`` for a
    seeded random load vector.
    """

    levels: int = 2
    ratios: tuple = (3,)
    constraints: str = "c"
    method: str = "bddc-pcg"
    tol: float = 1e-8
    load: float | str = 1.0
    eigs: str = "none"  # none | dense | topk
    eigs_k: int = 150
    edge_dofs: str = "all"
    seed: int = 0
    dense_guard: int = DENSE_GUARD

    def __post_init__(self):
        self.levels = int(self.levels)
        self.ratios = _parse_ratios(self.ratios, self.levels)
        self.constraints = _ALIASES.get(str(self.constraints).lower())
        if self.constraints is None:
            raise ConfigError(f"constraints must be one of {CONSTRAINT_SETS}")
        self.method = str(self.method).lower().replace("_", "-")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.levels < 2:
            raise ConfigError("need at least two levels")
        if len(self.ratios) != self.levels - 1:
            raise ConfigError(f"levels={self.levels} needs {self.levels - 1} ratios, "
                              f"got {list(self.ratios)}")
        if any(r < 2 for r in self.ratios):
            raise ConfigError("every ratio must be >= 2")
        self.tol = float(self.tol)
        if not 0 < self.tol < 1:
            raise ConfigError("tol must lie in (0, 1)")
        if self.load != "random":
            try:
                self.load = float(self.load)
            except ValueError:
                raise ConfigError("load must be a number or 'random'") from None
        if self.eigs not in ("none", "dense", "topk"):
            raise ConfigError("eigs must be none, dense or topk")
        if self.edge_dofs not in EDGE_DOF_MODES:
            raise ConfigError(f"edge_dofs must be one of {EDGE_DOF_MODES}")
        self.eigs_k = int(self.eigs_k)

    @property
    def ratio_label(self) -> str:
        r = set(self.ratios)
        return str(self.ratios[0]) if len(r) == 1 else ",".join(map(str, self.ratios))

    def replace(self, **kw) -> "ExperimentConfig":
        d = asdict(self)
        d.update(kw)
        return ExperimentConfig(**d)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a flat ``key = value`` file; ``None`` overrides are ignored."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, encoding="utf-8") as fh:
        parser.read_string("[run]\n" + fh.read())
    known = {f.name for f in fields(ExperimentConfig)}
    raw = {}
    for key, value in parser["run"].items():
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        raw[key] = value
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**raw)


# ---------------------------------------------------------------------------------

@dataclass
class Setup:
    """Everything a solve needs, shared by the methods of one table row."""

    config: ExperimentConfig
    problem: object
    hierarchy: object
    ml: Multilevel
    f: np.ndarray
    f_gamma: np.ndarray
    u_I0: np.ndarray
    setup_time: float

    @property
    def level(self):
        return self.ml.level(1)

    def coarse(self):
        return make_coarse_solver(self.ml, 1, "multilevel")

    def bddc_operator(self):
        """``M~ S^`` on the assembled interface."""
        return BddcPreconditioner(self.level, self.coarse()) * SchurOperator(self.level)

    def saddle_operator(self):
        """Left-preconditioned saddle operator ``M_F A``."""
        lv = self.level
        return MFPreconditioner(lv, self.coarse()) * FetiDpSaddleSystem(lv)


def build_setup(config: ExperimentConfig, backend=None) -> Setup:
    t0 = time.perf_counter()
    hierarchy = build_hierarchy(config.levels, config.ratios)
    problem = assemble_global(StructuredGrid(hierarchy.n),
                              1.0 if config.load == "random" else config.load)
    f = problem.f
    if config.load == "random":
        f = np.random.default_rng(config.seed).standard_normal(len(f))
    ml = Multilevel(problem, hierarchy, config.constraints, backend, config.edge_dofs)
    f_gamma, u_I0 = condensed_rhs(ml.level(1), f)
    return Setup(config, problem, hierarchy, ml, f, f_gamma, u_I0, time.perf_counter() - t0)


def estimate_lambda_max(setup: Setup, guard: int | None = None) -> tuple:
    """Largest eigenvalue of the multilevel BDDC operator and the method used."""
    guard = setup.config.dense_guard if guard is None else guard
    op = setup.bddc_operator()
    if op.shape[0] <= guard:
        spec = dense_spectrum(op)
    else:
        spec = arnoldi_topk(op, 1, tol=1e-10)
    return spec.lambda_max, spec.method


def solve(setup: Setup, method: str, tol: float | None = None):
    """Run one method; returns ``(report, u)`` with ``u`` on the free fine dofs."""
    tol = setup.config.tol if tol is None else tol
    lv = setup.level
    coarse = setup.coarse()
    if method.startswith("bddc"):
        op, prec = SchurOperator(lv), BddcPreconditioner(lv, coarse)
        if method == "bddc-pcg":
            rep = pcg(op, prec, setup.f_gamma, tol)
        else:
            rep = gmres_right(op, prec, setup.f_gamma, tol)
        return rep, lv.extend(rep.x, setup.u_I0)
    system = FetiDpSaddleSystem(lv)
    mode = "triangular" if method == "fetidp-mf" else "block_diagonal"
    rep = gmres_right(system, MFPreconditioner(lv, coarse, mode), system.rhs(setup.f_gamma), tol)
    u_c, lam = system.split(rep.x)
    _, u, _ = recover_solution(lv, u_c, lam, setup.f_gamma, setup.u_I0)
    return rep, u


@dataclass
class ResultRow:
    L: int
    ratio: str
    nsub: str
    ndof: int
    constraints: str
    method: str
    lambda_max: float
    iterations: int
    converged: bool
    wall_time: float
    lambda_method: str = ""
    error: str = ""

    @property
    def method_label(self) -> str:
        return METHOD_LABELS[self.method]


def run_experiment(config: ExperimentConfig, setup: Setup | None = None,
                   lambda_max: tuple | None = None) -> ResultRow:
    """Build (or reuse) the setup, solve with ``config.method`` and estimate ``lambda_max``."""
    t0 = time.perf_counter()
    setup = build_setup(config) if setup is None else setup
    lam, how = estimate_lambda_max(setup) if lambda_max is None else lambda_max
    rep, _ = solve(setup, config.method, config.tol)
    h = setup.hierarchy
    return ResultRow(config.levels, config.ratio_label, h.nsub, h.ndof, config.constraints,
                     config.method, float(lam), rep.iterations, rep.converged,
                     time.perf_counter() - t0, how)


# tables -------------------------------------------------------------------------

@dataclass
class TableRow:
    ratio: int
    L: int
    nsub: str
    ndof: int
    lambda_max: float
    bd: int
    fetidp: int
    bddc_gmres: int
    bddc_pcg: int
    wall_time: float = 0.0
    error: str = ""

    # wall time is kept out of the main CSV so repeated runs give identical files
    CSV_FIELDS = ("ratio", "L", "nsub", "ndof", "lambda_max", "bd", "fetidp",
                  "bddc_gmres", "bddc_pcg", "error")


@dataclass
class TableResult:
    name: str
    constraints: str
    rows: list = field(default_factory=list)
    results: list = field(default_factory=list)

    def markdown(self) -> str:
        out = [f"{self.name}: constraints {self.constraints}", "",
               "| L | nsub | ndof | lambda_max | BD | FETI-DP | BDDC |",
               "|---|---|---|---|---|---|---|"]
        ratio = None
        for r in self.rows:
            if r.ratio != ratio:
                ratio = r.ratio
                out.append(f"| **H_l/H_(l-1) = {ratio}** | | | | | | |")
            if r.error:
                out.append(f"| {r.L} | {r.nsub} | {r.ndof:,} | failed: {r.error} | | | |")
                continue
            out.append(f"| {r.L} | {r.nsub} | {r.ndof:,} | {r.lambda_max:.4f} | {r.bd} | "
                       f"{r.fetidp} | {r.bddc_gmres}/{r.bddc_pcg} |")
        return "\n".join(out) + "\n"

    def write(self, out_dir) -> tuple:
        """Write ``<name>.csv``, ``<name>.md`` and the timings ``<name>.timing.csv``."""
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{self.name}.csv")
        md_path = os.path.join(out_dir, f"{self.name}.md")
        with open(os.path.join(out_dir, f"{self.name}.timing.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("ratio", "L", "wall_time"))
            w.writerows((r.ratio, r.L, f"{r.wall_time:.3f}") for r in self.rows)
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TableRow.CSV_FIELDS)
            for r in self.rows:
                w.writerow([getattr(r, k) if k != "lambda_max" else repr(r.lambda_max)
                            for k in TableRow.CSV_FIELDS])
        with open(md_path, "w", encoding="utf-8") as fh:
            fh.write(self.markdown())
        return csv_path, md_path


def read_table_csv(path) -> list:
    """Parse a CSV written by :meth:`TableResult.write` back into rows."""
    conv = {"ratio": int, "L": int, "ndof": int, "lambda_max": float, "bd": int, "fetidp": int,
            "bddc_gmres": int, "bddc_pcg": int, "wall_time": float}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(TableRow(**{k: conv.get(k, str)(v) for k, v in rec.items()
                                    if k in TableRow.CSV_FIELDS}))
    return rows


def _table_row(args):
    ratio, L, constraints, tol, load, edge_dofs = args
    t0 = time.perf_counter()
    base = ExperimentConfig(levels=L, ratios=(ratio,), constraints=constraints, tol=tol,
                            load=load, edge_dofs=edge_dofs)
    h = build_hierarchy(L, base.ratios)
    try:
        setup = build_setup(base)
        lam = estimate_lambda_max(setup)
        results = [run_experiment(base.replace(method=m), setup, lam) for m in
                   ("fetidp-bd", "fetidp-mf", "bddc-gmres", "bddc-pcg")]
    except Exception as exc:  # recorded, the table goes on
        log.exception("row ratio=%d L=%d failed", ratio, L)
        row = TableRow(ratio, L, h.nsub, h.ndof, np.nan, -1, -1, -1, -1,
                       time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
        return row, []
    it = {r.method: r.iterations for r in results}
    row = TableRow(ratio, L, h.nsub, h.ndof, lam[0], it["fetidp-bd"], it["fetidp-mf"],
                   it["bddc-gmres"], it["bddc-pcg"], time.perf_counter() - t0)
    return row, results


def run_table(which: str, tol: float = 1e-8, out=None, jobs: int = 1, load=1.0,
              shapes=TABLE_SHAPES, edge_dofs: str = "all") -> TableResult:
    """All rows of ``table1`` (corners) or ``table2`` (corners and edge averages).

    Rows are independent; ``jobs > 1`` runs them in worker processes.
    """
    if which not in TABLE_CONSTRAINTS:
        raise ConfigError(f"unknown table {which!r}; expected one of {tuple(TABLE_CONSTRAINTS)}")
    cons = TABLE_CONSTRAINTS[which]
    tasks = [(r, L, cons, tol, load, edge_dofs) for r, L in shapes]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            done = list(pool.map(_table_row, tasks))
    else:
        done = []
        for t in tasks:
            log.info("%s: ratio %d, L=%d", which, t[0], t[1])
            done.append(_table_row(t))
    res = TableResult(which, cons)
    for row, results in done:
        res.rows.append(row)
        res.results.extend(results)
    if out is not None:
        res.write(out)
    return res


# eigenvalues ----------------------------------------------------------------------

def _top(op, k, guard):
    n = op.shape[0]
    if n <= guard:
        return dense_spectrum(op).eigenvalues[:k]
    return arnoldi_topk(op, min(k, n), tol=1e-10).eigenvalues


def emit_eigs(config: ExperimentConfig, k: int | None = None, path=None, setup: Setup | None = None):
    """Largest-magnitude eigenvalues of the BDDC and the preconditioned saddle operators.

    Writes ``index, bddc_real, bddc_imag, fetidp_real, fetidp_imag`` rows
    when ``path`` is given and returns both arrays.
    """
    k = config.eigs_k if k is None else int(k)
    setup = build_setup(config) if setup is None else setup
    guard = max(config.dense_guard, 4000)
    a = _top(setup.bddc_operator(), k, guard)
    b = _top(setup.saddle_operator(), k, guard)
    if path is not None:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "bddc_real", "bddc_imag", "fetidp_real", "fetidp_imag"])
            for i in range(max(len(a), len(b))):
                row = [i]
                for ev in (a, b):
                    row += [repr(float(ev[i].real)), repr(float(ev[i].imag))] if i < len(ev) else ["", ""]
                w.writerow(row)
    return a, b
