"""Experiment runner: solve benchmark cells, classify outcomes, write reports.

A *cell* is one (problem, method) pair.  Deterministic methods (A, B) run
once; the sampling methods (C, D) run once per seed and are summarized by the
median.  Outcome symbols follow the usual table encoding::

    optimal ✓    suboptimal −    no_solution ×    not_admissible n/a

Suite files are YAML; see ``suites/default.yaml`` inside the package for the
full field list.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy.special import ndtr

from gnmppi.exceptions import ConfigError, GnMppiError
from gnmppi.ggn import StepLengthGrid
from gnmppi.jacobian import FD_EPS, smoothed_residual
from gnmppi.mppi import MppiConfig
from gnmppi.problem import BatchEvaluator, ControlProblem
from gnmppi.problems import PROBLEM_IDS, make_heaviside, make_problem
from gnmppi.sampling import DiagonalCovariance
from gnmppi.solvers import SOLVERS, FdConfig, GnMppiConfig
from gnmppi.trace import CONVERGED, ITERATION_CAP, SolverTrace

log = logging.getLogger(__name__)

METHODS = ("A", "B", "C", "D")
STOCHASTIC = ("C", "D")

OPTIMAL = "optimal"
SUBOPTIMAL = "suboptimal"
NO_SOLUTION = "no_solution"
NOT_ADMISSIBLE = "not_admissible"
STATUSES = (OPTIMAL, SUBOPTIMAL, NO_SOLUTION, NOT_ADMISSIBLE)
SYMBOLS = {OPTIMAL: "✓", SUBOPTIMAL: "−", NO_SOLUTION: "×", NOT_ADMISSIBLE: "n/a"}
# used to break ties in the per-cell vote; later entries are worse
_SEVERITY = {OPTIMAL: 0, SUBOPTIMAL: 1, NO_SOLUTION: 2, NOT_ADMISSIBLE: 3}

RESULT_COLUMNS = (
    "problem", "method", "seed", "iterations", "status", "final_cost", "batches", "wall_ms",
)
CELL_COLUMNS = (
    "problem", "method", "status", "median_iterations", "median_final_cost",
    "success_fraction", "runs", "message",
)
TRACE_COLUMNS = ("k", "cost", "step_norm", "grad_norm", "alpha", "accepted", "batches")

# keys each method accepts in a suite file
_METHOD_KEYS = {
    "A": {"eps", "mu", "gamma", "grid_count"},
    "B": {"eps", "gamma", "grid_count"},
    "C": {"sigma", "lam", "M", "antithetic", "grad_statistic"},
    "D": {"sigma", "beta", "M", "mu", "antithetic", "residual_source", "gamma", "grid_count"},
}
_SUITE_KEYS = {"seeds", "max_iters", "workers", "timing", "relative_improvement",
               "cost_band", "problems"}
_PROBLEM_KEYS = {"id", "params", "stop_step_tol", "stop_grad_tol", "max_iters",
                 "relative_improvement", "methods"}


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark cell: a problem, a method, and everything needed to solve it.

    ``solver`` holds the method-specific settings (keys as in suite files).
    ``relative_improvement`` is the classification threshold for problems
    without a known optimum.  ``timing`` controls whether wall-clock times
    are reported; they are the only non-reproducible output.
    """

    problem_id: str
    method: str
    problem_params: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    seeds: tuple[int, ...] = (0,)
    stop_step_tol: float = 1e-6
    stop_grad_tol: float = 1e-4
    max_iters: int = 1000
    workers: int = 1
    relative_improvement: float = 0.5
    timing: bool = False

    def __post_init__(self) -> None:
        if self.problem_id not in PROBLEM_IDS:
            raise ConfigError(
                f"unknown problem id {self.problem_id!r}; choose one of {', '.join(PROBLEM_IDS)}"
            )
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose one of {', '.join(METHODS)}")
        unknown = set(self.solver) - _METHOD_KEYS[self.method]
        if unknown:
            raise ConfigError(
                f"{self.problem_id}/{self.method}: unknown solver keys {sorted(unknown)}; "
                f"allowed: {sorted(_METHOD_KEYS[self.method])}"
            )
        if self.method in STOCHASTIC:
            if not self.seeds:
                raise ConfigError(f"{self.problem_id}/{self.method}: method needs at least one seed")
            if "sigma" not in self.solver:
                raise ConfigError(
                    f"{self.problem_id}/{self.method}: set 'sigma' (sampling standard deviation)"
                )
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.stop_step_tol > 0 or not self.stop_grad_tol > 0:
            raise ConfigError("stop tolerances must be positive")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @property
    def run_seeds(self) -> tuple[int | None, ...]:
        """Seeds actually run: all of them for C/D, a single run for A/B."""
        return self.seeds if self.method in STOCHASTIC else (None,)

    def build_problem(self) -> ControlProblem:
        try:
            return make_problem(self.problem_id, self.problem_params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"problem {self.problem_id}: bad parameters ({exc})") from exc

    def solver_config(self, dim: int, seed: int | None):
        """The config object the method's solver expects."""
        s = self.solver
        tol = dict(stop_step_tol=self.stop_step_tol, stop_grad_tol=self.stop_grad_tol)
        grid = StepLengthGrid(gamma=s.get("gamma", 0.7), count=int(s.get("grid_count", 2000)))
        try:
            if self.method == "A":
                return FdConfig(self.max_iters, s.get("eps", FD_EPS), grid, s.get("mu", 0.0), **tol)
            if self.method == "B":
                return FdConfig(self.max_iters, s.get("eps", FD_EPS), grid, 0.0, **tol)
            cov = DiagonalCovariance.isotropic(float(s["sigma"]) ** 2, dim)
            if self.method == "C":
                return MppiConfig(
                    cov, lam=float(s.get("lam", 1.0)), M=int(s.get("M", 2000)),
                    max_iters=self.max_iters, antithetic=bool(s.get("antithetic", True)),
                    seed=seed, grad_statistic=s.get("grad_statistic", "softmin"), **tol,
                )
            return GnMppiConfig(
                cov, M=int(s.get("M", 2000)), max_iters=self.max_iters,
                beta=float(s.get("beta", 0.8)), grid=grid, mu=float(s.get("mu", 0.0)),
                antithetic=bool(s.get("antithetic", True)), seed=seed,
                residual_source=s.get("residual_source", "center"), **tol,
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.problem_id}/{self.method}: invalid solver setting ({exc})") from exc


@dataclass
class RunRecord:
    """One solve (one seed) of a cell."""

    seed: int | None
    iterations: int
    status: str
    final_cost: float
    initial_cost: float
    batches: int
    evaluations: int
    wall_ms: float
    trace: SolverTrace | None = None
    message: str = ""


@dataclass
class OutcomeRecord:
    """Aggregated result of one cell.

    ``status`` is the most common per-seed status (ties go to the worse
    one); ``iterations`` and ``final_cost`` are medians over seeds.
    """

    problem: str
    method: str
    status: str
    iterations: float
    final_cost: float
    success_fraction: float
    runs: list[RunRecord]
    message: str = ""

    @property
    def symbol(self) -> str:
        return SYMBOLS[self.status]


def classify_run(
    problem: ControlProblem,
    trace: SolverTrace,
    final_cost: float,
    initial_cost: float,
    relative_improvement: float = 0.5,
) -> str:
    """Status of a single solve.

    Order of the rules: zero progress on vanishing derivative information is
    ``not_admissible`` (unless the start already was optimal); hitting the iteration cap is ``no_solution``; a
    converged run is ``optimal`` when its cost is within the known optimum's
    tolerance (or, without a known optimum, when it lowered the cost by at
    least ``relative_improvement``), otherwise ``suboptimal``.
    """
    opt = problem.known_optimum
    at_optimum = opt is not None and final_cost <= opt.cost + opt.tol
    if _vanishing_derivatives(trace) and not at_optimum:
        return NOT_ADMISSIBLE
    if trace.status != CONVERGED or not np.isfinite(final_cost):
        return NO_SOLUTION
    if opt is not None:
        return OPTIMAL if final_cost <= opt.cost + opt.tol else SUBOPTIMAL
    if initial_cost > 0 and (initial_cost - final_cost) / initial_cost >= relative_improvement:
        return OPTIMAL
    return SUBOPTIMAL


def _vanishing_derivatives(trace: SolverTrace) -> bool:
    # every iterate saw an exactly-zero derivative and nothing moved
    if not trace.records:
        return False
    return all(r.grad_norm == 0.0 and r.step_norm == 0.0 for r in trace.records)


def _solve_one(cfg: ExperimentConfig, problem: ControlProblem, seed: int | None) -> RunRecord:
    evaluator = BatchEvaluator.for_problem(problem, workers=cfg.workers)
    solver_cfg = cfg.solver_config(problem.dim, seed)
    initial_cost = _fresh_cost(problem, problem.u0)
    t0 = time.perf_counter()
    try:
        U, trace = SOLVERS[cfg.method](evaluator, solver_cfg, problem.u0)
        message = trace.message
    except GnMppiError as exc:
        trace = getattr(exc, "trace", None)
        message = f"{type(exc).__name__}: {exc}"
        log.warning("%s/%s seed=%s failed: %s", cfg.problem_id, cfg.method, seed, message)
        U = trace.U_final if trace is not None and trace.U_final is not None else problem.u0
    wall_ms = (time.perf_counter() - t0) * 1e3
    final_cost = _fresh_cost(problem, U)
    if trace is None or trace.status not in (CONVERGED, ITERATION_CAP):
        status = NO_SOLUTION
    else:
        status = classify_run(problem, trace, final_cost, initial_cost, cfg.relative_improvement)
    if trace is not None and trace.batches != evaluator.batches:
        raise AssertionError("solver trace disagrees with the evaluator's batch counter")
    return RunRecord(
        seed=seed,
        iterations=trace.iterations if trace is not None else 0,
        status=status,
        final_cost=final_cost,
        initial_cost=initial_cost,
        batches=evaluator.batches,
        evaluations=evaluator.evaluations,
        wall_ms=wall_ms,
        trace=trace,
        message=message,
    )


def _fresh_cost(problem: ControlProblem, U) -> float:
    # recomputed outside the solver so classification never trusts its bookkeeping
    R = problem.residual(U)
    return float(problem.outer.value(R)) if np.all(np.isfinite(R)) else float("inf")


def _vote(statuses: Sequence[str]) -> str:
    counts = Counter(statuses)
    return max(counts, key=lambda s: (counts[s], _SEVERITY[s]))


def run_experiment(cfg: ExperimentConfig) -> OutcomeRecord:
    """Solve one cell (every seed for C/D) and aggregate the outcome."""
    problem = cfg.build_problem()
    runs = [_solve_one(cfg, problem, seed) for seed in cfg.run_seeds]
    status = _vote([r.status for r in runs])
    messages = sorted({r.message for r in runs if r.message})
    return OutcomeRecord(
        problem=cfg.problem_id,
        method=cfg.method,
        status=status,
        iterations=float(np.median([r.iterations for r in runs])),
        final_cost=float(np.median([r.final_cost for r in runs])),
        success_fraction=sum(r.status == OPTIMAL for r in runs) / len(runs),
        runs=runs,
        message="; ".join(messages),
    )


# --------------------------------------------------------------------------
# suites
# --------------------------------------------------------------------------


@dataclass
class Suite:
    """Parsed suite file: the cells to run plus report settings."""

    cells: list[ExperimentConfig]
    cost_band: float = 1e-2
    timing: bool = False


def default_suite_path() -> Path:
    return Path(str(resources.files("gnmppi") / "suites" / "default.yaml"))


def _check_keys(where: str, mapping: dict, allowed: set) -> None:
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(mapping).__name__}")
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}; allowed: {sorted(allowed)}")


def parse_suite(
    data: dict | None,
    seeds: Sequence[int] | None = None,
    workers: int | None = None,
    max_iters: int | None = None,
    timing: bool | None = None,
) -> Suite:
    """Turn a loaded suite mapping into cells; keyword arguments override the file."""
    data = data or {}
    _check_keys("suite", data, _SUITE_KEYS)
    suite_seeds = tuple(seeds if seeds is not None else data.get("seeds", (0, 1, 2, 3, 4)))
    suite_iters = int(max_iters if max_iters is not None else data.get("max_iters", 1000))
    suite_workers = int(workers if workers is not None else data.get("workers", 1))
    suite_timing = bool(timing if timing is not None else data.get("timing", False))
    suite_improve = float(data.get("relative_improvement", 0.5))
    cells = []
    for i, entry in enumerate(data.get("problems") or []):
        _check_keys(f"problems[{i}]", entry, _PROBLEM_KEYS)
        if "id" not in entry:
            raise ConfigError(f"problems[{i}]: missing 'id'")
        pid = str(entry["id"])
        if pid not in PROBLEM_IDS:
            raise ConfigError(
                f"problems[{i}]: unknown problem id {pid!r}; choose one of {', '.join(PROBLEM_IDS)}"
            )
        methods = entry.get("methods") or {}
        _check_keys(f"problem {pid} methods", methods, set(METHODS))
        for method, solver in methods.items():
            cells.append(
                ExperimentConfig(
                    problem_id=pid,
                    method=method,
                    problem_params=dict(entry.get("params") or {}),
                    solver=dict(solver or {}),
                    seeds=suite_seeds,
                    stop_step_tol=float(entry.get("stop_step_tol", 1e-6)),
                    stop_grad_tol=float(entry.get("stop_grad_tol", 1e-4)),
                    max_iters=int(max_iters if max_iters is not None
                                  else entry.get("max_iters", suite_iters)),
                    workers=suite_workers,
                    relative_improvement=float(entry.get("relative_improvement", suite_improve)),
                    timing=suite_timing,
                )
            )
    return Suite(cells, float(data.get("cost_band", 1e-2)), suite_timing)


def load_suite(path: str | Path, **overrides) -> Suite:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"suite file {path} does not exist") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"suite file {path} is not valid YAML: {exc}") from exc
    return parse_suite(data, **overrides)


def apply_cost_band(outcomes: list[OutcomeRecord], band: float) -> None:
    """Downgrade ✓ cells of problems without a known optimum.

    Such cells are ✓ by relative improvement alone; a ✓ run whose cost is
    more than ``band`` (relative) above the best ✓ run of the same problem
    found a worse local minimum and becomes ``suboptimal``.
    """
    by_problem: dict[str, list[OutcomeRecord]] = {}
    for out in outcomes:
        by_problem.setdefault(out.problem, []).append(out)
    for pid, outs in by_problem.items():
        if make_problem(pid).known_optimum is not None:
            continue
        good = [r.final_cost for o in outs for r in o.runs if r.status == OPTIMAL]
        if not good:
            continue
        limit = min(good) + band * abs(min(good))
        for out in outs:
            for r in out.runs:
                if r.status == OPTIMAL and r.final_cost > limit:
                    r.status = SUBOPTIMAL
            out.status = _vote([r.status for r in out.runs])
            out.success_fraction = sum(r.status == OPTIMAL for r in out.runs) / len(out.runs)


def run_suite(
    suite: Suite | str | Path,
    out_dir: str | Path | None = None,
    **overrides,
) -> list[OutcomeRecord]:
    """Run every cell of a suite and (optionally) write the report files.

    A cell that raises is recorded with status ``no_solution`` and its error
    message; the remaining cells still run.
    """
    if not isinstance(suite, Suite):
        suite = load_suite(suite, **overrides)
    outcomes = []
    for cfg in suite.cells:
        log.info("running %s/%s", cfg.problem_id, cfg.method)
        try:
            outcomes.append(run_experiment(cfg))
        except Exception as exc:  # keep going, record the failure in the cell
            log.error("%s/%s failed: %s", cfg.problem_id, cfg.method, exc)
            outcomes.append(
                OutcomeRecord(cfg.problem_id, cfg.method, NO_SOLUTION, float("nan"),
                              float("nan"), 0.0, [], f"{type(exc).__name__}: {exc}")
            )
    apply_cost_band(outcomes, suite.cost_band)
    if out_dir is not None:
        write_reports(outcomes, out_dir, timing=suite.timing)
    return outcomes


# --------------------------------------------------------------------------
# report files
# --------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def results_csv(outcomes: Sequence[OutcomeRecord], timing: bool = False) -> str:
    """Per-run results.  ``wall_ms`` is left empty unless ``timing`` is set."""
    rows = []
    for out in outcomes:
        for r in out.runs:
            rows.append((out.problem, out.method, r.seed, r.iterations, r.status,
                         r.final_cost, r.batches, round(r.wall_ms, 3) if timing else None))
    return _csv_text(RESULT_COLUMNS, rows)


def cells_csv(outcomes: Sequence[OutcomeRecord]) -> str:
    rows = [(o.problem, o.method, o.status, o.iterations, o.final_cost,
             o.success_fraction, len(o.runs), o.message) for o in outcomes]
    return _csv_text(CELL_COLUMNS, rows)


def trace_csv(trace: SolverTrace) -> str:
    rows = [(r.k, r.cost, r.step_norm, r.grad_norm, r.alpha, r.accepted, r.batches)
            for r in trace.records]
    return _csv_text(TRACE_COLUMNS, rows)


def render_table(outcomes: Sequence[OutcomeRecord]) -> str:
    """Text table: problems as rows, methods as columns, ``iterations symbol`` per cell."""
    cells = {(o.problem, o.method): o for o in outcomes}
    problems = [p for p in PROBLEM_IDS if any(k[0] == p for k in cells)]
    methods = [m for m in METHODS if any(k[1] == m for k in cells)]
    header = ["Problem"] + [f"Method {m}" for m in methods]
    lines = []
    for p in problems:
        row = [p]
        for m in methods:
            o = cells.get((p, m))
            if o is None:
                row.append("")
            elif o.status == NOT_ADMISSIBLE:
                row.append("not admissible")
            elif not o.runs:
                row.append(SYMBOLS[o.status])
            else:
                row.append(f"{o.iterations:g} {o.symbol}")
        lines.append(row)
    widths = [max(len(r[i]) for r in [header] + lines) for i in range(len(header))]
    fmt = lambda r: " | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    sep = "-+-".join("-" * w for w in widths)
    legend = "✓ optimal   − suboptimal   × no solution (iteration cap)"
    return "\n".join([fmt(header), sep, *map(fmt, lines), "", legend]) + "\n"


def _trace_name(problem: str, method: str, seed: int | None) -> str:
    tag = problem.replace(".", "_")
    return f"{tag}_{method}.csv" if seed is None else f"{tag}_{method}_s{seed}.csv"


def write_reports(
    outcomes: Sequence[OutcomeRecord], out_dir: str | Path, timing: bool = False
) -> dict[str, Path]:
    """Write ``results.csv``, ``cells.csv``, ``table.txt`` and ``traces/*.csv``."""
    out_dir = Path(out_dir)
    (out_dir / "traces").mkdir(parents=True, exist_ok=True)
    paths = {
        "results": out_dir / "results.csv",
        "cells": out_dir / "cells.csv",
        "table": out_dir / "table.txt",
    }
    paths["results"].write_text(results_csv(outcomes, timing), encoding="utf-8")
    paths["cells"].write_text(cells_csv(outcomes), encoding="utf-8")
    paths["table"].write_text(render_table(outcomes), encoding="utf-8")
    for o in outcomes:
        for r in o.runs:
            if r.trace is not None:
                path = out_dir / "traces" / _trace_name(o.problem, o.method, r.seed)
                path.write_text(trace_csv(r.trace), encoding="utf-8")
    return paths


# --------------------------------------------------------------------------
# smoothing data for re-plotting
# --------------------------------------------------------------------------


def dump_smoothing_figure_data(
    sigmas: Sequence[float],
    grid: Sequence[float],
    M: int = 100_000,
    seed: int = 0,
    path: str | Path | None = None,
) -> list[dict]:
    """Heaviside step and its Gaussian smoothings over ``grid``.

    Each row holds ``sigma, u, R(u)``, the Monte Carlo smoothing
    ``R_hat_mc`` from :func:`~gnmppi.jacobian.smoothed_residual` and the
    closed form ``R_hat_cdf = Phi_normal(u / sigma)``.  If ``path`` is given
    the rows are also written there as CSV (or JSON for a ``.json`` path).
    """
    problem = make_heaviside()
    rows = []
    for i, sigma in enumerate(sigmas):
        if not sigma > 0:
            raise ConfigError(f"sigma must be positive, got {sigma}")
        cov = DiagonalCovariance.isotropic(float(sigma) ** 2, 1)
        for j, u in enumerate(grid):
            u = float(u)
            rows.append({
                "sigma": float(sigma),
                "u": u,
                "R": float(problem.residual([u])[0]),
                "R_hat_mc": float(smoothed_residual(problem, [u], cov, M, (seed, i, j))[0]),
                "R_hat_cdf": float(ndtr(u / sigma)),
            })
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix == ".json":
            path.write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
        else:
            keys = ("sigma", "u", "R", "R_hat_mc", "R_hat_cdf")
            path.write_text(_csv_text(keys, ([r[k] for k in keys] for r in rows)), encoding="utf-8")
    return rows
