"""Per-instance solve driver and the directory benchmark harness."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .exact import ZERO, fraction_str
from .model import GeneralQP, GeneralSolution, recover_solution, to_standard_form
from .qps import QPSFormatError, SolveReport, read_qps
from .refinement import RefineOutcome, RefineParams, Status, refine

QPS_SUFFIXES = (".qps", ".mps", ".sif")


def params_dict(params: RefineParams) -> dict:
    """Effective configuration as plain JSON values; exact numbers as ``p/q``."""
    fast = params.oracle_fast
    return {
        "preset": params.preset,
        "primal_tol": fraction_str(params.eps_p),
        "dual_tol": fraction_str(params.eps_d),
        "slack_tol": fraction_str(params.eps_s),
        "maxscaleincrement": fraction_str(params.alpha),
        "refinement_limit": params.k_max,
        "max_backstepping": params.l_max,
        "ratfac_minstalls": params.ratfac_minstalls,
        "resolves": fast is not None,
        "oracle_fast_tolerance": None if fast is None else fast.termination_tolerance,
        "oracle_tolerance": params.oracle_reliable.termination_tolerance,
        "oracle_refinement_steps": params.oracle_reliable.refinement_steps_internal,
        "solver_version": params.source_solver_version,
        "sparse": params.sparse,
    }


def build_report(g: GeneralQP, out: RefineOutcome, params: RefineParams) -> tuple[SolveReport, Optional[GeneralSolution]]:
    sol = None
    objective = None
    if out.status != Status.ORACLE_FAILURE or out.refinements:
        p = to_standard_form(g)
        sol = recover_solution(p, g, out.iterate.x, out.iterate.y)
        objective = sol.objective
    r = out.residuals
    report = SolveReport(
        name=g.name,
        status=out.status.value,
        refinements=out.refinements,
        backsteps=out.backsteps,
        resolves=out.resolves,
        oracle_iterations=out.oracle_iterations,
        delta_p=r.delta_p,
        delta_d=r.delta_d,
        delta_s=r.delta_s,
        objective_exact=objective,
        time_seconds=out.time_seconds,
        iterations=list(out.log),
        measured_sigma=out.measured_sigma,
        rational_time_fraction=out.rational_time_fraction,
        config=params_dict(params),
    )
    return report, sol


def solve_problem(g: GeneralQP, params: RefineParams) -> tuple[SolveReport, Optional[GeneralSolution]]:
    out = refine(to_standard_form(g), params)
    return build_report(g, out, params)


def error_report(name: str, message: str, params: RefineParams) -> SolveReport:
    return SolveReport(
        name=name,
        status="error",
        refinements=0,
        backsteps=0,
        resolves=0,
        oracle_iterations=0,
        delta_p=ZERO,
        delta_d=ZERO,
        delta_s=ZERO,
        objective_exact=None,
        time_seconds=0.0,
        config=params_dict(params),
        error=message,
    )


def solve_file(path: str | os.PathLike, params: RefineParams) -> SolveReport:
    """Solve one file; parse and I/O problems become an ``error`` row instead of raising."""
    name = Path(path).stem
    t0 = time.perf_counter()
    try:
        g = read_qps(path)
    except (OSError, QPSFormatError) as exc:
        return error_report(name, str(exc), params)
    try:
        report, _ = solve_problem(g, params)
    except Exception as exc:  # a crashing instance must not abort the batch
        report = error_report(g.name, f"{type(exc).__name__}: {exc}", params)
        report.time_seconds = time.perf_counter() - t0
    return report


def find_instances(directory: str | os.PathLike) -> list[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise NotADirectoryError(f"{directory} is not a directory")
    return sorted(p for p in root.iterdir() if p.is_file() and p.suffix.lower() in QPS_SUFFIXES)


def shifted_geometric_mean(values: Sequence[float], shift: float = 0.01) -> float:
    """``exp(mean(log(v + shift))) - shift``; empty input gives ``nan``."""
    values = list(values)
    if not values:
        return math.nan
    if shift < 0 or any(v + shift <= 0 for v in values):
        raise ValueError("every value + shift must be positive")
    return math.exp(math.fsum(math.log(v + shift) for v in values) / len(values)) - shift


@dataclass
class BenchResult:
    reports: list[SolveReport]
    summary: dict = field(default_factory=dict)


def summarize(reports: Iterable[SolveReport]) -> dict:
    reports = list(reports)
    times = [r.time_seconds for r in reports if not r.error]
    iters = [r.oracle_iterations for r in reports if not r.error]
    counts: dict[str, int] = {}
    for r in reports:
        counts[r.status] = counts.get(r.status, 0) + 1
    mean = lambda v: math.fsum(v) / len(v) if v else math.nan  # noqa: E731
    return {
        "instances": len(reports),
        "status_counts": counts,
        "time_mean": mean(times),
        "time_shifted_geomean": shifted_geometric_mean(times, 0.01),
        "oracle_iterations_mean": mean(iters),
        "oracle_iterations_shifted_geomean": shifted_geometric_mean(iters, 1.0),
    }


def run_bench(directory: str | os.PathLike, params: RefineParams, jobs: int = 1) -> BenchResult:
    """Solve every QPS file in ``directory``, ``jobs`` instances at a time, rows sorted by file name."""
    files = find_instances(directory)
    if jobs <= 1 or len(files) <= 1:
        reports = [solve_file(f, params) for f in files]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(solve_file, files, [params] * len(files)))
    return BenchResult(reports, summarize(reports))
