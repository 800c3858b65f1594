"""``qprefine`` command line: solve, check, bench, presets, random."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .bench import params_dict, run_bench, solve_problem
from .exact import fraction_str, to_rational
from .generate import random_qp
from .model import lift_solution, to_standard_form
from .qps import (
    CSV_COLUMNS,
    QPSFormatError,
    csv_header,
    format_sci,
    parse_certificate,
    read_qps,
    write_certificate,
    write_qps,
    write_report,
)
from .refinement import PRESETS, Iterate, RefineParams, compute_residuals, preset

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2

log = logging.getLogger("qprefine")


def _rational(text: str) -> Fraction:
    try:
        return to_rational(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _minstalls(text: str):
    if text.lower() in ("off", "none", "never"):
        return None
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("ratfac-minstalls must be >= 0 or 'off'")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("expected a non-negative integer")
    return value


# flag destination -> RefineParams field
OVERRIDES = {
    "maxscaleincrement": "alpha",
    "ratfac_minstalls": "ratfac_minstalls",
    "max_backstepping": "l_max",
    "refinement_limit": "k_max",
    "primal_tol": "eps_p",
    "dual_tol": "eps_d",
}


def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), default="s1", help="parameter set (default s1)")
    # absent flags stay out of the namespace, so an explicit 'off' is distinguishable from no flag
    opt = dict(default=argparse.SUPPRESS)
    p.add_argument("--maxscaleincrement", type=_rational, help="alpha, the largest growth of the scaling factor", **opt)
    p.add_argument("--ratfac-minstalls", type=_minstalls, help="stalls before a rational basis solve, or 'off'", **opt)
    p.add_argument("--max-backstepping", type=_nonneg_int, help="backsteps allowed per refinement", **opt)
    p.add_argument("--refinement-limit", type=_nonneg_int, help="maximum number of refinements", **opt)
    p.add_argument("--primal-tol", type=_rational, **opt)
    p.add_argument("--dual-tol", type=_rational, **opt)
    p.add_argument("--slack-tol", type=_rational, help="defaults to primal-tol * dual-tol", **opt)


def params_from_args(args: argparse.Namespace) -> RefineParams:
    """Preset values overridden by any explicitly given flag."""
    base = preset(args.preset)
    given = vars(args)
    changes = {field: given[flag] for flag, field in OVERRIDES.items() if flag in given}
    if "slack_tol" in given:
        changes["eps_s"] = given["slack_tol"]
    elif "eps_p" in changes or "eps_d" in changes:
        changes["eps_s"] = changes.get("eps_p", base.eps_p) * changes.get("eps_d", base.eps_d)
    if not changes:
        return base
    return base.replace(preset=f"{base.preset}+overrides", **changes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qprefine", description="Exact QP solutions by iterative refinement.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one QPS file")
    s.add_argument("file")
    _add_params(s)
    s.add_argument("--format", choices=["json", "csv", "human"], default="human")
    s.add_argument("--output-dir", help="write <name>.<format> and, when exact, <name>.cert here")
    s.add_argument("--certificate", help="path of the exact solution certificate")

    c = sub.add_parser("check", help="verify a solution certificate in exact arithmetic")
    c.add_argument("file")
    c.add_argument("certificate")
    c.add_argument("--primal-tol", type=_rational, default=Fraction(0))
    c.add_argument("--dual-tol", type=_rational, default=Fraction(0))
    c.add_argument("--slack-tol", type=_rational, default=Fraction(0))
    c.add_argument("--format", choices=["json", "human"], default="human")

    b = sub.add_parser("bench", help="solve every QPS file in a directory")
    b.add_argument("directory")
    _add_params(b)
    b.add_argument("--jobs", type=int, default=1, help="instances solved concurrently")
    b.add_argument("--format", choices=["json", "csv"], default="csv")
    b.add_argument("--output", help="write the table here instead of stdout")

    pr = sub.add_parser("presets", help="print the parameter sets")
    pr.add_argument("--format", choices=["json", "human"], default="human")

    r = sub.add_parser("random", help="write a random convex QP in QPS format")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("-n", type=int, default=5, help="columns")
    r.add_argument("-m", type=int, default=2, help="rows")
    r.add_argument("--output", help="file to write (default stdout)")

    return parser


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(path).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def cmd_solve(args) -> int:
    g = read_qps(args.file)
    params = params_from_args(args)
    report, sol = solve_problem(g, params)
    text = write_report(report, args.format)
    if args.format == "csv":
        text = csv_header() + "\n" + text
    out_dir = Path(args.output_dir) if args.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        ext = {"json": "json", "csv": "csv", "human": "txt"}[args.format]
        _emit(text, str(out_dir / f"{g.name}.{ext}"))
    else:
        _emit(text, None)
    if report.status == "exact":
        cert = write_certificate(g.name, g.col_names, sol.x, g.row_names, sol.y)
        target = args.certificate or (str(out_dir / f"{g.name}.cert") if out_dir is not None else None)
        if target is not None:
            _emit(cert, target)
            log.info("certificate written to %s", target)
    return EXIT_OK


def check_certificate(g, cert) -> tuple:
    """Exact residuals of a certificate; raises ValueError on name or size mismatch."""
    if set(cert.primal) != set(g.col_names):
        missing = sorted(set(g.col_names) - set(cert.primal))
        extra = sorted(set(cert.primal) - set(g.col_names))
        raise ValueError(f"primal names do not match the problem (missing {missing}, unknown {extra})")
    if set(cert.dual) != set(g.row_names):
        missing = sorted(set(g.row_names) - set(cert.dual))
        extra = sorted(set(cert.dual) - set(g.row_names))
        raise ValueError(f"dual names do not match the problem (missing {missing}, unknown {extra})")
    p = to_standard_form(g)
    x, y = lift_solution(p, g, [cert.primal[n] for n in g.col_names], [cert.dual[n] for n in g.row_names])
    return compute_residuals(p, Iterate(x, y))


def cmd_check(args) -> int:
    g = read_qps(args.file)
    cert = parse_certificate(Path(args.certificate).read_text(encoding="utf-8"))
    try:
        r = check_certificate(g, cert)
    except ValueError as exc:
        print(f"qprefine: {exc}", file=sys.stderr)
        return EXIT_ERROR
    ok = r.delta_p <= args.primal_tol and r.delta_d <= args.dual_tol and r.delta_s <= args.slack_tol
    if args.format == "json":
        print(
            json.dumps(
                {
                    "name": g.name,
                    "delta_p": fraction_str(r.delta_p),
                    "delta_d": fraction_str(r.delta_d),
                    "delta_s": fraction_str(r.delta_s),
                    "passed": ok,
                },
                indent=2,
            )
        )
    else:
        print(f"instance          {g.name}")
        print(f"primal violation  {fraction_str(r.delta_p)}  ({format_sci(r.delta_p)})")
        print(f"dual violation    {fraction_str(r.delta_d)}  ({format_sci(r.delta_d)})")
        print(f"complementarity   {fraction_str(r.delta_s)}  ({format_sci(r.delta_s)})")
        print("passed" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_bench(args) -> int:
    params = params_from_args(args)
    result = run_bench(args.directory, params, jobs=max(1, args.jobs))
    if args.format == "json":
        text = json.dumps(
            {"config": params_dict(params), "summary": result.summary, "instances": [r.to_dict() for r in result.reports]},
            indent=2,
        )
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in result.reports:
            writer.writerow(r.row())
        text = buf.getvalue()
        if result.reports:
            s = result.summary
            print(
                f"{s['instances']} instances, time mean {s['time_mean']:.4f}s, shifted geomean {s['time_shifted_geomean']:.4f}s, "
                f"oracle iterations shifted geomean {s['oracle_iterations_shifted_geomean']:.2f}",
                file=sys.stderr,
            )
    _emit(text, args.output)
    return EXIT_OK


def presets_table() -> list[dict]:
    rows = []
    for name, p in PRESETS.items():
        rows.append(
            {
                "preset": name,
                "primal_tol": format_sci(p.eps_p, 1),
                "dual_tol": format_sci(p.eps_d, 1),
                "maxscaleincrement": format_sci(p.alpha, 1),
                "refinement_limit": p.k_max,
                "max_backstepping": p.l_max,
                "ratfac_minstalls": p.ratfac_minstalls,
                "solver_version": p.source_solver_version,
                "sparse": p.sparse,
                "resolves": p.oracle_fast is not None,
            }
        )
    return rows


def cmd_presets(args) -> int:
    rows = presets_table()
    if args.format == "json":
        print(json.dumps(rows, indent=2))
        return EXIT_OK
    keys = list(rows[0])
    widths = {k: max(len(k), *(len(str(r[k])) for r in rows)) for k in keys}
    print("  ".join(k.ljust(widths[k]) for k in keys))
    for r in rows:
        print("  ".join(str(r[k]).ljust(widths[k]) for k in keys))
    return EXIT_OK


def cmd_random(args) -> int:
    if args.n < 1 or args.m < 0:
        print("qprefine: need n >= 1 and m >= 0", file=sys.stderr)
        return EXIT_ERROR
    _emit(write_qps(random_qp(args.seed, args.n, args.m)), args.output)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "check": cmd_check, "bench": cmd_bench, "presets": cmd_presets, "random": cmd_random}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, QPSFormatError) as exc:
        print(f"qprefine: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
