"""QPS (MPS with a quadratic objective) reading and writing, solve reports, certificates.

Numeric literals are parsed straight into exact rationals, so ``1.5e-3`` is
``3/2000`` and never passes through binary floating point. As an extension,
any numeric field may also hold an exact fraction ``p/q``; :func:`write_qps`
uses it for coefficients without a finite decimal expansion.

Conventions:

* ``QUADOBJ`` lists one triangle of ``Q`` (off-diagonals are mirrored);
  ``QMATRIX`` lists every nonzero. Diagonal entries are ``Q_ii`` verbatim,
  the objective being ``1/2 x'Qx + c'x``.
* An RHS entry on the objective row is the negated objective constant.
* Default column bounds are ``[0, +inf)``. A negative ``UP`` bound leaves the
  default lower bound of zero in place and triggers a warning.
* Objective rows after the first ``N`` row are kept as free constraints.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Optional

from .exact import ZERO, RatMatrix, fraction_str, to_rational
from .model import INF, GeneralQP, is_finite

log = logging.getLogger(__name__)

SECTIONS = ("NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "QUADOBJ", "QMATRIX", "QSECTION", "OBJSENSE", "ENDATA")
INFINITE_BOUND = Fraction(10**20)


class QPSFormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None) -> None:
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


class QPSWarning(UserWarning):
    pass


def _number(token: str, lineno: int) -> Fraction:
    try:
        return to_rational(token)
    except (ValueError, ZeroDivisionError):
        raise QPSFormatError(f"malformed number {token!r}", lineno) from None


def _fixed_fields(line: str) -> list[str]:
    # classic MPS columns: 2-3, 5-12, 15-22, 25-36, 40-47, 50-61
    spans = [(1, 3), (4, 12), (14, 22), (24, 36), (39, 47), (49, 61)]
    out = [line[a:b].strip() for a, b in spans]
    while out and not out[-1]:
        out.pop()
    return out


def parse_qps(text: str) -> GeneralQP:
    """Parse a QPS document into a :class:`GeneralQP`."""
    name = "QP"
    obj_row: Optional[str] = None
    row_type: dict[str, str] = {}
    row_order: list[str] = []
    row_index: dict[str, int] = {}
    col_index: dict[str, int] = {}
    col_order: list[str] = []
    entries: dict[tuple[int, int], Fraction] = {}
    cost: dict[int, Fraction] = {}
    rhs: dict[str, Fraction] = {}
    ranges: dict[str, Fraction] = {}
    lower: dict[int, object] = {}
    upper: dict[int, object] = {}
    quad: dict[tuple[int, int], Fraction] = {}
    obj_constant = ZERO
    section = None
    quad_full = False
    seen_sections = set()
    current_col = None
    negative_sense = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("*"):
            continue
        if not line[0].isspace():
            head = stripped.split()
            keyword = head[0].upper()
            if keyword not in SECTIONS:
                raise QPSFormatError(f"unknown section {head[0]!r}", lineno)
            if keyword in seen_sections and keyword != "ENDATA":
                raise QPSFormatError(f"duplicate section {keyword}", lineno)
            seen_sections.add(keyword)
            section = keyword
            if keyword == "NAME":
                name = head[1] if len(head) > 1 else name
            elif keyword == "ENDATA":
                break
            elif keyword in ("QMATRIX", "QSECTION"):
                quad_full = True
            elif keyword == "OBJSENSE" and len(head) > 1:
                negative_sense = head[1].upper() in ("MAX", "MAXIMIZE")
            continue

        fields = stripped.split()
        if section == "OBJSENSE":
            negative_sense = fields[0].upper() in ("MAX", "MAXIMIZE")
        elif section == "ROWS":
            if len(fields) != 2:
                fields = _fixed_fields(line)
            if len(fields) != 2:
                raise QPSFormatError("ROWS entries need a type and a name", lineno)
            kind, rname = fields[0].upper(), fields[1]
            if kind not in ("N", "E", "L", "G"):
                raise QPSFormatError(f"unknown row type {kind!r}", lineno)
            if rname in row_type or rname == obj_row:
                raise QPSFormatError(f"duplicate row {rname!r}", lineno)
            if kind == "N" and obj_row is None:
                obj_row = rname
                continue
            row_type[rname] = kind
            row_index[rname] = len(row_order)
            row_order.append(rname)
        elif section == "COLUMNS":
            if "'MARKER'" in fields:
                raise QPSFormatError("integer markers are not supported", lineno)
            if len(fields) not in (3, 5):
                fields = _fixed_fields(line)[1:]
            if len(fields) not in (3, 5):
                raise QPSFormatError("COLUMNS entries need a column and one or two (row, value) pairs", lineno)
            cname = fields[0]
            if cname != current_col:
                if cname in col_index:
                    raise QPSFormatError(f"duplicate column {cname!r}", lineno)
                col_index[cname] = len(col_order)
                col_order.append(cname)
                current_col = cname
            j = col_index[cname]
            for rname, tok in zip(fields[1::2], fields[2::2]):
                value = _number(tok, lineno)
                if rname == obj_row:
                    if j in cost:
                        raise QPSFormatError(f"duplicate objective entry for {cname!r}", lineno)
                    cost[j] = value
                    continue
                if rname not in row_type:
                    raise QPSFormatError(f"unknown row {rname!r}", lineno)
                i = row_index[rname]
                if (i, j) in entries:
                    raise QPSFormatError(f"duplicate entry ({rname}, {cname})", lineno)
                entries[(i, j)] = value
        elif section in ("RHS", "RANGES"):
            known = lambda f: len(f) in (3, 5) and all(r == obj_row or r in row_type for r in f[1::2])  # noqa: E731
            candidates = [fields, ["_"] + fields, _fixed_fields(line)[1:]]
            fields = next((f for f in candidates if known(f)), None)
            if fields is None:
                fields = next((f for f in candidates if len(f) in (3, 5)), None)
            if fields is None:
                raise QPSFormatError(f"malformed {section} entry", lineno)
            for rname, tok in zip(fields[1::2], fields[2::2]):
                value = _number(tok, lineno)
                if section == "RHS" and rname == obj_row:
                    obj_constant = -value
                    continue
                if rname not in row_type:
                    raise QPSFormatError(f"unknown row {rname!r}", lineno)
                target = rhs if section == "RHS" else ranges
                if rname in target:
                    raise QPSFormatError(f"duplicate {section} entry for {rname!r}", lineno)
                target[rname] = value
        elif section == "BOUNDS":
            kind = fields[0].upper()
            needs_value = kind in ("UP", "LO", "FX")
            if kind in ("FR", "MI", "PL", "BV"):
                expected = (2, 3)
            else:
                expected = (3, 4)
            if len(fields) not in expected:
                fields = _fixed_fields(line)
                kind = fields[0].upper() if fields else kind
            if kind in ("BV", "LI", "UI", "SC"):
                raise QPSFormatError(f"bound type {kind} is not supported for continuous QPs", lineno)
            if kind not in ("UP", "LO", "FX", "FR", "MI", "PL"):
                raise QPSFormatError(f"unknown bound type {kind!r}", lineno)
            if needs_value:
                if len(fields) == 4:
                    cname, tok = fields[2], fields[3]
                elif len(fields) == 3:
                    cname, tok = fields[1], fields[2]
                else:
                    raise QPSFormatError("bound entry is missing its value", lineno)
                value = _number(tok, lineno)
            else:
                cname = fields[-1]
                value = None
            if cname not in col_index:
                raise QPSFormatError(f"unknown column {cname!r}", lineno)
            j = col_index[cname]
            if kind == "UP":
                upper[j] = INF if value >= INFINITE_BOUND else -INF if value <= -INFINITE_BOUND else value
                if is_finite(upper[j]) and value < 0 and j not in lower:
                    warnings.warn(
                        f"line {lineno}: negative upper bound on {cname!r} keeps the default lower bound 0",
                        QPSWarning,
                        stacklevel=2,
                    )
            elif kind == "LO":
                lower[j] = -INF if value <= -INFINITE_BOUND else INF if value >= INFINITE_BOUND else value
            elif kind == "FX":
                lower[j] = upper[j] = value
            elif kind == "FR":
                lower[j], upper[j] = -INF, INF
            elif kind == "MI":
                lower[j] = -INF
            elif kind == "PL":
                upper[j] = INF
        elif section in ("QUADOBJ", "QMATRIX", "QSECTION"):
            if len(fields) != 3:
                fields = _fixed_fields(line)[1:4]
            if len(fields) != 3 or not all(fields):
                raise QPSFormatError("quadratic entries need two columns and a value", lineno)
            a, b_, tok = fields
            for cname in (a, b_):
                if cname not in col_index:
                    raise QPSFormatError(f"unknown column {cname!r}", lineno)
            i, j = col_index[a], col_index[b_]
            value = _number(tok, lineno)
            if (i, j) in quad:
                raise QPSFormatError(f"duplicate quadratic entry ({a}, {b_})", lineno)
            quad[(i, j)] = value
            if not quad_full and i != j:
                if (j, i) in quad:
                    raise QPSFormatError(f"quadratic entry ({a}, {b_}) given in both triangles", lineno)
                quad[(j, i)] = value
        elif section is None or section == "NAME":
            raise QPSFormatError("data outside of a section", lineno)
        else:
            raise QPSFormatError(f"unexpected data in section {section}", lineno)

    if obj_row is None and not col_order and not row_order:
        raise QPSFormatError("document has no ROWS/COLUMNS data")
    n, m = len(col_order), len(row_order)
    row_lower, row_upper = [], []
    for rname in row_order:
        kind = row_type[rname]
        r = rhs.get(rname, ZERO)
        lo, up = {"E": (r, r), "L": (-INF, r), "G": (r, INF), "N": (-INF, INF)}[kind]
        if rname in ranges:
            R = ranges[rname]
            if kind == "L":
                lo = r - abs(R)
            elif kind == "G":
                up = r + abs(R)
            elif kind == "E":
                lo, up = (r, r + R) if R >= 0 else (r + R, r)
        row_lower.append(lo)
        row_upper.append(up)
    col_lower = [lower.get(j, ZERO) for j in range(n)]
    col_upper = [upper.get(j, INF) for j in range(n)]
    for j in range(n):
        if col_lower[j] > col_upper[j]:
            raise QPSFormatError(f"column {col_order[j]!r} has lower bound above upper bound")
    c = [cost.get(j, ZERO) for j in range(n)]
    if negative_sense:
        c = [-v for v in c]
        quad = {k: -v for k, v in quad.items()}
        obj_constant = -obj_constant
    for (i, j), v in quad.items():
        if quad.get((j, i)) != v:
            raise QPSFormatError(f"quadratic matrix is not symmetric at ({col_order[i]}, {col_order[j]})")
    return GeneralQP(
        Q=RatMatrix(n, n, quad, symmetric=True),
        c=tuple(c),
        A=RatMatrix(m, n, entries),
        row_lower=tuple(row_lower),
        row_upper=tuple(row_upper),
        col_lower=tuple(col_lower),
        col_upper=tuple(col_upper),
        obj_constant=obj_constant,
        name=name,
        row_names=tuple(row_order),
        col_names=tuple(col_order),
    )


def read_qps(path) -> GeneralQP:
    with open(path, encoding="utf-8") as fh:
        return parse_qps(fh.read())


def format_number(q: Fraction) -> str:
    """Exact literal: a decimal when the denominator is ``2^a 5^b``, else ``p/q``."""
    q = to_rational(q)
    if q.denominator == 1:
        return str(q.numerator)
    d = q.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return fraction_str(q)
    k = max(twos, fives)
    mantissa = q.numerator * 10**k // q.denominator
    sign = "-" if mantissa < 0 else ""
    digits = str(abs(mantissa)).rjust(k + 1, "0")
    text = f"{sign}{digits[:-k]}.{digits[-k:]}"
    if k > 12:
        return f"{mantissa}e-{k}"
    return text


def write_qps(g: GeneralQP) -> str:
    """Serialize ``g``; :func:`parse_qps` reproduces it exactly."""
    out = io.StringIO()
    w = out.write
    w(f"NAME          {g.name}\n")
    w("ROWS\n")
    obj = "OBJ"
    while obj in g.row_names:
        obj += "_"
    w(f" N  {obj}\n")
    rhs_lines, range_lines = [], []
    for i, rname in enumerate(g.row_names):
        lo, up = g.row_lower[i], g.row_upper[i]
        if lo == up:
            kind, r, R = "E", lo, None
        elif is_finite(lo) and is_finite(up):
            kind, r, R = "G", lo, up - lo
        elif is_finite(lo):
            kind, r, R = "G", lo, None
        elif is_finite(up):
            kind, r, R = "L", up, None
        else:
            kind, r, R = "N", ZERO, None
        w(f" {kind}  {rname}\n")
        if r:
            rhs_lines.append((rname, r))
        if R is not None:
            range_lines.append((rname, R))
    w("COLUMNS\n")
    for j, cname in enumerate(g.col_names):
        items = []
        if g.c[j]:
            items.append((obj, g.c[j]))
        items.extend((g.row_names[i], v) for i, v in g.A.column(j))
        if not items:
            items.append((obj, ZERO))
        for rname, v in items:
            w(f"    {cname}  {rname}  {format_number(v)}\n")
    w("RHS\n")
    if g.obj_constant:
        w(f"    RHS  {obj}  {format_number(-g.obj_constant)}\n")
    for rname, v in rhs_lines:
        w(f"    RHS  {rname}  {format_number(v)}\n")
    if range_lines:
        w("RANGES\n")
        for rname, v in range_lines:
            w(f"    RNG  {rname}  {format_number(v)}\n")
    bound_lines = []
    for j, cname in enumerate(g.col_names):
        lo, up = g.col_lower[j], g.col_upper[j]
        if not is_finite(lo) and not is_finite(up):
            bound_lines.append(f" FR BND  {cname}")
            continue
        if is_finite(lo) and lo == up:
            bound_lines.append(f" FX BND  {cname}  {format_number(lo)}")
            continue
        if not is_finite(lo):
            bound_lines.append(f" MI BND  {cname}")
        elif lo != 0 or (is_finite(up) and up < 0):
            bound_lines.append(f" LO BND  {cname}  {format_number(lo)}")
        if is_finite(up):
            bound_lines.append(f" UP BND  {cname}  {format_number(up)}")
    if bound_lines:
        w("BOUNDS\n")
        for line in bound_lines:
            w(line + "\n")
    quad = [(i, j, v) for i, j, v in g.Q.triplets() if i >= j]
    if quad:
        w("QUADOBJ\n")
        for i, j, v in quad:
            w(f"    {g.col_names[j]}  {g.col_names[i]}  {format_number(v)}\n")
    w("ENDATA\n")
    return out.getvalue()


def format_sci(q: Fraction, digits: int = 3) -> str:
    """Decimal scientific rendering of an exact rational, e.g. ``1.00e-101``; zero is ``"0"``."""
    q = to_rational(q)
    if q == 0:
        return "0"
    with localcontext() as ctx:
        ctx.prec = digits + 5
        ctx.Emin = -999999999
        ctx.Emax = 999999999
        value = Decimal(q.numerator) / Decimal(q.denominator)
        return f"{value:.{digits - 1}e}"


REPORT_STATUSES = ("exact", "tolerance_reached", "refinement_limit", "oracle_failure")

CSV_COLUMNS = (
    "name",
    "status",
    "time_seconds",
    "oracle_iterations",
    "tolerance",
    "refinements",
    "backsteps",
    "resolves",
    "measured_sigma",
    "rational_time_fraction",
    "objective_double",
    "objective_exact",
    "delta_p",
    "delta_d",
    "delta_s",
)


@dataclass
class SolveReport:
    name: str
    status: str
    refinements: int
    backsteps: int
    resolves: int
    oracle_iterations: int
    delta_p: Fraction
    delta_d: Fraction
    delta_s: Fraction
    objective_exact: Optional[Fraction]
    time_seconds: float
    iterations: list = field(default_factory=list)
    measured_sigma: Fraction = ZERO
    rational_time_fraction: float = 0.0
    config: dict = field(default_factory=dict)
    error: str = ""

    def __post_init__(self) -> None:
        if self.status not in REPORT_STATUSES and not self.error:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "exact" and (self.delta_p or self.delta_d or self.delta_s):
            raise ValueError("an exact report must carry zero violations")

    @property
    def tolerance(self) -> Fraction:
        return max(self.delta_p, self.delta_d, self.delta_s)

    @property
    def objective_double(self) -> Optional[float]:
        return None if self.objective_exact is None else float(self.objective_exact)

    def row(self) -> dict:
        """Flat record in :data:`CSV_COLUMNS` order."""
        return {
            "name": self.name,
            "status": self.status,
            "time_seconds": f"{self.time_seconds:.6f}",
            "oracle_iterations": self.oracle_iterations,
            "tolerance": format_sci(self.tolerance),
            "refinements": self.refinements,
            "backsteps": self.backsteps,
            "resolves": self.resolves,
            "measured_sigma": format_sci(self.measured_sigma),
            "rational_time_fraction": f"{self.rational_time_fraction:.4f}",
            "objective_double": "" if self.objective_exact is None else repr(self.objective_double),
            "objective_exact": "" if self.objective_exact is None else fraction_str(self.objective_exact),
            "delta_p": fraction_str(self.delta_p),
            "delta_d": fraction_str(self.delta_d),
            "delta_s": fraction_str(self.delta_s),
        }

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "status": self.status,
            "refinements": self.refinements,
            "backsteps": self.backsteps,
            "resolves": self.resolves,
            "oracle_iterations": self.oracle_iterations,
            "delta_p": fraction_str(self.delta_p),
            "delta_d": fraction_str(self.delta_d),
            "delta_s": fraction_str(self.delta_s),
            "delta_p_decimal": format_sci(self.delta_p),
            "delta_d_decimal": format_sci(self.delta_d),
            "delta_s_decimal": format_sci(self.delta_s),
            "tolerance": format_sci(self.tolerance),
            "objective_exact": None if self.objective_exact is None else fraction_str(self.objective_exact),
            "objective_double": self.objective_double,
            "time_seconds": self.time_seconds,
            "rational_time_fraction": self.rational_time_fraction,
            "measured_sigma": fraction_str(self.measured_sigma),
            "iterations": [_log_row(r) for r in self.iterations],
            "config": self.config,
        }
        if self.error:
            d["error"] = self.error
        return d


def _log_row(row) -> dict:
    d = asdict(row) if not isinstance(row, dict) else dict(row)
    for key in ("delta", "delta_p", "delta_d", "delta_s"):
        v = d.get(key)
        if isinstance(v, Fraction):
            d[key] = fraction_str(v)
            d[key + "_decimal"] = format_sci(v)
    return d


def csv_header() -> str:
    return ",".join(CSV_COLUMNS)


def write_report(r: SolveReport, format: str = "json") -> str:
    if format == "json":
        return json.dumps(r.to_dict(), indent=2)
    if format in ("csv", "csv-row"):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writerow(r.row())
        return buf.getvalue().rstrip("\n")
    if format == "human":
        lines = [
            f"instance          {r.name}",
            f"status            {r.status}",
            f"refinements       {r.refinements}",
            f"backsteps         {r.backsteps}",
            f"resolves          {r.resolves}",
            f"oracle iterations {r.oracle_iterations}",
            f"primal violation  {format_sci(r.delta_p)}",
            f"dual violation    {format_sci(r.delta_d)}",
            f"complementarity   {format_sci(r.delta_s)}",
            f"objective         {'-' if r.objective_exact is None else format_sci(r.objective_exact, 17)}",
            f"time [s]          {r.time_seconds:.3f} ({100 * r.rational_time_fraction:.1f}% rational)",
        ]
        if r.error:
            lines.append(f"error             {r.error}")
        if r.iterations:
            lines.append("  k  scaling     delta_p     delta_d     delta_s     oracle")
            for row in r.iterations:
                row = row if isinstance(row, dict) else asdict(row)
                delta = "-" if row["delta"] is None else format_sci(row["delta"])
                lines.append(
                    f"{row['k']:3d}  {delta:<10}  {format_sci(row['delta_p']):<10}  "
                    f"{format_sci(row['delta_d']):<10}  {format_sci(row['delta_s']):<10}  {row['oracle_status'] or '-'}"
                )
        return "\n".join(lines)
    raise ValueError(f"unknown report format {format!r}")


@dataclass
class Certificate:
    name: str
    primal: dict
    dual: dict


def write_certificate(name: str, col_names, x, row_names, y) -> str:
    lines = [f"NAME {name}", "PRIMAL"]
    lines += [f"{cname} {fraction_str(v)}" for cname, v in zip(col_names, x)]
    lines.append("DUAL")
    lines += [f"{rname} {fraction_str(v)}" for rname, v in zip(row_names, y)]
    lines.append("END")
    return "\n".join(lines) + "\n"


def parse_certificate(text: str) -> Certificate:
    name = ""
    primal: dict[str, Fraction] = {}
    dual: dict[str, Fraction] = {}
    target = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0].upper()
        if key == "NAME":
            name = parts[1] if len(parts) > 1 else ""
        elif key == "PRIMAL":
            target = primal
        elif key == "DUAL":
            target = dual
        elif key == "END":
            break
        else:
            if target is None or len(parts) != 2:
                raise QPSFormatError("expected '<name> <value>' inside PRIMAL or DUAL", lineno)
            if parts[0] in target:
                raise QPSFormatError(f"duplicate entry {parts[0]!r}", lineno)
            target[parts[0]] = _number(parts[1], lineno)
    return Certificate(name, primal, dual)
