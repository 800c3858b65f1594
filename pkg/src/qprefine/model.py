"""QP data in general (row-bounded) form and in the equality standard form.

Infinite bounds are stored as the floats ``-math.inf`` / ``math.inf``; every
finite value is a :class:`~fractions.Fraction`. Comparisons between the two
are exact in Python, but infinite entries must never enter arithmetic.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .exact import ONE, ZERO, RatMatrix, dot, to_rational

INF = math.inf
MAX_DOUBLE = sys.float_info.max


def is_finite(v) -> bool:
    return not (isinstance(v, float) and math.isinf(v))


def _bound(v, default):
    if v is None:
        return default
    if isinstance(v, float) and math.isinf(v):
        return v
    return to_rational(v)


@dataclass(frozen=True)
class GeneralQP:
    """``min 1/2 x'Qx + c'x + const`` s.t. ``row_lower <= A x <= row_upper``, ``col_lower <= x <= col_upper``."""

    Q: RatMatrix
    c: tuple
    A: RatMatrix
    row_lower: tuple
    row_upper: tuple
    col_lower: tuple
    col_upper: tuple
    obj_constant: Fraction = ZERO
    name: str = "QP"
    row_names: tuple = ()
    col_names: tuple = ()

    def __post_init__(self) -> None:
        n, m = self.A.cols, self.A.rows
        if self.Q.shape != (n, n):
            raise ValueError(f"Q must be {n}x{n}, got {self.Q.rows}x{self.Q.cols}")
        if len(self.c) != n or len(self.col_lower) != n or len(self.col_upper) != n:
            raise ValueError("objective/bound vectors do not match the number of columns")
        if len(self.row_lower) != m or len(self.row_upper) != m:
            raise ValueError("row bound vectors do not match the number of rows")
        for i in range(n):
            for j, v in self.Q.row(i):
                if self.Q.entry(j, i) != v:
                    raise ValueError(f"Q is not symmetric at ({i}, {j})")
        for k, (lo, up) in enumerate(zip(self.row_lower, self.row_upper)):
            if lo > up:
                raise ValueError(f"row {k}: lower bound {lo} exceeds upper bound {up}")
        for k, (lo, up) in enumerate(zip(self.col_lower, self.col_upper)):
            if lo > up:
                raise ValueError(f"column {k}: lower bound {lo} exceeds upper bound {up}")
        if not self.row_names:
            object.__setattr__(self, "row_names", tuple(f"r{i + 1}" for i in range(m)))
        if not self.col_names:
            object.__setattr__(self, "col_names", tuple(f"x{j + 1}" for j in range(n)))

    @property
    def n(self) -> int:
        return self.A.cols

    @property
    def m(self) -> int:
        return self.A.rows

    @classmethod
    def build(
        cls,
        Q,
        c,
        A,
        row_lower,
        row_upper,
        col_lower=None,
        col_upper=None,
        obj_constant=0,
        name: str = "QP",
        row_names=(),
        col_names=(),
    ) -> "GeneralQP":
        """Convenience constructor accepting dense lists, floats and ``None`` for infinite bounds."""
        Qm = Q if isinstance(Q, RatMatrix) else RatMatrix.from_dense(Q)
        Am = A if isinstance(A, RatMatrix) else RatMatrix.from_dense(A) if len(A) else RatMatrix.zeros(0, Qm.cols)
        n = Am.cols
        col_lower = [0] * n if col_lower is None else col_lower
        col_upper = [None] * n if col_upper is None else col_upper
        return cls(
            Q=RatMatrix(Qm.rows, Qm.cols, dict(Qm.items()), symmetric=True),
            c=tuple(to_rational(v) for v in c),
            A=Am,
            row_lower=tuple(_bound(v, -INF) for v in row_lower),
            row_upper=tuple(_bound(v, INF) for v in row_upper),
            col_lower=tuple(_bound(v, -INF) for v in col_lower),
            col_upper=tuple(_bound(v, INF) for v in col_upper),
            obj_constant=to_rational(obj_constant),
            name=name,
            row_names=tuple(row_names),
            col_names=tuple(col_names),
        )


@dataclass(frozen=True)
class StandardQP:
    """``min 1/2 x'Qx + c'x + const`` s.t. ``A x = b``, ``l <= x <= u``.

    ``slack_map`` lists ``(column, row)`` pairs for slack columns appended by
    :func:`to_standard_form`; the first ``n_structural`` columns are the
    original variables.
    """

    Q: RatMatrix
    A: RatMatrix
    c: tuple
    b: tuple
    l: tuple
    u: tuple
    obj_constant: Fraction = ZERO
    slack_map: tuple = ()
    n_structural: int = -1
    name: str = "QP"

    def __post_init__(self) -> None:
        n, m = self.A.cols, self.A.rows
        if self.Q.shape != (n, n):
            raise ValueError(f"Q must be {n}x{n}, got {self.Q.rows}x{self.Q.cols}")
        if len(self.b) != m:
            raise ValueError(f"b has length {len(self.b)}, expected {m}")
        if not (len(self.c) == len(self.l) == len(self.u) == n):
            raise ValueError("c, l, u must all have length n")
        for i, (lo, up) in enumerate(zip(self.l, self.u)):
            if lo > up:
                raise ValueError(f"variable {i}: lower bound {lo} exceeds upper bound {up}")
        if self.n_structural < 0:
            object.__setattr__(self, "n_structural", n - len(self.slack_map))

    @property
    def n(self) -> int:
        return self.A.cols

    @property
    def m(self) -> int:
        return self.A.rows

    @classmethod
    def build(cls, Q, A, c, b, l=None, u=None, obj_constant=0, name: str = "QP") -> "StandardQP":
        Qm = Q if isinstance(Q, RatMatrix) else RatMatrix.from_dense(Q, symmetric=True)
        if isinstance(A, RatMatrix):
            Am = A
        elif len(A):
            Am = RatMatrix.from_dense(A)
        else:
            Am = RatMatrix.zeros(0, Qm.cols)
        n = Am.cols
        l = [0] * n if l is None else l
        u = [None] * n if u is None else u
        return cls(
            Q=Qm,
            A=Am,
            c=tuple(to_rational(v) for v in c),
            b=tuple(to_rational(v) for v in b),
            l=tuple(_bound(v, -INF) for v in l),
            u=tuple(_bound(v, INF) for v in u),
            obj_constant=to_rational(obj_constant),
            name=name,
        )


@dataclass
class RoundingReport:
    clamped: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.clamped


@dataclass(frozen=True, eq=False)
class FloatQP:
    """Double-precision image of a :class:`StandardQP` handed to the oracle."""

    Q: np.ndarray
    A: np.ndarray
    c: np.ndarray
    b: np.ndarray
    l: np.ndarray
    u: np.ndarray
    report: RoundingReport = field(default_factory=RoundingReport)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]


def to_standard_form(g: GeneralQP) -> StandardQP:
    """Add one slack column ``s`` per non-equality row: ``a'x - s = 0``, ``lo <= s <= up``."""
    entries = dict(g.A.items())
    n = g.n
    b = []
    l = list(g.col_lower)
    u = list(g.col_upper)
    c = list(g.c)
    slack_map = []
    for i in range(g.m):
        lo, up = g.row_lower[i], g.row_upper[i]
        if lo == up:
            b.append(lo)
            continue
        col = n + len(slack_map)
        entries[(i, col)] = -ONE
        slack_map.append((col, i))
        b.append(ZERO)
        l.append(lo)
        u.append(up)
        c.append(ZERO)
    n_total = n + len(slack_map)
    Q = g.Q if n_total == n else RatMatrix(n_total, n_total, dict(g.Q.items()), symmetric=True)
    A = RatMatrix(g.m, n_total, entries)
    return StandardQP(
        Q=Q,
        A=A,
        c=tuple(c),
        b=tuple(b),
        l=tuple(l),
        u=tuple(u),
        obj_constant=g.obj_constant,
        slack_map=tuple(slack_map),
        n_structural=n,
        name=g.name,
    )


@dataclass(frozen=True)
class GeneralSolution:
    """Solution mapped back to the general form.

    ``y`` are the row multipliers (``A_g' y`` enters the stationarity condition
    with a minus sign) and ``z`` are the reduced costs of the original columns.
    """

    x: tuple
    y: tuple
    z: tuple
    objective: Fraction


def recover_solution(p: StandardQP, g: GeneralQP, x: Sequence[Fraction], y: Sequence[Fraction]) -> GeneralSolution:
    """Drop slack columns; row duals are the standard-form ``y``.

    The reduced cost of a slack column equals its row multiplier, so range and
    inequality rows keep the dual of their standard-form row.
    """
    if len(x) != p.n or len(y) != p.m:
        raise ValueError("iterate dimensions do not match the standard form")
    k = p.n_structural
    xs = tuple(x[:k])
    z_full = reduced_costs(p, x, y)
    for col, row in p.slack_map:
        assert z_full[col] == y[row]
    obj = general_objective(g, xs)
    return GeneralSolution(x=xs, y=tuple(y), z=tuple(z_full[:k]), objective=obj)


def lift_solution(p: StandardQP, g: GeneralQP, x: Sequence[Fraction], y: Sequence[Fraction]) -> tuple[tuple, tuple]:
    """Inverse of :func:`recover_solution`: slack columns take their row activity."""
    if len(x) != g.n or len(y) != g.m:
        raise ValueError(f"expected {g.n} primal and {g.m} dual values, got {len(x)} and {len(y)}")
    x = [to_rational(v) for v in x]
    ax = g.A.matvec(x)
    full = x + [ZERO] * len(p.slack_map)
    for col, row in p.slack_map:
        full[col] = ax[row]
    return tuple(full), tuple(to_rational(v) for v in y)


def general_objective(g: GeneralQP, x: Sequence[Fraction]) -> Fraction:
    if len(x) != g.n:
        raise ValueError(f"dimension mismatch: expected {g.n} values, got {len(x)}")
    qx = g.Q.matvec(x)
    return dot(x, qx) / 2 + dot(g.c, x) + g.obj_constant


def general_kkt_violation(g: GeneralQP, x: Sequence[Fraction], y: Sequence[Fraction]) -> Fraction:
    """Largest exact KKT violation of ``(x, y)`` in the general form (0 iff optimal)."""
    ax = g.A.matvec(x)
    z = [a + b - c for a, b, c in zip(g.Q.matvec(x), g.c, g.A.rmatvec(y))]
    viol = [ZERO]
    for i, v in enumerate(ax):
        lo, up = g.row_lower[i], g.row_upper[i]
        if is_finite(lo):
            viol.append(lo - v)
        if is_finite(up):
            viol.append(v - up)
        viol.append(_sign_violation(y[i], v, lo, up))
    for j, v in enumerate(x):
        lo, up = g.col_lower[j], g.col_upper[j]
        if is_finite(lo):
            viol.append(lo - v)
        if is_finite(up):
            viol.append(v - up)
        viol.append(_sign_violation(z[j], v, lo, up))
    return max(viol)


def _sign_violation(mult: Fraction, value: Fraction, lo, up) -> Fraction:
    # mult must be >= 0 when value sits at lo, <= 0 at up, 0 in between
    at_lo = is_finite(lo) and value == lo
    at_up = is_finite(up) and value == up
    if at_lo and at_up:
        return ZERO
    if at_lo:
        return max(ZERO, -mult)
    if at_up:
        return max(ZERO, mult)
    return abs(mult)


def _round(v, where, report: RoundingReport) -> float:
    if isinstance(v, float):
        return v
    try:
        return float(v)
    except OverflowError:
        clamped = MAX_DOUBLE if v > 0 else -MAX_DOUBLE
        report.clamped.append(where)
        return clamped


def round_vector(values: Sequence, name: str, report: RoundingReport) -> np.ndarray:
    return np.array([_round(v, (name, i), report) for i, v in enumerate(values)], dtype=float)


def round_matrix(m: RatMatrix, name: str, report: RoundingReport) -> np.ndarray:
    out = np.zeros((m.rows, m.cols))
    for (i, j), v in m.items():
        out[i, j] = _round(v, (name, i, j), report)
    return out


def round_to_float(p: StandardQP, base: FloatQP | None = None) -> FloatQP:
    """Round every entry to the nearest double (ties to even); infinities pass through.

    Magnitudes beyond the double range are clamped to +-max double and listed
    in ``report.clamped``. When ``base`` is given its matrices are reused
    as-is, so repeated refinements hand the oracle bit-identical Q and A.
    """
    report = RoundingReport()
    if base is not None:
        Q, A = base.Q, base.A
        report.clamped.extend(w for w in base.report.clamped if w[0] in ("Q", "A"))
    else:
        Q = round_matrix(p.Q, "Q", report)
        A = round_matrix(p.A, "A", report)
    return FloatQP(
        Q=Q,
        A=A,
        c=round_vector(p.c, "c", report),
        b=round_vector(p.b, "b", report),
        l=round_vector(p.l, "l", report),
        u=round_vector(p.u, "u", report),
        report=report,
    )


def objective_exact(p: StandardQP, x: Sequence[Fraction]) -> Fraction:
    """Exact value of ``1/2 x'Qx + c'x + const``."""
    if len(x) != p.n:
        raise ValueError(f"dimension mismatch: expected {p.n} values, got {len(x)}")
    x = [to_rational(v) for v in x]
    return dot(x, p.Q.matvec(x)) / 2 + dot(p.c, x) + p.obj_constant


def reduced_costs(p: StandardQP, x: Sequence[Fraction], y: Sequence[Fraction]) -> list[Fraction]:
    """``Qx + c - A'y``."""
    qx = p.Q.matvec(x)
    aty = p.A.rmatvec(y)
    return [a + b - c for a, b, c in zip(qx, p.c, aty)]
