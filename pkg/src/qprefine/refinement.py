"""Iterative refinement of QP solutions in exact rational arithmetic.

The driver repeatedly measures the exact KKT residuals of the current
iterate, zooms the residual problem by a single scaling factor, hands the
rounded result to a floating-point oracle, and folds the oracle's answer back
into the rational iterate.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .exact import ZERO, lu_factor, lu_solve, to_rational
from .model import StandardQP, FloatQP, is_finite, round_to_float, reduced_costs
from .oracle import ActiveSetOracle, Basis, OracleResult, OracleSettings, QPOracle, VarStatus

NEG_INF = -math.inf
POS_INF = math.inf


class Status(str, enum.Enum):
    EXACT = "exact"
    TOLERANCE_REACHED = "tolerance_reached"
    REFINEMENT_LIMIT = "refinement_limit"
    ORACLE_FAILURE = "oracle_failure"


@dataclass(frozen=True)
class Iterate:
    x: tuple
    y: tuple

    @classmethod
    def zeros(cls, n: int, m: int) -> "Iterate":
        return cls((ZERO,) * n, (ZERO,) * m)

    @classmethod
    def of(cls, x: Sequence, y: Sequence) -> "Iterate":
        return cls(tuple(to_rational(v) for v in x), tuple(to_rational(v) for v in y))


@dataclass(frozen=True)
class Residuals:
    b_hat: tuple
    l_hat: tuple
    u_hat: tuple
    c_hat: tuple
    delta_p: Fraction
    delta_d: Fraction
    delta_s: Fraction

    @property
    def is_zero(self) -> bool:
        return self.delta_p == 0 and self.delta_d == 0 and self.delta_s == 0

    @property
    def worst(self) -> Fraction:
        return max(self.delta_p, self.delta_d, self.delta_s)


def _check_dims(p: StandardQP, it: Iterate) -> None:
    if len(it.x) != p.n or len(it.y) != p.m:
        raise ValueError(f"iterate has shape ({len(it.x)}, {len(it.y)}), problem needs ({p.n}, {p.m})")


def compute_residuals(p: StandardQP, it: Iterate) -> Residuals:
    """Exact primal, dual and complementarity violations of ``it``.

    Dual violation depends on where each variable sits: one-sided at a bound,
    ``|c_hat_i|`` strictly between bounds, nothing for a variable sitting on
    both bounds of a fixed range.
    """
    _check_dims(p, it)
    x, y = it.x, it.y
    ax = p.A.matvec(x)
    b_hat = tuple(bi - v for bi, v in zip(p.b, ax))
    l_hat = tuple(li - xi if is_finite(li) else NEG_INF for li, xi in zip(p.l, x))
    u_hat = tuple(xi - ui if is_finite(ui) else NEG_INF for ui, xi in zip(p.u, x))
    c_hat = tuple(reduced_costs(p, x, y))

    delta_p = max((abs(v) for v in b_hat), default=ZERO)
    for v in l_hat:
        if v > delta_p:
            delta_p = v
    for v in u_hat:
        if v > delta_p:
            delta_p = v
    delta_p = max(delta_p, ZERO)

    delta_d = ZERO
    comp = ZERO
    for i, ci in enumerate(c_hat):
        li, ui, xi = p.l[i], p.u[i], x[i]
        at_lower = is_finite(li) and xi <= li
        at_upper = is_finite(ui) and xi >= ui
        if at_lower and at_upper:
            v = ZERO
        elif at_lower:
            v = -ci if ci < 0 else ZERO
        elif at_upper:
            v = ci if ci > 0 else ZERO
        else:
            v = abs(ci)
        if v > delta_d:
            delta_d = v
        if ci > 0 and is_finite(li):
            comp += (xi - li) * ci
        elif ci < 0 and is_finite(ui):
            comp += (ui - xi) * -ci
    return Residuals(b_hat, l_hat, u_hat, c_hat, Fraction(delta_p), delta_d, abs(comp))


def verify_kkt_exact(p: StandardQP, it: Iterate) -> tuple[Residuals, bool]:
    """Residuals plus a flag that is True iff the KKT conditions hold exactly."""
    r = compute_residuals(p, it)
    return r, r.is_zero


def choose_scaling(r: Residuals, delta_prev: Fraction, alpha: Fraction) -> Fraction:
    """``min{1/delta_p, 1/delta_d, alpha * delta_prev}``, a zero violation contributing +inf."""
    delta_prev, alpha = to_rational(delta_prev), to_rational(alpha)
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    candidates = [alpha * delta_prev]
    if r.delta_p > 0:
        candidates.append(1 / r.delta_p)
    if r.delta_d > 0:
        candidates.append(1 / r.delta_d)
    return min(candidates)


def build_refined_qp(p: StandardQP, it: Iterate, delta: Fraction, residuals: Residuals | None = None) -> StandardQP:
    """Shifted and scaled residual problem; ``Q`` and ``A`` are the same objects as in ``p``."""
    delta = to_rational(delta)
    if delta <= 0:
        raise ValueError("scaling factor must be positive")
    r = residuals if residuals is not None else compute_residuals(p, it)
    return dataclasses.replace(
        p,
        c=tuple(delta * v for v in r.c_hat),
        b=tuple(delta * v for v in r.b_hat),
        l=tuple(delta * v if is_finite(v) else NEG_INF for v in r.l_hat),
        u=tuple(-delta * v if is_finite(v) else POS_INF for v in r.u_hat),
        obj_constant=ZERO,
    )


def apply_correction(it: Iterate, sol: OracleResult, delta: Fraction, p: StandardQP) -> Iterate:
    """``(x, y) + (x_bar, y_bar) / delta``, then nonbasic variables snapped onto their bounds."""
    delta = to_rational(delta)
    if len(sol.x) != len(it.x) or len(sol.y) != len(it.y):
        raise ValueError("oracle solution does not match the iterate dimensions")
    x = [xi + Fraction(float(v)) / delta for xi, v in zip(it.x, sol.x)]
    y = tuple(yi + Fraction(float(v)) / delta for yi, v in zip(it.y, sol.y))
    for i, s in enumerate(sol.basis.status):
        if s == VarStatus.AT_LOWER and is_finite(p.l[i]):
            x[i] = p.l[i]
        elif s == VarStatus.AT_UPPER and is_finite(p.u[i]):
            x[i] = p.u[i]
    return Iterate(tuple(x), y)


@dataclass(frozen=True)
class BasisSolveResult:
    status: str  # "optimal" | "not_optimal" | "singular"
    iterate: Optional[Iterate] = None
    z: Optional[tuple] = None
    residuals: Optional[Residuals] = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _independent_rows(p: StandardQP, pos: dict) -> list[int]:
    """Rows of ``A`` restricted to the columns in ``pos`` that are linearly independent, greedily in order."""
    pivots: list[tuple[int, dict]] = []
    keep = []
    for i in range(p.m):
        vec = {pos[j]: v for j, v in p.A.row(i) if j in pos}
        for col, prow in pivots:
            f = vec.get(col)
            if f:
                for c2, v2 in prow.items():
                    nv = vec.get(c2, ZERO) - f * v2
                    if nv:
                        vec[c2] = nv
                    else:
                        vec.pop(c2, None)
        if vec:
            col = min(vec)
            lead = vec[col]
            pivots.append((col, {c2: v2 / lead for c2, v2 in vec.items()}))
            keep.append(i)
    return keep


def rational_basis_solve(p: StandardQP, basis: Basis) -> BasisSolveResult:
    """Solve the KKT system of ``basis`` exactly and keep the result only if it verifies."""
    if len(basis) != p.n:
        raise ValueError(f"basis has {len(basis)} entries, problem has {p.n} variables")
    x = [ZERO] * p.n
    free = []
    for i, s in enumerate(basis.status):
        if s == VarStatus.AT_LOWER:
            if not is_finite(p.l[i]):
                raise ValueError(f"variable {i} at_lower without a finite lower bound")
            x[i] = p.l[i]
        elif s == VarStatus.AT_UPPER:
            if not is_finite(p.u[i]):
                raise ValueError(f"variable {i} at_upper without a finite upper bound")
            x[i] = p.u[i]
        else:
            free.append(i)
    pos = {j: t for t, j in enumerate(free)}
    # dependent rows only restate b; their multiplier stays zero and the final check still covers them
    rows = _independent_rows(p, pos)
    k, m = len(free), len(rows)
    rpos = {i: t for t, i in enumerate(rows)}
    K = [[ZERO] * (k + m) for _ in range(k + m)]
    # Q_FF x_F - A_F' y = -c_F - Q_FN x_N
    rhs = [-p.c[j] for j in free]
    for t, j in enumerate(free):
        for col, v in p.Q.row(j):
            if col in pos:
                K[t][pos[col]] = v
            elif x[col]:
                rhs[t] -= v * x[col]
        for row, v in p.A.column(j):
            if row in rpos:
                K[t][k + rpos[row]] = -v
    # A_F x_F = b - A_N x_N
    for t, row in enumerate(rows):
        acc = p.b[row]
        for col, v in p.A.row(row):
            if col in pos:
                K[k + t][pos[col]] = v
            elif x[col]:
                acc -= v * x[col]
        rhs.append(acc)
    f = lu_factor(K)
    if not f.rank_ok:
        return BasisSolveResult("singular")
    sol = lu_solve(f, rhs)
    for t, j in enumerate(free):
        x[j] = sol[t]
    y = [ZERO] * p.m
    for t, row in enumerate(rows):
        y[row] = sol[k + t]
    it = Iterate(tuple(x), tuple(y))
    r, ok = verify_kkt_exact(p, it)
    if not ok:
        return BasisSolveResult("not_optimal", it, r.c_hat, r)
    return BasisSolveResult("optimal", it, r.c_hat, r)


def _log(q: Fraction) -> float:
    q = to_rational(q)
    if q <= 0:
        raise ValueError("logarithm of a non-positive value")
    return math.log(q.numerator) - math.log(q.denominator)


def compute_iteration_bound(eps_tilde, eps_p, eps_d, eps_s=None, sigma=0) -> int:
    """Worst-case number of refinement iterations for a contraction factor ``eps_tilde``.

    With ``sigma == 0`` complementarity never binds and only the primal and
    dual terms count.
    """
    eps_tilde = to_rational(eps_tilde)
    if not 0 < eps_tilde < 1:
        raise ValueError("eps_tilde must lie in (0, 1)")
    log_e = _log(eps_tilde)
    terms = [_log(eps_p) / log_e, _log(eps_d) / log_e]
    sigma = to_rational(sigma)
    if sigma > 0 and eps_s is not None and to_rational(eps_s) > 0:
        terms.append(_log(to_rational(eps_s) / sigma) / (2 * log_e) + 1)
    worst = max(terms)
    nearest = round(worst)
    k = nearest if abs(worst - nearest) < 1e-9 else math.ceil(worst)
    return max(1, k)


@dataclass(frozen=True)
class RefineParams:
    eps_p: Fraction = Fraction(1, 10**100)
    eps_d: Fraction = Fraction(1, 10**100)
    eps_s: Optional[Fraction] = None
    alpha: Fraction = Fraction(10**12)
    k_max: int = 300
    l_max: int = 10
    ratfac_minstalls: Optional[int] = 2
    oracle_fast: Optional[OracleSettings] = field(default_factory=OracleSettings.fast)
    oracle_reliable: OracleSettings = field(default_factory=OracleSettings.reliable)
    preset: str = "custom"
    # informational columns of the original parameter table
    source_solver_version: str = ""
    sparse: bool = False

    def __post_init__(self) -> None:
        for name in ("eps_p", "eps_d", "alpha"):
            object.__setattr__(self, name, to_rational(getattr(self, name)))
        if self.eps_s is None:
            object.__setattr__(self, "eps_s", self.eps_p * self.eps_d)
        else:
            object.__setattr__(self, "eps_s", to_rational(self.eps_s))
        if self.alpha <= 1:
            raise ValueError("alpha must exceed 1")
        if min(self.eps_p, self.eps_d, self.eps_s) < 0:
            raise ValueError("tolerances must be non-negative")
        if self.k_max < 0 or self.l_max < 0:
            raise ValueError("limits must be non-negative")

    def replace(self, **changes) -> "RefineParams":
        return dataclasses.replace(self, **changes)


def _preset(name, eps, k_max, l_max, minstalls, version, sparse, resolves=True):
    return RefineParams(
        eps_p=eps,
        eps_d=eps,
        alpha=Fraction(10**12),
        k_max=k_max,
        l_max=l_max,
        ratfac_minstalls=minstalls,
        oracle_fast=OracleSettings.fast() if resolves else None,
        oracle_reliable=OracleSettings.reliable(),
        preset=name,
        source_solver_version=version,
        sparse=sparse,
    )


PRESETS: dict[str, RefineParams] = {
    "s1": _preset("s1", Fraction(1, 10**100), 300, 10, 2, "3.2", False),
    "s2": _preset("s2", Fraction(1, 10**100), 50, 10, 0, "3.2", False),
    "s3": _preset("s3", Fraction(1, 10**100), 50, 10, 0, "4.0", True, resolves=False),
    "s4": _preset("s4", Fraction(1, 10**100), 50, 10, 51, "4.0", True, resolves=False),
    "s5": _preset("s5", Fraction(1, 10**10), 10, 1, 30, "3.2", False),
}


def preset(name: str) -> RefineParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


@dataclass
class IterationLog:
    k: int
    delta: Optional[Fraction]
    delta_p: Fraction
    delta_d: Fraction
    delta_s: Fraction
    oracle_status: Optional[str] = None
    basis_changed: Optional[bool] = None
    backsteps: int = 0
    resolves: int = 0
    oracle_iterations: int = 0
    oracle_tolerance: Optional[float] = None
    compliant: Optional[bool] = None
    rational_solve: Optional[str] = None


@dataclass
class RefineOutcome:
    iterate: Iterate
    z: tuple
    status: Status
    residuals: Residuals
    log: list = field(default_factory=list)
    measured_sigma: Fraction = ZERO
    refinements: int = 0
    iterations: int = 0
    backsteps: int = 0
    resolves: int = 0
    oracle_iterations: int = 0
    initial_oracle_status: Optional[str] = None
    initial_compliant: Optional[bool] = None
    time_seconds: float = 0.0
    rational_seconds: float = 0.0
    params: Optional[RefineParams] = None

    @property
    def rational_time_fraction(self) -> float:
        return self.rational_seconds / self.time_seconds if self.time_seconds > 0 else 0.0


class _Clock:
    def __init__(self) -> None:
        self.rational = 0.0
        self._t0 = time.perf_counter()

    def start(self):
        return time.perf_counter()

    def stop(self, t: float) -> None:
        self.rational += time.perf_counter() - t

    @property
    def total(self) -> float:
        return time.perf_counter() - self._t0


def _solve_with_resolve(oracle: QPOracle, fq: FloatQP, params: RefineParams, warm: Basis | None):
    """Fast settings first, reliable settings from the same warm basis on failure."""
    resolves = 0
    iterations = 0
    if params.oracle_fast is not None:
        res = oracle.solve(fq, params.oracle_fast, warm)
        iterations += res.iterations
        if res.ok:
            return res, params.oracle_fast, resolves, iterations
        resolves = 1
    res = oracle.solve(fq, params.oracle_reliable, warm)
    iterations += res.iterations
    return res, params.oracle_reliable, resolves, iterations


def refine(p: StandardQP, params: RefineParams | None = None, oracle: QPOracle | None = None) -> RefineOutcome:
    """Iteratively refine a primal-dual solution of ``p`` to the requested tolerances."""
    params = params or preset("s1")
    oracle = oracle if oracle is not None else ActiveSetOracle()
    clock = _Clock()

    t = clock.start()
    base = round_to_float(p)
    clock.stop(t)

    out = RefineOutcome(
        iterate=Iterate.zeros(p.n, p.m), z=(), status=Status.ORACLE_FAILURE, residuals=None, params=params
    )

    def finish(it: Iterate, status: Status, r: Residuals | None = None) -> RefineOutcome:
        t0 = clock.start()
        r = r if r is not None else compute_residuals(p, it)
        clock.stop(t0)
        if status == Status.EXACT:
            assert r.is_zero, "exact status without an exact KKT certificate"
        out.iterate, out.status, out.residuals, out.z = it, status, r, r.c_hat
        out.time_seconds = clock.total
        out.rational_seconds = clock.rational
        return out

    res, used, resolves, its = _solve_with_resolve(oracle, base, params, None)
    out.resolves += resolves
    out.oracle_iterations += its
    out.initial_oracle_status = res.status.value
    if not res.ok:
        return finish(Iterate.zeros(p.n, p.m), Status.ORACLE_FAILURE)

    t = clock.start()
    it = apply_correction(Iterate.zeros(p.n, p.m), res, Fraction(1), p)
    clock.stop(t)

    basis_prev = res.basis
    stall = 0
    delta_prev = Fraction(1)
    last_tol = used.termination_tolerance
    prev_row: IterationLog | None = None

    def try_basis_solve(basis: Basis):
        if params.ratfac_minstalls is None or stall < params.ratfac_minstalls:
            return None
        t0 = clock.start()
        result = rational_basis_solve(p, basis)
        clock.stop(t0)
        return result

    bs = try_basis_solve(basis_prev)
    if bs is not None and bs.ok:
        out.initial_compliant = None
        return finish(bs.iterate, Status.EXACT, bs.residuals)

    k = 0
    while True:
        k += 1
        t = clock.start()
        r = compute_residuals(p, it)
        clock.stop(t)
        out.iterations = k

        # whether the previous oracle answer met its own tolerance, read off
        # exactly through the scaling identity: scaled residual = delta * residual
        scaled = max(r.delta_p, r.delta_d) * delta_prev
        compliant = scaled <= to_rational(last_tol)
        sigma_obs = r.delta_s * delta_prev * delta_prev
        if sigma_obs > out.measured_sigma:
            out.measured_sigma = sigma_obs
        if prev_row is None:
            out.initial_compliant = compliant
        else:
            prev_row.compliant = compliant

        row = IterationLog(k=k, delta=None, delta_p=r.delta_p, delta_d=r.delta_d, delta_s=r.delta_s)
        out.log.append(row)

        if r.is_zero:
            return finish(it, Status.EXACT, r)
        if r.delta_p <= params.eps_p and r.delta_d <= params.eps_d and r.delta_s <= params.eps_s:
            return finish(it, Status.TOLERANCE_REACHED, r)
        if out.refinements >= params.k_max:
            return finish(it, Status.REFINEMENT_LIMIT, r)

        t = clock.start()
        delta = choose_scaling(r, delta_prev, params.alpha)
        clock.stop(t)

        backsteps = 0
        while True:
            t = clock.start()
            refined = build_refined_qp(p, it, delta, r)
            fq = round_to_float(refined, base)
            clock.stop(t)
            res, used, resolves, its = _solve_with_resolve(oracle, fq, params, basis_prev)
            row.resolves += resolves
            row.oracle_iterations += its
            out.resolves += resolves
            out.oracle_iterations += its
            if res.ok:
                break
            smaller = delta / 100
            if backsteps >= params.l_max or smaller < delta_prev:
                row.oracle_status = res.status.value
                row.backsteps = backsteps
                return finish(it, Status.ORACLE_FAILURE, r)
            delta = smaller
            backsteps += 1
            out.backsteps += 1

        out.refinements += 1
        row.delta = delta
        row.backsteps = backsteps
        row.oracle_status = res.status.value
        row.oracle_tolerance = used.termination_tolerance
        row.basis_changed = res.basis != basis_prev

        t = clock.start()
        it = apply_correction(it, res, delta, p)
        clock.stop(t)

        stall = 0 if row.basis_changed else stall + 1
        basis_prev = res.basis
        delta_prev = delta
        last_tol = used.termination_tolerance
        prev_row = row

        bs = try_basis_solve(res.basis)
        if bs is not None:
            row.rational_solve = bs.status
            if bs.ok:
                return finish(bs.iterate, Status.EXACT, bs.residuals)
