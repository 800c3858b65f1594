import math
import random
import sys
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from conftest import MICRO, tiny_rhs_general, tiny_rhs_standard
from oracles import enumerate_active_sets, enumerate_general
from qprefine import GeneralQP, StandardQP, preset, refine
from qprefine.generate import random_qp
from qprefine.model import (
    general_kkt_violation,
    general_objective,
    lift_solution,
    objective_exact,
    recover_solution,
    round_to_float,
    to_standard_form,
)


def floats(v):
    return [float(x) for x in v]


def test_general_form_rejects_crossed_bounds():
    with pytest.raises(ValueError):
        GeneralQP.build(Q=[[1]], c=[0], A=[[1]], row_lower=[2], row_upper=[1])
    with pytest.raises(ValueError):
        GeneralQP.build(Q=[[1]], c=[0], A=[[1]], row_lower=[0], row_upper=[1], col_lower=[3], col_upper=[2])


def test_q_must_be_symmetric():
    with pytest.raises(ValueError):
        GeneralQP.build(Q=[[1, 2], [0, 1]], c=[0, 0], A=[], row_lower=[], row_upper=[])


def test_standard_form_rejects_crossed_bounds():
    with pytest.raises(ValueError):
        StandardQP.build(Q=[[1]], A=[[1]], c=[0], b=[0], l=[1], u=[0])


def test_tiny_rhs_is_already_standard():
    g = tiny_rhs_general()
    p = to_standard_form(g)
    ref = tiny_rhs_standard()
    assert p.slack_map == ()
    assert (p.Q, p.A, p.c, p.b, p.l, p.u) == (ref.Q, ref.A, ref.c, ref.b, ref.l, ref.u)


def test_range_row_gets_one_slack():
    g = GeneralQP.build(Q=[[1, 0], [0, 1]], c=[0, 0], A=[[1, 1]], row_lower=[1], row_upper=[3])
    p = to_standard_form(g)
    assert p.n == 3 and p.slack_map == ((2, 0),)
    assert p.A.dense() == [[1, 1, -1]]
    assert p.b == (0,)
    assert (p.l[2], p.u[2]) == (1, 3)
    assert p.c[2] == 0


def test_slack_map_is_a_bijection_onto_inequality_rows():
    for seed in range(20):
        g = random_qp(seed, 5, 4)
        p = to_standard_form(g)
        cols = [c for c, _ in p.slack_map]
        rows = [r for _, r in p.slack_map]
        assert sorted(cols) == list(range(g.n, p.n))
        assert sorted(rows) == [i for i in range(g.m) if g.row_lower[i] != g.row_upper[i]]


@pytest.mark.parametrize("seed", range(12))
def test_standard_form_has_same_optimum(seed):
    g = random_qp(500 + seed, 3, 3)
    p = to_standard_form(g)
    general = enumerate_general(
        np.array(g.Q.to_float_array()),
        floats(g.c),
        np.array(g.A.to_float_array()),
        floats(g.row_lower),
        floats(g.row_upper),
        floats(g.col_lower),
        floats(g.col_upper),
    )
    standard = enumerate_active_sets(
        p.Q.to_float_array(), floats(p.c), p.A.to_float_array(), floats(p.b), floats(p.l), floats(p.u)
    )
    assert (general is None) == (standard is None)
    if general is not None:
        assert standard[0] == pytest.approx(general[0], abs=1e-7)


def test_feasible_points_map_both_ways_with_same_objective():
    rng = random.Random(9)
    for seed in range(20):
        g = random_qp(seed, 4, 3)
        p = to_standard_form(g)
        x = [Fraction(rng.randint(-6, 6), rng.randint(1, 3)) for _ in range(g.n)]
        y = [Fraction(rng.randint(-6, 6)) for _ in range(g.m)]
        xs, ys = lift_solution(p, g, x, y)
        assert objective_exact(p, xs) == general_objective(g, x)
        sol = recover_solution(p, g, xs, ys)
        assert sol.x == tuple(x) and sol.y == tuple(y)


def test_recover_is_identity_without_slacks(tiny):
    g = tiny_rhs_general()
    p = to_standard_form(g)
    x, y = (MICRO, Fraction(0)), (1 + MICRO,)
    sol = recover_solution(p, g, x, y)
    assert sol.x == x and sol.y == y and sol.z == (0, 0)


def test_recover_range_row_dual_is_row_multiplier():
    # min 1/2 (x1^2 + x2^2) - 4 x1 - 4 x2  s.t.  1 <= x1 + x2 <= 3: upper side active
    g = GeneralQP.build(Q=[[1, 0], [0, 1]], c=[-4, -4], A=[[1, 1]], row_lower=[1], row_upper=[3], col_lower=[None, None])
    p = to_standard_form(g)
    out = refine(p, preset("s2"))
    assert out.status.value == "exact"
    sol = recover_solution(p, g, out.iterate.x, out.iterate.y)
    assert sol.x == (Fraction(3, 2), Fraction(3, 2))
    assert sol.y == (Fraction(-5, 2),)
    assert general_kkt_violation(g, sol.x, sol.y) == 0


def test_recover_dimension_mismatch():
    g = tiny_rhs_general()
    with pytest.raises(ValueError):
        recover_solution(to_standard_form(g), g, (0,), (0,))


@pytest.mark.parametrize("seed", range(8))
def test_exact_standard_solution_is_exact_in_general_form(seed):
    g = random_qp(700 + seed, 4, 2)
    p = to_standard_form(g)
    out = refine(p, preset("s2"))
    assert out.status.value == "exact"
    sol = recover_solution(p, g, out.iterate.x, out.iterate.y)
    assert general_kkt_violation(g, sol.x, sol.y) == 0


def test_rounding_leaves_representable_entries_alone():
    tiny = Fraction(1, 2**20)
    p = StandardQP.build(Q=[[1, 0], [0, 1]], A=[[1, 1]], c=[1, 1 + tiny], b=[tiny], l=[0, 0])
    f = round_to_float(p)
    assert f.c.tolist() == [1.0, 1.0 + 2.0**-20]
    assert f.b.tolist() == [2.0**-20]
    assert f.report.ok


def test_rounding_is_nearest_double():
    p = StandardQP.build(Q=[[Fraction(1, 3)]], A=[[1]], c=[Fraction(2, 3)], b=[Fraction(1, 3)], l=[None], u=[None])
    f = round_to_float(p)
    assert f.Q[0, 0] == 1 / 3 and f.c[0] == 2 / 3 and f.b[0] == 1 / 3
    assert f.l[0] == -math.inf and f.u[0] == math.inf


def test_rounding_error_within_half_ulp():
    rng = random.Random(3)
    dense = [[Fraction(rng.randint(-10**6, 10**6), rng.randint(1, 10**6)) for _ in range(6)] for _ in range(6)]
    sym = [[dense[i][j] + dense[j][i] for j in range(6)] for i in range(6)]
    p = StandardQP.build(Q=sym, A=dense[:3], c=dense[4], b=dense[5][:3], l=[None] * 6)
    f = round_to_float(p)
    for i in range(6):
        for j in range(6):
            v = sym[i][j]
            assert abs(Fraction(f.Q[i, j]) - v) <= Fraction(math.ulp(float(v))) / 2


def test_rounding_clamps_and_reports_overflow():
    huge = Fraction(10**400)
    p = StandardQP.build(Q=[[1]], A=[[1]], c=[huge], b=[-huge], l=[None])
    f = round_to_float(p)
    assert f.c[0] == sys.float_info.max and f.b[0] == -sys.float_info.max
    assert not f.report.ok and len(f.report.clamped) == 2


def test_rounding_reuses_matrices_when_asked(tiny):
    base = round_to_float(tiny)
    again = round_to_float(tiny, base)
    assert again.Q is base.Q and again.A is base.A


def test_objective_tiny_rhs():
    p = tiny_rhs_standard()
    assert objective_exact(p, (MICRO, 0)) == Fraction(1, 2) * MICRO**2 + MICRO


def test_objective_at_zero_is_constant():
    p = StandardQP.build(Q=[[2]], A=[[1]], c=[5], b=[0], obj_constant=Fraction(7, 3))
    assert objective_exact(p, (0,)) == Fraction(7, 3)
    with pytest.raises(ValueError):
        objective_exact(p, (0, 0))


def test_objective_matches_high_precision_evaluation():
    rng = random.Random(11)
    for seed in range(10):
        g = random_qp(seed, 5, 2)
        p = to_standard_form(g)
        x = [Fraction(rng.randint(-999, 999), rng.randint(1, 997)) for _ in range(p.n)]
        exact = objective_exact(p, x)
        with mpmath.workdps(50):
            X = [mpmath.mpf(v.numerator) / v.denominator for v in x]
            Qd = p.Q.dense()
            val = sum(X[i] * Qd[i][j] * X[j] for i in range(p.n) for j in range(p.n)) / 2
            val += sum(mpmath.mpf(p.c[i].numerator) / p.c[i].denominator * X[i] for i in range(p.n))
            assert abs(val - mpmath.mpf(exact.numerator) / exact.denominator) < mpmath.mpf(10) ** -40
