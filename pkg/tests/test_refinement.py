import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import MICRO, tiny_rhs_standard
from mocks import FlakyOracle, PerturbedOracle, ScriptedOracle, canned
from oracles import enumerate_active_sets, exact_kkt_pattern_solve, mp_residuals
from qprefine import StandardQP, to_standard_form
from qprefine.generate import random_qp
from qprefine.model import INF
from qprefine.oracle import Basis, OracleResult, OracleStatus, VarStatus
from qprefine.refinement import (
    PRESETS,
    Iterate,
    RefineParams,
    Status,
    apply_correction,
    build_refined_qp,
    choose_scaling,
    compute_iteration_bound,
    compute_residuals,
    preset,
    rational_basis_solve,
    refine,
    verify_kkt_exact,
)

L, U, B = VarStatus.AT_LOWER, VarStatus.AT_UPPER, VarStatus.BASIC
ALPHA = Fraction(10**12)


# --- residuals and scaling -------------------------------------------------------


def test_residuals_tiny_rhs_after_first_solve(tiny):
    r = compute_residuals(tiny, Iterate.of([0, 0], [1]))
    assert r.b_hat == (MICRO,)
    assert r.c_hat == (0, MICRO)
    assert (r.delta_p, r.delta_d, r.delta_s) == (MICRO, 0, 0)


def test_residuals_at_optimum_are_zero(tiny):
    r, ok = verify_kkt_exact(tiny, Iterate.of([MICRO, 0], [1 + MICRO]))
    assert ok and r.is_zero and r.worst == 0


def test_dual_violation_depends_on_position():
    p = StandardQP.build(Q=[[0, 0, 0], [0, 0, 0], [0, 0, 0]], A=[], c=[-2, 3, -5], b=[], l=[0, 0, 1], u=[4, 4, 1])
    # x1 at lower with negative reduced cost, x2 strictly inside, x3 fixed
    r = compute_residuals(p, Iterate.of([0, 1, 1], []))
    assert r.delta_d == 3
    r = compute_residuals(p, Iterate.of([0, 0, 1], []))
    assert r.delta_d == 2
    r = compute_residuals(p, Iterate.of([4, 0, 1], []))
    assert r.delta_d == 0


def test_complementarity_violation():
    p = StandardQP.build(Q=[[0]], A=[], c=[3], b=[], l=[0], u=[10])
    r = compute_residuals(p, Iterate.of([2], []))
    assert r.delta_s == 6
    p = StandardQP.build(Q=[[0]], A=[], c=[-3], b=[], l=[0], u=[10])
    assert compute_residuals(p, Iterate.of([8], [])).delta_s == 6


def test_residual_dimension_check(tiny):
    with pytest.raises(ValueError):
        compute_residuals(tiny, Iterate.of([0], [1]))


def test_scaling_choice(tiny):
    r = compute_residuals(tiny, Iterate.of([0, 0], [1]))
    assert choose_scaling(r, 1, ALPHA) == 10**6
    tiny = compute_residuals(tiny, Iterate.of([0, 0], [1]))
    tiny = type(tiny)(**{**tiny.__dict__, "delta_p": Fraction(1, 10**30)})
    assert choose_scaling(tiny, 1, ALPHA) == ALPHA
    assert choose_scaling(tiny, 10**6, ALPHA) == 10**18
    with pytest.raises(ValueError):
        choose_scaling(r, 1, 1)


def test_refined_problem_tiny_rhs(tiny):
    it = Iterate.of([0, 0], [1])
    q = build_refined_qp(tiny, it, Fraction(10**6))
    assert q.c == (0, 1) and q.b == (1,)
    assert q.l == (0, 0) and q.u == (INF, INF)
    assert q.Q is tiny.Q and q.A is tiny.A
    with pytest.raises(ValueError):
        build_refined_qp(tiny, it, Fraction(0))


def test_correction_snaps_nonbasic_dust(tiny):
    res = OracleResult(OracleStatus.OPTIMAL, np.array([1.0, 1e-17]), np.array([1.0]), Basis((B, L)), 1)
    it = apply_correction(Iterate.of([0, 0], [1]), res, Fraction(10**6), tiny)
    assert it.x == (MICRO, 0)
    assert it.y == (1 + MICRO,)


# --- exact basis solve ------------------------------------------------------------


def test_basis_solve_tiny_rhs(tiny):
    out = rational_basis_solve(tiny, Basis((B, L)))
    assert out.ok
    assert out.iterate.x == (MICRO, 0) and out.iterate.y == (1 + MICRO,)


def test_basis_solve_unconstrained():
    p = StandardQP.build(Q=[[1]], A=[], c=[-1], b=[], l=[None])
    out = rational_basis_solve(p, Basis((B,)))
    assert out.ok and out.iterate.x == (1,)


def test_basis_solve_wrong_basis_is_not_optimal():
    p = StandardQP.build(Q=[[1]], A=[], c=[-1], b=[], l=[0])
    out = rational_basis_solve(p, Basis((L,)))
    assert out.status == "not_optimal"
    assert out.residuals.delta_d == 1


def test_basis_solve_singular():
    p = StandardQP.build(Q=[[0, 0], [0, 0]], A=[[1, 1]], c=[1, 1], b=[1], l=[0, 0])
    assert rational_basis_solve(p, Basis((B, B))).status == "singular"


def test_basis_solve_rejects_status_on_infinite_bound():
    p = StandardQP.build(Q=[[1]], A=[], c=[-1], b=[], l=[None])
    with pytest.raises(ValueError):
        rational_basis_solve(p, Basis((L,)))


def test_basis_solve_matches_exact_brute_force():
    compared = 0
    for seed in range(40):
        rng = random.Random(seed)
        n, m = rng.randint(2, 5), rng.randint(0, 2)
        p = to_standard_form(random_qp(3000 + seed, n, m))
        Qd, Ad = p.Q.dense(), p.A.dense()
        best = enumerate_active_sets(
            np.array(p.Q.to_float_array()), [float(v) for v in p.c], np.array(p.A.to_float_array()),
            [float(v) for v in p.b], [float(v) for v in p.l], [float(v) for v in p.u],
        )
        if best is None:
            continue
        ref = exact_kkt_pattern_solve(Qd, p.c, Ad, p.b, p.l, p.u, best[2])
        if ref is None:
            continue
        # a fixed variable is nonbasic whatever pattern the enumeration picked for it
        status = [L if p.l[i] == p.u[i] or s == "L" else U if s == "U" else B for i, s in enumerate(best[2])]
        out = rational_basis_solve(p, Basis(status))
        assert out.ok
        assert out.iterate.x == tuple(ref[0])
        compared += 1
    assert compared >= 20


# --- scaling equivalences -----------------------------------------------------------


def small_rationals(rng, k, bound=20):
    return [Fraction(rng.randint(-bound, bound), rng.randint(1, 9)) for _ in range(k)]


@settings(max_examples=60)
@given(st.integers(0, 10**6), st.integers(-40, 40), st.integers(1, 7))
def test_scaling_equivalences(seed, exponent, den):
    rng = random.Random(seed)
    n, m = rng.randint(1, 8), rng.randint(0, 4)
    p = to_standard_form(random_qp(seed, n, m))
    it = Iterate(tuple(small_rationals(rng, p.n)), tuple(small_rationals(rng, p.m)))
    delta = Fraction(2) ** exponent / den
    refined = build_refined_qp(p, it, delta)
    bar = Iterate(tuple(small_rationals(rng, p.n)), tuple(small_rationals(rng, p.m)))
    new = Iterate(tuple(a + b / delta for a, b in zip(it.x, bar.x)), tuple(a + b / delta for a, b in zip(it.y, bar.y)))
    r_ref = compute_residuals(refined, bar)
    r_new = compute_residuals(p, new)
    assert r_ref.delta_p == delta * r_new.delta_p
    assert r_ref.delta_d == delta * r_new.delta_d
    assert r_ref.delta_s == delta**2 * r_new.delta_s
    assert r_ref.c_hat == tuple(delta * v for v in r_new.c_hat)
    assert r_ref.b_hat == tuple(delta * v for v in r_new.b_hat)


# --- iteration bound, presets ---------------------------------------------------------


@pytest.mark.parametrize(
    "eps_tilde, eps, expected",
    [
        (Fraction(1, 10**12), Fraction(1, 10**100), 9),
        (Fraction(1, 10**12), Fraction(1, 10**10), 1),
        (Fraction(1, 10**10), Fraction(1, 10**100), 10),
        (Fraction(1, 10**3), Fraction(1, 10**30), 10),
    ],
)
def test_iteration_bound(eps_tilde, eps, expected):
    assert compute_iteration_bound(eps_tilde, eps, eps) == expected


def test_iteration_bound_with_complementarity_term():
    k = compute_iteration_bound(Fraction(1, 10), Fraction(1, 10), Fraction(1, 10), Fraction(1, 10**10), 1)
    assert k == 6
    with pytest.raises(ValueError):
        compute_iteration_bound(2, Fraction(1, 10), Fraction(1, 10))


def test_presets():
    big = Fraction(1, 10**100)
    table = {
        "s1": (big, 300, 10, 2, "3.2", False, True),
        "s2": (big, 50, 10, 0, "3.2", False, True),
        "s3": (big, 50, 10, 0, "4.0", True, False),
        "s4": (big, 50, 10, 51, "4.0", True, False),
        "s5": (Fraction(1, 10**10), 10, 1, 30, "3.2", False, True),
    }
    assert set(PRESETS) == set(table)
    for name, (eps, k_max, l_max, stalls, version, sparse, resolves) in table.items():
        p = preset(name)
        assert p.eps_p == p.eps_d == eps and p.eps_s == eps * eps
        assert (p.k_max, p.l_max, p.ratfac_minstalls) == (k_max, l_max, stalls)
        assert p.alpha == ALPHA
        assert (p.source_solver_version, p.sparse) == (version, sparse)
        assert (p.oracle_fast is not None) == resolves
    with pytest.raises(ValueError):
        preset("s9")
    with pytest.raises(ValueError):
        RefineParams(alpha=1)


# --- the driver ---------------------------------------------------------------------------


def no_ratfac(**kw):
    return RefineParams(ratfac_minstalls=None, **kw)


# complementarity left out of termination, as in the iteration bound with sigma = 0
LOOSE_SLACK = Fraction(1)


def first_answer_then(inner=None):
    return ScriptedOracle([canned([0, 0], [1], [B, L])], inner)


def test_tiny_rhs_one_refinement(tiny):
    oracle = ScriptedOracle([canned([0, 0], [1], [B, L])])
    out = refine(tiny, no_ratfac(), oracle)
    assert out.status == Status.EXACT
    assert out.iterate.x == (MICRO, 0) and out.iterate.y == (1 + MICRO,)
    assert out.refinements == 1
    assert out.log[0].delta == 10**6


def test_tiny_rhs_real_oracle_reaches_exact(tiny):
    out = refine(tiny, preset("s1"))
    assert out.status == Status.EXACT
    assert out.iterate.x == (MICRO, 0) and out.iterate.y == (1 + MICRO,)


def test_immediate_basis_solve(tiny):
    out = refine(tiny, preset("s2"))
    assert out.status == Status.EXACT and out.refinements == 0


def test_tolerance_mode(tiny):
    out = refine(tiny, preset("s5"))
    assert out.status in (Status.TOLERANCE_REACHED, Status.EXACT)
    assert max(out.residuals.delta_p, out.residuals.delta_d) <= Fraction(1, 10**10)


def test_perturbed_oracle_contracts_by_its_error(tiny):
    out = refine(tiny, no_ratfac(oracle_fast=None, eps_s=LOOSE_SLACK), PerturbedOracle(1e-12))
    assert out.status == Status.TOLERANCE_REACHED
    assert out.iterations == compute_iteration_bound(Fraction(1, 10**12), Fraction(1, 10**100), Fraction(1, 10**100))
    assert out.refinements == out.iterations - 1


def test_refinement_limit(tiny):
    out = refine(tiny, no_ratfac(k_max=2, oracle_fast=None), PerturbedOracle(1e-12))
    assert out.status == Status.REFINEMENT_LIMIT and out.refinements == 2


def test_scaling_growth_is_capped():
    p = tiny_rhs_standard()
    out = refine(p, no_ratfac(oracle_fast=None, eps_s=LOOSE_SLACK), PerturbedOracle(1e-12))
    deltas = [Fraction(1)] + [row.delta for row in out.log if row.delta is not None]
    for a, b in zip(deltas, deltas[1:]):
        assert b <= ALPHA * a


def test_backstepping_recovers(tiny):
    oracle = first_answer_then(FlakyOracle(failing={0, 1}))
    out = refine(tiny, no_ratfac(oracle_fast=None), oracle)
    assert out.backsteps == 2
    assert out.log[0].delta == 10**2
    assert out.status == Status.EXACT


def test_backstepping_never_goes_below_previous_scale(tiny):
    out = refine(tiny, no_ratfac(oracle_fast=None), first_answer_then(FlakyOracle(fail_from=0)))
    assert out.status == Status.ORACLE_FAILURE
    # 1e6 -> 1e4 -> 1e2 -> 1; one more step would drop below the previous factor 1
    assert out.backsteps == 3
    out = refine(tiny, no_ratfac(oracle_fast=None, l_max=1), first_answer_then(FlakyOracle(fail_from=0)))
    assert out.status == Status.ORACLE_FAILURE and out.backsteps == 1


def test_initial_failure(tiny):
    out = refine(tiny, no_ratfac(), FlakyOracle(fail_from=0))
    assert out.status == Status.ORACLE_FAILURE
    assert out.initial_oracle_status == "numerical_failure"
    assert out.iterate.x == (0, 0)


def test_resolve_with_reliable_settings(tiny):
    out = refine(tiny, no_ratfac(), FlakyOracle(fail_fast_mode=True))
    assert out.status == Status.EXACT
    assert out.resolves == out.refinements + 1


def test_exact_status_always_verifies():
    for seed in range(15):
        p = to_standard_form(random_qp(4000 + seed, 6, 3))
        out = refine(p, preset("s2"))
        if out.status == Status.EXACT:
            _, ok = verify_kkt_exact(p, out.iterate)
            assert ok
            dp, z = mp_residuals(p.Q.dense(), p.c, p.A.dense(), p.b, p.l, p.u, out.iterate.x, out.iterate.y)
            assert dp < 1e-50


def test_complementarity_shrinks_with_scale():
    for seed in range(10):
        p = to_standard_form(random_qp(5000 + seed, 6, 2))
        out = refine(p, no_ratfac(oracle_fast=None, eps_p=Fraction(1, 10**40), eps_d=Fraction(1, 10**40)))
        if out.status != Status.TOLERANCE_REACHED:
            continue
        last = [row for row in out.log if row.delta is not None]
        if last:
            assert out.residuals.delta_s <= out.measured_sigma / last[-1].delta ** 2


def test_log_is_consistent(tiny):
    out = refine(tiny, no_ratfac(oracle_fast=None, eps_s=LOOSE_SLACK), PerturbedOracle(1e-12))
    assert len(out.log) == out.iterations
    assert all(row.delta is not None for row in out.log[:-1]) and out.log[-1].delta is None
    assert out.oracle_iterations >= 0 and 0 <= out.rational_time_fraction <= 1
