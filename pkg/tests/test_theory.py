import math
from fractions import Fraction

import numpy as np
import pytest

from rapsa.core import Constant, DomainError, InverseTime
from rapsa.engine import EngineConfig, run
from rapsa.problems import closed_form_optimum, estimate_constants, generate_lmmse
from rapsa.theory import (
    BoundConditionError,
    BoundReport,
    RateConstants,
    accuracy_plan,
    check_lemma1,
    check_proposition1,
    check_theorem1,
    check_theorem2,
    constant_C,
    lemma3_bound,
    lemma3_first_violation,
    linear_envelope,
    one_step_displacements,
    plateau,
    sublinear_bound,
)


def unit(**kw):
    base = dict(m=1.0, M=1.0, K=1.0, r=1.0)
    base.update(kw)
    return RateConstants(**base)


# -- closed forms ----------------------------------------------------------------


def test_constant_C_examples():
    assert constant_C(unit(F0err=3.0, gamma0=1.0, T0=1.0)) == 3.0
    assert constant_C(unit(F0err=0.0, gamma0=1.0, T0=1.0)) == 0.5
    with pytest.raises(BoundConditionError, match="must exceed 1"):
        constant_C(unit(gamma0=0.5, T0=1.0))
    with pytest.raises(DomainError):
        constant_C(unit())


def test_sublinear_bound_examples():
    assert sublinear_bound(0, 3.0, 1.0) == 3.0
    assert sublinear_bound(2, 3.0, 1.0) == 1.0
    vals = sublinear_bound(np.arange(100), 3.0, 1.0)
    assert np.all(np.diff(vals) < 0)


def test_linear_envelope_examples():
    rc = RateConstants(m=1.0, M=2.0, K=4.0, r=0.5, F0err=1.0, gamma=0.1)
    assert plateau(rc) == pytest.approx(0.2, rel=1e-15)
    assert linear_envelope(10, rc) == pytest.approx(0.9**10 + 0.2 * (1 - 0.9**10), rel=1e-14)
    # 0.9^10 = 0.348678..., 0.2 * 0.651322... = 0.130264...
    assert linear_envelope(10, rc) == pytest.approx(0.478943, abs=5e-7)
    assert linear_envelope(0, rc) == 1.0
    assert linear_envelope(10_000, rc) == pytest.approx(plateau(rc), rel=1e-12)
    env = linear_envelope(np.arange(200), rc)
    assert np.all(np.diff(env) <= 0) and np.all(env >= plateau(rc))
    with pytest.raises(BoundConditionError):
        linear_envelope(3, RateConstants(m=1.0, M=2.0, K=4.0, r=1.0, gamma=0.5))


def test_accuracy_plan_examples():
    gamma, t = accuracy_plan(0.1, 0.5, unit(F0err=1.0))
    assert gamma == pytest.approx(0.2, rel=1e-15)
    assert 2.5 * math.log(20) == pytest.approx(7.489, abs=1e-3)
    assert t == 8
    assert accuracy_plan(0.1, 0.5, unit(F0err=0.05))[1] == 0
    assert accuracy_plan(0.1, 0.5, unit(F0err=0.04))[1] == 0
    with pytest.raises(DomainError):
        accuracy_plan(0.1, 1.0, unit(F0err=1.0))
    with pytest.raises(BoundConditionError):
        accuracy_plan(1.0, 0.9, unit(F0err=1.0))


def test_accuracy_plan_scaling_and_consistency():
    rc = RateConstants(m=0.5, M=3.0, K=2.0, r=0.25, F0err=10.0)
    ts = [accuracy_plan(eps, 0.5, rc)[1] for eps in (1e-3, 2e-3, 4e-3)]
    assert ts[0] > ts[1] > ts[2]
    assert 1.8 < ts[0] / ts[1] < 2.3
    # plugging the plan back into the envelope reaches eps
    eps, phi = 1e-2, 0.3
    gamma, t = accuracy_plan(eps, phi, rc)
    env_rc = RateConstants(m=rc.m, M=rc.M, K=rc.K, r=rc.r, F0err=rc.F0err, gamma=gamma)
    assert plateau(env_rc) == pytest.approx(phi * eps, rel=1e-12)
    assert linear_envelope(t, env_rc) <= eps * (1 + 1e-9)


# Second transcription of every closed form, written independently with exact rationals
# where possible and a different grouping of terms.


def ref_C(m, M, K, r, g0, T0, F0):
    a = Fraction(r) * Fraction(M) * Fraction(K) * Fraction(g0) ** 2 * Fraction(T0) ** 2
    d = 4 * Fraction(m) * Fraction(r) * Fraction(g0) * Fraction(T0) - 2
    return float(max(a / d, Fraction(T0) * Fraction(F0)))


def ref_envelope(t, m, M, K, r, g, F0):
    q = 1 - 2 * m * g * r
    lim = g * M * K / (4 * m)
    return lim + (F0 - lim) * q**t


def ref_plan(eps, phi, m, M, K, r, F0):
    g = 4 * m * phi * eps / (M * K)
    arg = F0 / ((1 - phi) * eps)
    n = 0 if arg <= 1 else math.ceil(math.log(arg) / (2 * m * g * r) / 1)
    return g, n


def test_second_transcription_agrees():
    rng = np.random.default_rng(0)
    for _ in range(500):
        m = rng.uniform(0.05, 2)
        M = m * rng.uniform(1, 20)
        K = rng.uniform(0.01, 10)
        r = rng.uniform(0.01, 1)
        F0 = rng.uniform(0, 50)
        g0 = rng.uniform(0.6, 5) / (m * r)
        T0 = rng.uniform(1, 100)
        g0 /= T0
        rc = RateConstants(m=m, M=M, K=K, r=r, F0err=F0, gamma0=g0, T0=T0)
        ref = ref_C(m, M, K, r, g0, T0, F0)
        assert abs(constant_C(rc) - ref) <= 1e-12 * max(1.0, abs(ref))
        g = rng.uniform(0.01, 0.49) / (m * r)
        rc2 = RateConstants(m=m, M=M, K=K, r=r, F0err=F0, gamma=g)
        for t in (0, 1, 7, 100, 1000):
            ref = ref_envelope(t, m, M, K, r, g, F0)
            assert abs(linear_envelope(t, rc2) - ref) <= 1e-12 * max(1.0, abs(ref))
        eps = rng.uniform(1e-3, 1)
        phi = rng.uniform(0.05, 0.95)
        try:
            got = accuracy_plan(eps, phi, rc)
        except BoundConditionError:
            continue
        # MK/(8 m^2 r phi eps) equals 1/(2 m gamma r)
        rg, rn = ref_plan(eps, phi, m, M, K, r, F0)
        assert abs(got[0] - rg) <= 1e-12 * rg
        assert abs(got[1] - rn) <= 1


# -- lemma on the scalar recursion ------------------------------------------------


def test_lemma3_hand_cases():
    # u1 = (1 - 2) * 0 + 1 = 1 while Q/(1+1) = 1/2
    assert lemma3_first_violation(2.0, 1.0, 1.0, 0.0, 10) == 1
    assert not lemma3_bound(2.0, 1.0, 1.0, 0.0, 10_000)
    assert lemma3_bound(2.0, 0.0, 3.0, 0.0, 10_000)
    with pytest.raises(DomainError):
        lemma3_bound(1.0, 1.0, 1.0, 0.0, 10)
    with pytest.raises(DomainError):
        lemma3_bound(2.0, 1.0, 0.0, 0.0, 10)


def reference_recursion(c, b, t0, u0, T):
    u = [u0]
    for t in range(T):
        k = t + t0
        u.append((1 - c / k) * u[-1] + b / k**2)
    Q = max(b / (c - 1), t0 * u0)
    return np.array(u), Q


def test_lemma3_matches_reference_recursion():
    u, Q = reference_recursion(2.0, 1.0, 1.0, 5.0, 200)
    bad = np.nonzero(u > Q / (np.arange(201) + 1.0) * (1 + 1e-12))[0]
    expected = None if len(bad) == 0 else int(bad[0])
    assert lemma3_first_violation(2.0, 1.0, 1.0, 5.0, 200) == expected


@pytest.mark.parametrize("c,b,u0", [(1.5, 2.0, 0.0), (2.0, 1.0, 5.0), (4.0, 10.0, 1.0), (3.0, 0.5, 10.0)])
def test_lemma3_holds_when_t0_at_least_c(c, b, u0):
    # with t0 >= c every factor 1 - c/(t+t0) is nonnegative and the induction goes through
    for t0 in (c, c + 1, 10.0, 100.0):
        assert lemma3_bound(c, b, t0, u0, 10_000)


# -- one-step Monte Carlo checks --------------------------------------------------


@pytest.fixture(scope="module")
def quad():
    prob = generate_lmmse(8, 20, 1, 0.1, seed=5)
    xs, Fs = closed_form_optimum(prob)
    m, M = estimate_constants(prob)
    return prob, xs, Fs, m, M


def test_prop1_zero_step_is_exact(quad):
    prob, xs, Fs, m, M = quad
    x = xs + 1.0
    rc = RateConstants(m=m, M=M, K=1.0, r=0.5)
    rep = check_proposition1(prob, rc, x, 0.0, 2, 4, 1, Fs, draws=500)
    assert rep.lhs_mean == rep.rhs == rep.gap0
    assert rep.holds()


def test_prop1_at_optimum_full_information(quad):
    prob, xs, Fs, m, M = quad
    rc = RateConstants(m=m, M=M, K=0.0, r=1.0)
    rep = check_proposition1(prob, rc, xs, 0.5 / M, 4, 4, 20, Fs, draws=100)
    assert abs(rep.lhs_mean) < 1e-12
    assert rep.holds()


def test_prop1_random_point_holds(quad):
    from rapsa.problems import estimate_K

    prob, xs, Fs, m, M = quad
    x = xs + np.random.default_rng(1).standard_normal(8)
    K = estimate_K(prob, [x]).K
    rc = RateConstants(m=m, M=M, K=K, r=0.5)
    rep = check_proposition1(prob, rc, x, 0.3 / M, 2, 4, 1, Fs, draws=20_000, seed=3)
    assert rep.holds() and rep.margin > 0


def test_displacements_full_information_is_gradient_step(quad):
    prob, xs, Fs, m, M = quad
    x = np.ones(8)
    (disp,) = list(one_step_displacements(prob, x, 0.1, 4, 4, 20, 3))
    np.testing.assert_allclose(disp, np.broadcast_to(-0.1 * prob.gradient(x), (3, 8)), atol=1e-13)


def test_lemma1_small(quad):
    prob, xs, Fs, m, M = quad
    x = np.linspace(-1, 1, 8)
    batches = [np.array([k]) for k in (3, 11, 0, 19)]
    rep = check_lemma1(prob, x, 0.05, 2, 4, batches, draws=4000, seed=1)
    assert rep.holds()
    # with I = B the step is deterministic and equals the expectation exactly
    full = check_lemma1(prob, x, 0.05, 4, 4, batches, draws=50)
    np.testing.assert_allclose(full.mean_step, full.expected_step, atol=1e-15)
    assert full.mean_sq == pytest.approx(full.expected_sq, rel=1e-12)


# -- ensemble reports -------------------------------------------------------------


def test_theorem_reports_structure(quad):
    prob, xs, Fs, m, M = quad
    x0 = np.zeros(8)
    F0err = prob.objective(x0) - Fs
    traces = [run(EngineConfig(I=2, B=4, L=1, schedule=Constant(0.02), T=50, seed=s, eval_every=10), prob, x0)
              for s in range(5)]
    rc = RateConstants(m=m, M=M, K=1.0, r=0.5, F0err=F0err, gamma=0.02)
    rep = check_theorem2(traces, rc, Fs)
    assert rep.observed[0] == pytest.approx(F0err, rel=1e-15)
    assert rep.bound[0] == pytest.approx(F0err, rel=1e-15)
    assert list(rep.t) == [0, 10, 20, 30, 40, 50]
    assert rep.extra["plateau"] == plateau(rc)
    rows = list(rep.rows())
    assert rows[0]["margin"] == pytest.approx(0.0, abs=1e-12)
    g0, T0 = 0.02, 1.0 / (m * 0.5 * 0.02)
    tr1 = [run(EngineConfig(I=2, B=4, L=1, schedule=InverseTime(g0, T0), T=50, seed=s, eval_every=10), prob, x0)
           for s in range(3)]
    rc1 = RateConstants(m=m, M=M, K=1.0, r=0.5, F0err=F0err, gamma0=g0, T0=T0)
    rep1 = check_theorem1(tr1, rc1, Fs)
    assert rep1.extra["C"] == constant_C(rc1)
    np.testing.assert_allclose(rep1.bound, rep1.extra["C"] / (rep1.t + T0))


def test_bound_report_ratio():
    rep = BoundReport(np.arange(3), np.array([1.0, 0.5, 0.0]), np.array([2.0, 0.25, 0.0]))
    assert rep.max_ratio == 2.0
    np.testing.assert_array_equal(rep.margin, [1.0, -0.25, 0.0])
    assert BoundReport(np.arange(1), np.array([1.0]), np.array([0.0])).max_ratio == math.inf
