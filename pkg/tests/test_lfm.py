import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from recdesign.agents import perfect_compliance_model, random_active, sophisticated_active
from recdesign.core import Decision, FinitePmf, LossSpec, Outcome, Recommendation
from recdesign.experiment import TABLE6, TREATMENTS, TYPES, default_population, table6_baseline
from recdesign.lfm import (
    ComplianceAssumptions,
    MistakeStats,
    XStats,
    adversary_excess,
    assumption2_bound_check,
    gains,
    grid_slack,
    kappa_thresholds,
    lfm_policy,
    minimax_grid_oracle,
    mistake_stats,
    mistakes_rule,
    sweep,
    worst_case_excess,
)
from recdesign.policies import BaselineJoint, CapExceeded, Policy, PopulationDistribution, enumerate_policies
from tests.strategies import costs, kappas, stats

N, NONE, H = Recommendation
UNIT = LossSpec()


@pytest.fixture(scope="module")
def t6():
    return mistake_stats(table6_baseline())


def _bracket_value(policy, s: MistakeStats, spec, kappa, eps):
    # written out from the bound's closed form, one term per recommended x
    total = 0.0
    for x, r in policy.items():
        z = s[x]
        if r is N:
            total += z.p * (spec.c_I - (spec.c_I + kappa * spec.c_II) * z.m_H) * z.h
        elif r is H:
            total += z.p * (spec.c_II - (kappa * spec.c_I + spec.c_II) * z.m_N) * (1 - z.h)
    return eps / kappa * total


def test_table6_stats_roundtrip(t6):
    for x, (p, h, m_n, m_h) in TABLE6.items():
        s = t6[x]
        assert (s.p, s.h, s.m_N, s.m_H) == pytest.approx((p, h, m_n, m_h), abs=1e-12)


def test_oracle_baseline_has_no_mistakes():
    pmf = FinitePmf([(("x", Decision.HIRE, Outcome.GOOD), 0.6), (("x", Decision.NOT_HIRE, Outcome.BAD), 0.4)])
    s = mistake_stats(BaselineJoint(pmf))["x"]
    assert s.m_N == 0 and s.m_H == 0


def test_undefined_branch():
    pmf = FinitePmf([(("x", Decision.HIRE, Outcome.BAD), 1.0)])
    s = mistake_stats(BaselineJoint(pmf))["x"]
    assert s.h == 1 and s.m_H == 1 and s.m_N is None
    g_n, g_h = gains(s, UNIT, 1.0)
    assert g_h == -math.inf and g_n > 0


@pytest.mark.parametrize(
    "kappa,codes",
    [(1, ["none", "H", "H", "H", "H"]), (2, list("NHHHH")), (6, list("NHHHN"))],
)
def test_lfm_table6(t6, kappa, codes):
    assert lfm_policy(t6, UNIT, kappa) == Policy.from_codes(TYPES, codes)


def test_lfm_recovers_named_arms(t6):
    assert lfm_policy(t6, UNIT, 2) == TREATMENTS["Predictive"]
    assert lfm_policy(t6, UNIT, 6) == TREATMENTS["Complementary"]


def test_type_e_gains(t6):
    assert gains(t6["E"], UNIT, 2) == pytest.approx((0.0536, 0.1947), abs=1e-12)
    assert gains(t6["E"], UNIT, 6) == pytest.approx((1.0184, 0.8943), abs=1e-12)


def test_kappa_thresholds_table6(t6):
    t0 = time.perf_counter()
    got = {x: kappa_thresholds(t6, UNIT, x) for x in TYPES}
    assert time.perf_counter() - t0 < 1.0
    assert got["A"].kappa_N == pytest.approx(0.57 / 0.43)
    assert got["B"].kappa_H == pytest.approx(0.48 / 0.52)
    assert got["C"].kappa_H == pytest.approx(0.42 / 0.58)
    assert got["D"].kappa_H == pytest.approx(0.0, abs=1e-12)
    assert got["D"].kappa_N is None
    assert got["E"].kappa_crossover == pytest.approx(4.128205128, abs=1e-6)


def test_kappa_zero_only_certain_mistakes(t6):
    p = lfm_policy(t6, UNIT, 0.0)
    assert p == Policy.from_codes(TYPES, ["none", "none", "none", "H", "none"])


def test_mistakes_rule_examples(t6):
    assert mistakes_rule(t6, UNIT) == lfm_policy(t6, UNIT, 1.0)
    zero = MistakeStats({"a": XStats(0.5, 0.5, 0.0, 0.0), "b": XStats(0.5, 0.3, 0.0, 0.0)})
    assert mistakes_rule(zero, UNIT).recs == (NONE, NONE)


@given(stats(), costs)
def test_mistakes_rule_is_lfm_at_one(s, spec):
    assert mistakes_rule(s, spec) == lfm_policy(s, spec, 1.0)


def test_worst_case_examples(t6):
    a = ComplianceAssumptions(1.0, 1.0)
    assert worst_case_excess(TREATMENTS["Control"], t6, UNIT, a) == 0.0
    # hand sum: 0.2 * (0.0938 - 0.0128 - 0.056 - 0.32 - 0.0198)
    assert worst_case_excess(TREATMENTS["Predictive"], t6, UNIT, a) == pytest.approx(-0.06296, abs=1e-12)


def test_worst_case_kappa_zero():
    s = MistakeStats({"a": XStats(0.5, 0.4, 1.0, 0.3), "b": XStats(0.5, 0.5, 0.2, 0.2)})
    a = ComplianceAssumptions(0.0, 0.5)
    assert worst_case_excess(Policy(("a", "b"), (H, NONE)), s, UNIT, a) == pytest.approx(-0.5 * 0.5 * 0.6)
    assert worst_case_excess(Policy(("a", "b"), (H, H)), s, UNIT, a) == math.inf


@given(stats(max_k=5), costs, st.floats(0.01, 20), st.floats(0.01, 1))
def test_lfm_minimises_bound_exhaustively(s, spec, kappa, eps):
    a = ComplianceAssumptions(kappa, eps)
    lfm = lfm_policy(s, spec, kappa)
    best = min(_bracket_value(p, s, spec, kappa, eps) for p in enumerate_policies(s.support))
    assert worst_case_excess(lfm, s, spec, a) <= best + 1e-12
    assert worst_case_excess(lfm, s, spec, a) == pytest.approx(_bracket_value(lfm, s, spec, kappa, eps), abs=1e-12)
    assert worst_case_excess(lfm, s, spec, a) <= 1e-15


@given(stats(max_k=4), costs, st.floats(0.01, 20), st.floats(0.01, 1), st.floats(0.01, 1))
def test_bound_argmin_invariant_to_epsilon(s, spec, kappa, e1, e2):
    pols = list(enumerate_policies(s.support))
    v1 = [worst_case_excess(p, s, spec, ComplianceAssumptions(kappa, e1)) for p in pols]
    v2 = [worst_case_excess(p, s, spec, ComplianceAssumptions(kappa, e2)) for p in pols]
    assert np.allclose(np.array(v1) * e2, np.array(v2) * e1, atol=1e-12)


@given(stats(max_k=3), costs, kappas, kappas)
def test_conditions_monotone_in_kappa(s, spec, k1, k2):
    lo, hi = sorted((k1, k2))
    for x in s.support:
        r_lo = lfm_policy(s, spec, lo)[x]
        if r_lo is not NONE:
            assert lfm_policy(s, spec, hi)[x] is not NONE


@given(stats(max_k=3), costs)
def test_sweep_bands_are_constant(s, spec):
    bands = sweep(s, spec, 0.0, 10.0)
    for b in bands:
        for t in np.linspace(0.05, 0.95, 7):
            k = b.start + t * (b.end - b.start)
            assert lfm_policy(s, spec, k)[b.x] is b.rec
    for x in s.support:
        own = [b for b in bands if b.x == x]
        assert own[0].start == 0.0 and own[-1].end == 10.0
        assert all(u.rec is not v.rec for u, v in zip(own, own[1:]))
        # every change point is one of the closed-form thresholds
        th = [k for k in kappa_thresholds(s, spec, x) if k is not None]
        assert all(any(abs(v.start - k) < 1e-12 for k in th) for v in own[1:])


def test_threshold_flips_type_a(t6):
    k = kappa_thresholds(t6, UNIT, "A").kappa_N
    assert lfm_policy(t6, UNIT, k - 1e-6)["A"] is NONE
    assert lfm_policy(t6, UNIT, k + 1e-6)["A"] is N


def test_oracle_single_type_slice():
    base = BaselineJoint.from_rates({"A": (1.0, *TABLE6["A"][1:])})
    res = minimax_grid_oracle(base, UNIT, ComplianceAssumptions(2.0, 0.5), 0.05)
    assert [p.recs for p in res.argmin] == [(N,)]
    # hand computation at q1 = 0.5, q0 = 0.25: 0.67 * (-0.43 * 0.5 + 0.57 * 0.25)
    assert res.value == pytest.approx(0.67 * (-0.43 * 0.5 + 0.57 * 0.25), abs=1e-12)


def _on_grid_assumptions(rng, step=0.05):
    eps = step * int(rng.integers(1, 21))
    q0 = step * int(rng.integers(max(1, math.ceil(eps / step / 10)), 21))
    return ComplianceAssumptions(eps / q0, eps)


def _random_base(rng, k):
    p = rng.dirichlet(np.ones(k))
    return BaselineJoint.from_rates({f"x{i}": (p[i], *rng.uniform(0.02, 0.98, 3)) for i in range(k)})


def test_oracle_contains_lfm_on_two_type_baselines():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        base = _random_base(rng, 2)
        spec = LossSpec(*rng.uniform(0.1, 10, 2))
        a = _on_grid_assumptions(rng)
        res = minimax_grid_oracle(base, spec, a, 0.05)
        assert lfm_policy(mistake_stats(base), spec, a.kappa) in res.argmin


def test_grid_brackets_exact_adversary():
    rng = np.random.default_rng(7)
    for _ in range(40):
        base = _random_base(rng, int(rng.integers(1, 4)))
        spec = LossSpec(*rng.uniform(0.1, 10, 2))
        a = ComplianceAssumptions(float(rng.uniform(0, 10)), float(rng.uniform(0.05, 1)))
        s = mistake_stats(base)
        for step in (0.1, 0.05, 0.02):
            res = minimax_grid_oracle(base, spec, a, step)
            for p, v in res.per_policy:
                exact = adversary_excess(p, s, spec, a)
                assert v <= exact + 1e-12
                assert exact <= v + grid_slack(s, spec, p, step) + 1e-12


@given(stats(max_k=3), costs, st.floats(0.01, 10), st.floats(0.01, 1))
def test_exact_adversary_equals_bound_on_certified_policies(s, spec, kappa, eps):
    assume(kappa >= eps)
    a = ComplianceAssumptions(kappa, eps)
    p = lfm_policy(s, spec, kappa)
    assert adversary_excess(p, s, spec, a) == pytest.approx(worst_case_excess(p, s, spec, a), abs=1e-12)


def test_bound_understates_adversary_for_uncertified_recommendation():
    # recommending N where hires are never mistakes: the adversary makes everyone comply at rate 1/kappa
    s = MistakeStats({"x": XStats(1.0, 0.5, 0.5, 0.0)})
    a = ComplianceAssumptions(2.0, 0.5)
    p = Policy(("x",), (N,))
    assert worst_case_excess(p, s, UNIT, a) == pytest.approx(0.25 * 0.5)
    assert adversary_excess(p, s, UNIT, a) == pytest.approx(0.5 * 0.5)


def test_floor_binds_below_epsilon():
    # with kappa < epsilon the compliance floor alone certifies N, but the thresholds do not
    s = MistakeStats({"x": XStats(1.0, 1.0, None, 0.7)})
    a = ComplianceAssumptions(0.1, 1.0)
    lfm = lfm_policy(s, UNIT, a.kappa)
    assert lfm.recs == (NONE,)
    assert adversary_excess(Policy(("x",), (N,)), s, UNIT, a) == pytest.approx(-0.4)
    assert adversary_excess(lfm, s, UNIT, a) == 0.0


def test_oracle_cap_and_allow_list(t6):
    with pytest.raises(CapExceeded):
        minimax_grid_oracle(table6_baseline(), UNIT, ComplianceAssumptions(1.0), 0.05)
    base = BaselineJoint.from_rates({x: (0.5, *TABLE6[x][1:]) for x in ("A", "D")})
    only = [Policy(("A", "D"), (NONE, NONE))]
    with pytest.warns(UserWarning):
        res = minimax_grid_oracle(base, UNIT, ComplianceAssumptions(2.0), 0.05, allowed=only)
    assert lfm_policy(mistake_stats(base), UNIT, 2.0) in res.argmin


def test_assumption2_check():
    pop = default_population().to_distribution()
    soph = perfect_compliance_model(sophisticated_active(pop))
    rand = perfect_compliance_model(random_active(0.5))
    for p in TREATMENTS.values():
        v = assumption2_bound_check(p, pop, soph, soph, UNIT)
        assert v is None or v == 0.0
    assert assumption2_bound_check(TREATMENTS["Control"], pop, soph, rand, UNIT) <= 0
    assert assumption2_bound_check(TREATMENTS["Predictive"], pop, soph, rand, UNIT) is None
