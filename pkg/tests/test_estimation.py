import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from recdesign.core import Decision, LossSpec, Outcome, Recommendation
from recdesign.estimation import (
    ClassKind,
    DecisionLog,
    LogFormatError,
    LogRecord,
    PolicyClass,
    cost_weighted_erm,
    fit_mistake_stats,
    plugin_policy,
    sample_log,
)
from recdesign.experiment import TABLE6, TREATMENTS, TYPES, table6_baseline
from recdesign.lfm import MistakeStats, XStats, lfm_policy, mistake_stats
from recdesign.policies import Policy, enumerate_policies
from tests.strategies import baselines, costs, kappas, stats

N, NONE, H = Recommendation
G, B = Outcome.GOOD, Outcome.BAD
HIRE, PASS = Decision.HIRE, Decision.NOT_HIRE
UNIT = LossSpec()


def _rec(x, y, d, sid="s"):
    return LogRecord(sid, x, None, y, d)


def table6_log(per_x=10_000):
    # integer counts reproducing each column exactly
    recs = []
    for x, (_, h, m_n, m_h) in TABLE6.items():
        n_h = round(per_x * h)
        bad_h = round(n_h * m_h)
        n_n = per_x - n_h
        good_n = round(n_n * m_n)
        recs += [_rec(x, B, HIRE)] * bad_h + [_rec(x, G, HIRE)] * (n_h - bad_h)
        recs += [_rec(x, G, PASS)] * good_n + [_rec(x, B, PASS)] * (n_n - good_n)
    return DecisionLog(recs, TYPES)


def test_fit_reproduces_table6():
    s = fit_mistake_stats(table6_log(), 0.0)
    for x, (p, h, m_n, m_h) in TABLE6.items():
        assert (s[x].p, s[x].h, s[x].m_N, s[x].m_H) == pytest.approx((p, h, m_n, m_h), abs=1e-12)


def test_fit_small_logs():
    s = fit_mistake_stats(DecisionLog([_rec("x", G, HIRE)]), 0.0)["x"]
    assert (s.h, s.m_H, s.m_N) == (1.0, 0.0, None)
    s = fit_mistake_stats(DecisionLog([_rec("x", G, PASS), _rec("x", B, PASS)]), 0.0)["x"]
    assert s.m_N == 0.5
    with pytest.raises(ValueError):
        fit_mistake_stats(DecisionLog([]))
    with pytest.raises(ValueError):
        DecisionLog([_rec("z", G, HIRE)], ("x",))


@given(baselines(max_k=3), st.floats(0.01, 5), st.integers(0, 2**32))
def test_smoothing_keeps_stats_interior(base, s, seed):
    log = sample_log(base, 50, np.random.default_rng(seed))
    fitted = fit_mistake_stats(log, s)
    for x in fitted.support:
        z = fitted[x]
        if z.p > 0:
            assert all(0 < v < 1 for v in (z.h, z.m_N, z.m_H))


def test_fit_converges():
    base = table6_baseline()
    truth = mistake_stats(base)
    for seed in range(5):
        s = fit_mistake_stats(sample_log(base, 100_000, np.random.default_rng(seed)), 0.0)
        for x in TYPES:
            for f in ("h", "m_N", "m_H"):
                assert abs(getattr(s[x], f) - getattr(truth[x], f)) < 0.02


@given(stats(max_k=6), costs, kappas)
def test_plugin_equals_lfm(s, spec, kappa):
    assert plugin_policy(s, spec, kappa) == lfm_policy(s, spec, kappa)


def test_plugin_examples():
    s = mistake_stats(table6_baseline())
    assert plugin_policy(s, UNIT, 6.0) == TREATMENTS["Complementary"]
    zero = MistakeStats({"a": XStats(1.0, 0.5, 0.0, 0.0)})
    assert plugin_policy(zero, UNIT, 3.0).recs == (NONE,)


def test_erm_explicit_list_on_table6_log():
    cls = PolicyClass.explicit([TREATMENTS["Control"], TREATMENTS["Predictive"]])
    argmin, value = cost_weighted_erm(table6_log(), cls, UNIT, 1.0)
    assert argmin == [TREATMENTS["Predictive"]]
    # same five per-type terms as the analytic bound at kappa = epsilon = 1
    assert value == pytest.approx(-0.06296, abs=1e-12)


def test_erm_without_mistakes():
    log = DecisionLog([_rec("x", G, HIRE), _rec("x", B, PASS)])
    argmin, value = cost_weighted_erm(log, PolicyClass(), UNIT, 2.0)
    assert Policy(("x",), (NONE,)) in argmin
    assert value == 0.0


def test_empty_class_rejected():
    with pytest.raises(ValueError):
        PolicyClass(ClassKind.EXPLICIT_LIST, ())


def test_erm_oracle_by_record_sum():
    # independent route: average the per-record objective for every map
    rng = np.random.default_rng(3)
    base = table6_baseline()
    log = sample_log(base, 300, rng)
    spec = LossSpec(1.5, 0.7)
    kappa = 2.5

    def objective(p):
        tot = 0.0
        for r in log.records:
            f = p[r.x]
            m1 = r.y is G and r.d0 is PASS
            m2 = r.y is B and r.d0 is HIRE
            if f is H:
                tot += spec.c_II * (r.d0 is PASS) - (kappa * spec.c_I + spec.c_II) * m1
            elif f is N:
                tot += spec.c_I * (r.d0 is HIRE) - (spec.c_I + kappa * spec.c_II) * m2
        return tot / len(log.records)

    vals = {p: objective(p) for p in enumerate_policies(log.support)}
    best = min(vals.values())
    argmin, value = cost_weighted_erm(log, PolicyClass(), spec, kappa)
    assert value == pytest.approx(best, abs=1e-12)
    assert set(argmin) == {p for p, v in vals.items() if v <= best + 1e-9}


def test_log_csv_roundtrip_and_errors():
    log = table6_log(100)
    again = DecisionLog.from_csv(log.to_csv())
    assert again.records == log.records
    with pytest.raises(LogFormatError, match="line 3"):
        DecisionLog.from_csv("subject_id,x,u,y,d0\n1,A,,G,H\n2,A,,Q,H\n")
    with pytest.raises(LogFormatError, match="missing columns"):
        DecisionLog.from_csv("subject_id,x,y\n1,A,G\n")
    with pytest.raises(LogFormatError, match="outside declared support"):
        DecisionLog.from_csv("subject_id,x,u,y,d0\n1,Z,,G,H\n", support=TYPES)
