import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recdesign.agents import AgentModel, decision_pmf, perfect_compliance_model, sophisticated_active
from recdesign.core import Decision, LossSpec, Outcome, Recommendation, loss
from recdesign.decomposition import triage_effect
from recdesign.experiment import TREATMENTS, TYPES, default_population, game_model
from recdesign.policies import (
    BaselineJoint,
    CapExceeded,
    Policy,
    SupportMismatch,
    brute_force_optimal,
    enumerate_policies,
    evaluate_policy_exact,
    optimal_decision_policy,
    optimal_triage_policy,
    triage_costs,
)
from tests.strategies import baselines, costs

N, NONE, H = Recommendation


def _oracle_value(policy, pop, model, spec):
    # independent route: push each atom through the decision pmf
    total = 0.0
    for (x, u, y), w in pop.pmf.items():
        for d, pd in decision_pmf(model, u, policy[x]).items():
            total += w * pd * loss(spec, y, d)
    return total


def test_policy_codecs():
    p = Policy.from_codes(TYPES, "N00HH")
    assert p.id == "N|none|none|H|H"
    assert Policy.from_codes(TYPES, p.id) == p
    assert Policy.from_json(p.to_json()) == p
    assert p["D"] is H
    assert p.with_rec("B", H)["B"] is H
    with pytest.raises(KeyError):
        p["Z"]


def test_enumeration_order_and_cap():
    pols = list(enumerate_policies(("a", "b")))
    assert len(pols) == 9
    assert pols[0].recs == (N, N) and pols[1].recs == (N, NONE)
    with pytest.raises(CapExceeded):
        list(enumerate_policies(range(13)))


def test_support_mismatch():
    pop = default_population().to_distribution()
    model = game_model(default_population(), "perfect", "random")
    with pytest.raises(SupportMismatch):
        evaluate_policy_exact(Policy.from_codes("ABCD", "NNNN"), pop, model, LossSpec())


def test_decision_policy_is_predictive():
    pop = default_population().to_distribution()
    assert optimal_decision_policy(pop, LossSpec()) == TREATMENTS["Predictive"]


def test_game_triage_policy():
    pop = default_population()
    base = BaselineJoint.from_population(pop.to_distribution(), game_model(pop, "perfect", "sophisticated"))
    assert optimal_triage_policy(base, LossSpec()) == TREATMENTS["Triage"]
    # type A: recommending N and staying silent cost the same; the tie goes to N
    c = triage_costs(base, LossSpec())["A"]
    assert c[N] == pytest.approx(c[NONE])


@st.composite
def small_cases(draw):
    k = draw(st.integers(1, 3))
    n_u = draw(st.integers(1, 2))
    atoms = [(f"x{i}", f"u{j}", y) for i in range(k) for j in range(n_u) for y in Outcome]
    raw = draw(st.lists(st.floats(0.01, 1.0), min_size=len(atoms), max_size=len(atoms)))
    from recdesign.core import FinitePmf
    from recdesign.policies import PopulationDistribution

    pop = PopulationDistribution(FinitePmf(zip(atoms, np.array(raw) / sum(raw))))
    comply = {(f"u{j}", r): draw(st.floats(0, 1)) for j in range(n_u) for r in (N, H)}
    active = {f"u{j}": draw(st.floats(0, 1)) for j in range(n_u)}
    model = AgentModel(lambda u, r: comply[(u, r)], lambda u: active[u])
    return pop, model, draw(costs)


@given(small_cases())
def test_exact_evaluation_matches_oracle(case):
    pop, model, spec = case
    for p in enumerate_policies(pop.support):
        assert evaluate_policy_exact(p, pop, model, spec) == pytest.approx(_oracle_value(p, pop, model, spec), abs=1e-12)


@given(small_cases())
def test_brute_force_finds_minimum(case):
    pop, model, spec = case
    argmin, best = brute_force_optimal(pop, model, spec)
    vals = {p: _oracle_value(p, pop, model, spec) for p in enumerate_policies(pop.support)}
    assert best == pytest.approx(min(vals.values()), abs=1e-9)
    assert all(vals[p] <= best + 1e-9 for p in argmin)
    restricted, _ = brute_force_optimal(pop, model, spec, allowed=argmin[:1])
    assert restricted == argmin[:1]


@given(baselines(max_k=4), costs)
def test_triage_policy_minimises_triage_effect(base, spec):
    chosen = optimal_triage_policy(base, spec)
    best = min(triage_effect(p, base, spec) for p in enumerate_policies(base.support))
    assert triage_effect(chosen, base, spec) <= best + 1e-12


@given(baselines(max_k=4), costs)
def test_decision_policy_beats_every_constant_recommendation(base, spec):
    dec = optimal_decision_policy(base, spec)
    # following the decision policy exactly: compare against all no-none policies
    best = min(triage_effect(p, base, spec) for p in enumerate_policies(base.support) if NONE not in p.recs)
    assert triage_effect(dec, base, spec) <= best + 1e-12
