"""Potential decisions, response types, and stochastic agent behaviour models.

An agent's response to a recommendation is a triple of potential decisions
(one per recommendation value). Under monotone responses the triple reduces
to an active decision plus a compliance type; the built-in models below are
mixtures over those compact states, parameterised by the private signal only.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, NamedTuple

import numpy as np

from .core import Decision, FinitePmf, LossSpec, Outcome, Recommendation

_N, _H = Decision.NOT_HIRE, Decision.HIRE


class MonotonicityError(ValueError):
    pass


class ResponseType(enum.Enum):
    IGNORE = "Ignore"
    COMPLY = "Comply"
    DEFY = "Defy"
    CHANGE = "Change"


class Compliance(enum.Enum):
    IGNORE = "Ignore"
    COMPLY = "Comply"


class PotentialTriple(NamedTuple):
    d_notrec: Decision
    d_none: Decision
    d_hire: Decision

    @classmethod
    def parse(cls, text: str) -> "PotentialTriple":
        parts = [Decision.parse(c) for c in text.replace(",", "")]
        return cls(*parts)

    def __str__(self):
        return "".join(d.code for d in self)


class CompactResponse(NamedTuple):
    active: Decision
    compliance: Compliance


ALL_TRIPLES = tuple(PotentialTriple(a, b, c) for a in Decision for b in Decision for c in Decision)

_TAXONOMY = {
    (_N, _N, _N): ResponseType.IGNORE,
    (_H, _H, _H): ResponseType.IGNORE,
    (_N, _N, _H): ResponseType.COMPLY,
    (_N, _H, _H): ResponseType.COMPLY,
    (_H, _N, _N): ResponseType.DEFY,
    (_H, _H, _N): ResponseType.DEFY,
    (_H, _N, _H): ResponseType.CHANGE,
    (_N, _H, _N): ResponseType.CHANGE,
}


def classify_response(t: PotentialTriple) -> ResponseType:
    return _TAXONOMY[tuple(t)]


def is_monotone(t: PotentialTriple) -> bool:
    return t.d_notrec <= t.d_none <= t.d_hire


def to_compact(t: PotentialTriple) -> CompactResponse:
    if not is_monotone(t):
        raise MonotonicityError(f"triple {t} violates monotone response ({classify_response(t).value})")
    if t.d_notrec == t.d_hire:
        return CompactResponse(t.d_none, Compliance.IGNORE)
    return CompactResponse(t.d_none, Compliance.COMPLY)


def from_compact(c: CompactResponse) -> PotentialTriple:
    if c.compliance is Compliance.IGNORE:
        return PotentialTriple(c.active, c.active, c.active)
    return PotentialTriple(_N, c.active, _H)


# ---------------------------------------------------------------------------
# behaviour models

ComplianceRule = Callable[[Hashable, Recommendation], float]
ActiveRule = Callable[[Hashable], float]


@dataclass(frozen=True)
class AgentModel:
    """Stochastic monotone agent.

    ``compliance_rule(u, r)`` is the probability of adopting a directional
    recommendation ``r``; ``active_rule(u)`` is the probability of hiring when
    the agent decides alone. Compliance is never consulted for ``r = none``.
    """

    compliance_rule: ComplianceRule
    active_rule: ActiveRule
    description: dict = field(default_factory=dict, compare=False)

    def comply_prob(self, u, r: Recommendation) -> float:
        if r is Recommendation.NONE:
            return 0.0
        return _check_prob(self.compliance_rule(u, r), "compliance")

    def hire_prob(self, u) -> float:
        return _check_prob(self.active_rule(u), "active")

    def prob_hire_given(self, u, r: Recommendation) -> float:
        """Pr(D = Hire | u, r) under the model."""
        a = self.hire_prob(u)
        if r is Recommendation.NONE:
            return a
        c = self.comply_prob(u, r)
        return c * (1.0 if r is Recommendation.HIRE else 0.0) + (1.0 - c) * a


def _check_prob(p: float, what: str) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{what} rule returned {p}, outside [0, 1]")
    return p


def realize_decision(model: AgentModel, u, r: Recommendation, rng: np.random.Generator) -> Decision:
    # one draw for compliance, one for the active decision, in that order on every branch
    v_comply, v_active = rng.random(2)
    return _realize(model, u, r, v_comply, v_active)


def _realize(model: AgentModel, u, r: Recommendation, v_comply: float, v_active: float) -> Decision:
    if r is not Recommendation.NONE and v_comply < model.comply_prob(u, r):
        return r.decision
    return _H if v_active < model.hire_prob(u) else _N


def realize_triple(model: AgentModel, u, rng: np.random.Generator) -> PotentialTriple:
    """Potential decisions for all three recommendations under shared randomness."""
    v_comply, v_active = rng.random(2)
    return PotentialTriple(*(_realize(model, u, r, v_comply, v_active) for r in Recommendation))


def decision_pmf(model: AgentModel, u, r: Recommendation) -> FinitePmf:
    p = model.prob_hire_given(u, r)
    return FinitePmf([(_N, 1.0 - p), (_H, p)])


# ---------------------------------------------------------------------------
# constructors


def perfect_compliance_model(active_rule: ActiveRule, **description) -> AgentModel:
    return AgentModel(lambda u, r: 1.0, active_rule, {"compliance": "perfect", **description})


def selective_compliance_model(
    ignored_u: Iterable[Hashable], active_rule: ActiveRule, support: Iterable[Hashable] | None = None, **description
) -> AgentModel:
    """Never comply for signals in ``ignored_u``; always comply otherwise."""
    ignored = frozenset(ignored_u)
    if support is not None:
        unknown = ignored - set(support)
        if unknown:
            raise ValueError(f"ignored private-signal values not in the population support: {sorted(map(str, unknown))}")
    return AgentModel(
        lambda u, r: 0.0 if u in ignored else 1.0,
        active_rule,
        {"compliance": "selective", "ignored": sorted(map(str, ignored)), **description},
    )


def constant_compliance_model(p: float, active_rule: ActiveRule, **description) -> AgentModel:
    _check_prob(p, "compliance")
    return AgentModel(lambda u, r: p, active_rule, {"compliance": "constant", "p": p, **description})


def random_active(p: float = 0.5) -> ActiveRule:
    _check_prob(p, "active")
    return lambda u: p


def _good_given_u(population) -> dict:
    pmf = population.pmf if hasattr(population, "pmf") else population
    mass: dict = {}
    good: dict = {}
    for (x, u, y), w in pmf.items():
        mass[u] = mass.get(u, 0.0) + w
        if y is Outcome.GOOD:
            good[u] = good.get(u, 0.0) + w
    return {u: good.get(u, 0.0) / m for u, m in mass.items() if m > 0}


def _lookup(table: dict, what: str) -> ActiveRule:
    def rule(u):
        try:
            return table[u]
        except KeyError:
            raise KeyError(f"{what}: private-signal value {u!r} has no mass in the population") from None

    return rule


def sophisticated_active(population, spec: LossSpec = LossSpec()) -> ActiveRule:
    """Hire exactly when the private signal makes hiring the lower expected loss."""
    pg = _good_given_u(population)
    table = {u: 1.0 if g * spec.c_I >= (1.0 - g) * spec.c_II else 0.0 for u, g in pg.items()}
    return _lookup(table, "sophisticated_active")


def probability_matching_active(population) -> ActiveRule:
    return _lookup(_good_given_u(population), "probability_matching_active")


def table_active(table: dict) -> ActiveRule:
    for u, p in table.items():
        _check_prob(p, f"active[{u}]")
    return _lookup(dict(table), "table_active")


def build_model(desc: dict, population=None, spec: LossSpec = LossSpec()) -> AgentModel:
    """Construct a model from its serialisable description.

    ``{"compliance": "perfect" | "selective" | <float>, "ignored": [...],
    "active": "sophisticated" | "matching" | <float> | {u: p}}``
    """
    compliance = desc.get("compliance", "perfect")
    active = desc.get("active", "sophisticated")
    if isinstance(active, (int, float)):
        rule = random_active(float(active))
    elif isinstance(active, dict):
        rule = table_active({k: float(v) for k, v in active.items()})
    elif active in ("sophisticated", "matching", "probability_matching"):
        if population is None:
            raise ValueError(f"active rule {active!r} needs a population")
        rule = sophisticated_active(population, spec) if active == "sophisticated" else probability_matching_active(population)
    elif isinstance(active, str) and active.startswith("random"):
        _, _, p = active.partition(":")
        rule = random_active(float(p) if p else 0.5)
    else:
        raise ValueError(f"unknown active rule {active!r}")
    tag = {"active": active}
    if compliance == "perfect":
        return perfect_compliance_model(rule, **tag)
    if compliance == "selective":
        support = None
        if population is not None:
            support = {u for (_, u, _) in population.pmf}
        return selective_compliance_model(desc.get("ignored", ["Engineering"]), rule, support, **tag)
    if isinstance(compliance, (int, float)):
        return constant_compliance_model(float(compliance), rule, **tag)
    raise ValueError(f"unknown compliance kind {compliance!r}")
