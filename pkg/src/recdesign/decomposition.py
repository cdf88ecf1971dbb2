"""Triage effect / response effect decomposition of a policy's expected loss."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .agents import AgentModel
from .core import Decision, LossSpec, Outcome, Recommendation, loss
from .policies import BaselineJoint, Policy, PopulationDistribution, _check_support, evaluate_policy_exact

NONE = Recommendation.NONE


def _expected_loss(spec: LossSpec, y: Outcome, p_hire: float) -> float:
    return (1.0 - p_hire) * loss(spec, y, Decision.NOT_HIRE) + p_hire * loss(spec, y, Decision.HIRE)


def triage_effect(policy: Policy, base: BaselineJoint, spec: LossSpec) -> float:
    """Loss if recommendations were implemented and silence fell back to unassisted decisions."""
    _check_support(policy, base.support)
    recs = dict(policy.items())
    terms = []
    for (x, d0, y), w in base.pmf.items():
        r = recs[x]
        d = d0 if r is NONE else r.decision
        terms.append(w * loss(spec, y, d))
    return math.fsum(terms)


def per_x_triage_effect(policy: Policy, base: BaselineJoint, spec: LossSpec) -> dict:
    recs = dict(policy.items())
    acc: dict = {x: [] for x in policy.support}
    for (x, d0, y), w in base.pmf.items():
        r = recs[x]
        acc[x].append(w * loss(spec, y, d0 if r is NONE else r.decision))
    return {x: math.fsum(v) for x, v in acc.items()}


def _response_terms(policy, pop, model, baseline_model, spec):
    _check_support(policy, pop.support)
    recs = dict(policy.items())
    for (x, u, y), w in pop.pmf.items():
        r = recs[x]
        assisted = _expected_loss(spec, y, model.prob_hire_given(u, r))
        if r is NONE:
            ref = _expected_loss(spec, y, baseline_model.hire_prob(u))
        else:
            ref = loss(spec, y, r.decision)
        yield x, w * (assisted - ref)


def response_effect(
    policy: Policy, pop: PopulationDistribution, model: AgentModel, baseline_model: AgentModel, spec: LossSpec
) -> float:
    return math.fsum(t for _, t in _response_terms(policy, pop, model, baseline_model, spec))


def compliance_response_effect(
    policy: Policy, pop: PopulationDistribution, model: AgentModel, baseline_model: AgentModel, spec: LossSpec
) -> tuple[float, float]:
    """Split the response effect into ignored recommendations and shifted active decisions."""
    _check_support(policy, pop.support)
    recs = dict(policy.items())
    ignore, shift = [], []
    for (x, u, y), w in pop.pmf.items():
        r = recs[x]
        active = _expected_loss(spec, y, model.hire_prob(u))
        if r is NONE:
            shift.append(w * (active - _expected_loss(spec, y, baseline_model.hire_prob(u))))
        else:
            p_ignore = 1.0 - model.comply_prob(u, r)
            ignore.append(w * p_ignore * (active - loss(spec, y, r.decision)))
    return math.fsum(ignore), math.fsum(shift)


def compliance_objective(policy: Policy, pop: PopulationDistribution, model: AgentModel, spec: LossSpec) -> float:
    _check_support(policy, pop.support)
    recs = dict(policy.items())
    terms = []
    for (x, u, y), w in pop.pmf.items():
        r = recs[x]
        active = _expected_loss(spec, y, model.hire_prob(u))
        if r is NONE:
            terms.append(w * active)
        else:
            c = model.comply_prob(u, r)
            terms.append(w * (c * loss(spec, y, r.decision) + (1.0 - c) * active))
    return math.fsum(terms)


@dataclass
class DecompositionReport:
    total: float
    te: float
    re: float
    per_x: list = field(default_factory=list)  # (x, te_x, re_x)

    def to_json(self) -> str:
        d = asdict(self)
        d["per_x"] = [{"x": str(x), "te": te, "re": re} for x, te, re in self.per_x]
        return json.dumps(d, indent=2)


def decompose(
    policy: Policy,
    pop: PopulationDistribution,
    model: AgentModel,
    baseline_model: AgentModel,
    spec: LossSpec,
    base: BaselineJoint | None = None,
) -> DecompositionReport:
    """Full report; ``base`` overrides the model-implied unassisted law inside the triage term."""
    if base is None:
        base = BaselineJoint.from_population(pop, baseline_model)
    te_x = per_x_triage_effect(policy, base, spec)
    re_acc: dict = {x: [] for x in policy.support}
    for x, t in _response_terms(policy, pop, model, baseline_model, spec):
        re_acc[x].append(t)
    re_x = {x: math.fsum(v) for x, v in re_acc.items()}
    return DecompositionReport(
        total=evaluate_policy_exact(policy, pop, model, spec),
        te=math.fsum(te_x.values()),
        re=math.fsum(re_x.values()),
        per_x=[(x, te_x[x], re_x[x]) for x in policy.support],
    )


def pareto_front(entries: Sequence[tuple]) -> list[tuple]:
    """Entries ``(policy, te, re)`` not strictly dominated in (te, re); input order kept."""
    front = []
    for i, (_, te, re) in enumerate(entries):
        dominated = any(
            te2 <= te and re2 <= re and (te2 < te or re2 < re) for j, (_, te2, re2) in enumerate(entries) if j != i
        )
        if not dominated:
            front.append(entries[i])
    return front


def decomposition_csv(entries: Sequence[tuple]) -> str:
    """CSV of (policy_id, te, re, total, on_front) for ``(policy, te, re)`` entries."""
    on_front = {id(e) for e in pareto_front(entries)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy_id", "te", "re", "total", "on_front"])
    for e in entries:
        p, te, re = e
        w.writerow([p.id, repr(te), repr(re), repr(te + re), int(id(e) in on_front)])
    return buf.getvalue()
