"""Recommendation policies over a finite characteristic support.

Exact evaluation sums over population atoms; brute force enumerates every
map from the support to {N, none, H}.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .agents import AgentModel
from .core import Decision, FinitePmf, LossSpec, Outcome, Recommendation, loss

N, NONE, H = Recommendation.NOT_HIRE, Recommendation.NONE, Recommendation.HIRE
DEFAULT_CAP = 12
ARGMIN_TOL = 1e-9
TIE_TOL = 1e-12


class SupportMismatch(ValueError):
    pass


class CapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class Policy:
    support: tuple
    recs: tuple

    def __post_init__(self):
        if len(self.support) != len(self.recs):
            raise ValueError("support and recommendations differ in length")
        if len(set(self.support)) != len(self.support):
            raise ValueError("duplicate characteristic values in policy support")
        object.__setattr__(self, "recs", tuple(Recommendation(r) for r in self.recs))

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "Policy":
        return cls(tuple(mapping), tuple(mapping.values()))

    @classmethod
    def constant(cls, support: Sequence, r: Recommendation) -> "Policy":
        return cls(tuple(support), (r,) * len(support))

    @classmethod
    def from_codes(cls, support: Sequence, codes: str | Sequence[str]) -> "Policy":
        """``Policy.from_codes("ABC", "N0H")`` or with an explicit list of tokens."""
        if isinstance(codes, str) and len(codes) == len(support):
            codes = list(codes)
        elif isinstance(codes, str):
            codes = codes.split("|")
        return cls(tuple(support), tuple(Recommendation.parse(c) for c in codes))

    def __getitem__(self, x) -> Recommendation:
        try:
            return self.recs[self.support.index(x)]
        except ValueError:
            raise KeyError(x) from None

    def items(self):
        return zip(self.support, self.recs)

    def as_dict(self) -> dict:
        return {str(x): r.code for x, r in self.items()}

    def to_json(self) -> str:
        return json.dumps(self.as_dict())

    @classmethod
    def from_json(cls, obj: str | Mapping) -> "Policy":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(tuple(obj), tuple(Recommendation.parse(v) for v in obj.values()))

    @property
    def id(self) -> str:
        return "|".join(r.code for r in self.recs)

    def with_rec(self, x, r: Recommendation) -> "Policy":
        i = self.support.index(x)
        return Policy(self.support, self.recs[:i] + (r,) + self.recs[i + 1 :])

    def __str__(self):
        return ", ".join(f"{x}:{r.code}" for x, r in self.items())


def _ordered_support(atoms: Iterable[tuple]) -> tuple:
    seen: dict = {}
    for a in atoms:
        seen.setdefault(a[0], None)
    return tuple(seen)


def _check_positive_marginals(pmf: FinitePmf, what: str) -> tuple:
    support = _ordered_support(pmf.atoms)
    mass = {x: 0.0 for x in support}
    for a, w in pmf.items():
        mass[a[0]] += w
    empty = [x for x, m in mass.items() if m <= 0]
    if empty:
        raise ValueError(f"{what}: characteristic values with zero mass: {empty}")
    return support


@dataclass(frozen=True)
class PopulationDistribution:
    """Exact joint law of (x, u, y)."""

    pmf: FinitePmf

    def __post_init__(self):
        for a in self.pmf:
            if len(a) != 3 or not isinstance(a[2], Outcome):
                raise ValueError(f"population atoms must be (x, u, Outcome), got {a!r}")
        object.__setattr__(self, "_support", _check_positive_marginals(self.pmf, "population"))

    @property
    def support(self) -> tuple:
        return self._support

    @property
    def signals(self) -> tuple:
        return tuple(dict.fromkeys(u for _, u, _ in self.pmf))

    def xy_pmf(self) -> FinitePmf:
        return self.pmf.marginal(lambda a: (a[0], a[2]))

    @classmethod
    def from_counts(cls, rows: Iterable[tuple[Hashable, Hashable, Outcome, float]]) -> "PopulationDistribution":
        rows = [r for r in rows if r[3] > 0]
        return cls(FinitePmf.from_counts(((x, u, y), c) for x, u, y, c in rows))


@dataclass(frozen=True)
class BaselineJoint:
    """Exact joint law of (x, d0, y) for unassisted decisions."""

    pmf: FinitePmf

    def __post_init__(self):
        for a in self.pmf:
            if len(a) != 3 or not isinstance(a[1], Decision) or not isinstance(a[2], Outcome):
                raise ValueError(f"baseline atoms must be (x, Decision, Outcome), got {a!r}")
        object.__setattr__(self, "_support", _check_positive_marginals(self.pmf, "baseline"))

    @property
    def support(self) -> tuple:
        return self._support

    def prob_d0_hire(self, x) -> float:
        mass = math.fsum(w for a, w in self.pmf.items() if a[0] == x)
        hired = math.fsum(w for a, w in self.pmf.items() if a[0] == x and a[1] is Decision.HIRE)
        return hired / mass

    @classmethod
    def from_population(cls, pop: PopulationDistribution, baseline: AgentModel) -> "BaselineJoint":
        """Push the population through an unassisted agent (no recommendation ever sent)."""
        acc: dict = {}
        for (x, u, y), w in pop.pmf.items():
            p = baseline.hire_prob(u)
            for d, pd in ((Decision.NOT_HIRE, 1.0 - p), (Decision.HIRE, p)):
                acc.setdefault((x, d, y), []).append(w * pd)
        return cls(FinitePmf((k, math.fsum(v)) for k, v in acc.items()))

    @classmethod
    def from_rates(cls, rows: Mapping) -> "BaselineJoint":
        """Build from per-x ``(p_x, h, m_N, m_H)``.

        ``m_N`` is Pr(Good | d0 = N, x) and ``m_H`` is Pr(Bad | d0 = H, x).
        """
        G, B = Outcome.GOOD, Outcome.BAD
        items = []
        for x, (p, h, m_n, m_h) in rows.items():
            items += [
                ((x, Decision.HIRE, B), p * h * m_h),
                ((x, Decision.HIRE, G), p * h * (1.0 - m_h)),
                ((x, Decision.NOT_HIRE, G), p * (1.0 - h) * m_n),
                ((x, Decision.NOT_HIRE, B), p * (1.0 - h) * (1.0 - m_n)),
            ]
        return cls(FinitePmf(items))


def _xy_masses(dist) -> tuple[tuple, dict]:
    """Per-x (Pr(x, Good), Pr(x, Bad)) from any pmf whose atoms start with x and end with y."""
    pmf = dist.pmf if hasattr(dist, "pmf") else dist
    support = _ordered_support(pmf.atoms)
    good = {x: [] for x in support}
    bad = {x: [] for x in support}
    for a, w in pmf.items():
        (good if a[-1] is Outcome.GOOD else bad)[a[0]].append(w)
    return support, {x: (math.fsum(good[x]), math.fsum(bad[x])) for x in support}


def optimal_decision_policy(dist, spec: LossSpec) -> Policy:
    """Recommend the loss-minimising decision from x alone; ties go to Hire."""
    support, masses = _xy_masses(dist)
    recs = []
    for x in support:
        g, b = masses[x]
        recs.append(H if spec.c_II * b <= spec.c_I * g + TIE_TOL else N)
    return Policy(support, tuple(recs))


def triage_costs(base: BaselineJoint, spec: LossSpec) -> dict:
    """Per-x conditional cost of sending N, none, H when recommendations are implemented directly."""
    out = {}
    for x in base.support:
        cell = {(d, y): w for (xx, d, y), w in base.pmf.items() if xx == x}
        mass = math.fsum(cell.values())
        g = math.fsum(w for (d, y), w in cell.items() if y is Outcome.GOOD) / mass
        b = math.fsum(w for (d, y), w in cell.items() if y is Outcome.BAD) / mass
        m1 = cell.get((Decision.NOT_HIRE, Outcome.GOOD), 0.0) / mass
        m2 = cell.get((Decision.HIRE, Outcome.BAD), 0.0) / mass
        out[x] = {N: spec.c_I * g, H: spec.c_II * b, NONE: spec.c_I * m1 + spec.c_II * m2}
    return out


# ties: N before H before none, so a recommendation is sent whenever it is no worse
_TRIAGE_PREFERENCE = (N, H, NONE)


def optimal_triage_policy(base: BaselineJoint, spec: LossSpec) -> Policy:
    costs = triage_costs(base, spec)
    recs = []
    for x in base.support:
        c = costs[x]
        best = min(c.values())
        recs.append(next(r for r in _TRIAGE_PREFERENCE if c[r] <= best + TIE_TOL))
    return Policy(base.support, tuple(recs))


def _check_support(policy: Policy, support: Sequence):
    if set(policy.support) != set(support) or len(policy.support) != len(support):
        raise SupportMismatch(f"policy support {list(policy.support)} != distribution support {list(support)}")


def evaluate_policy_exact(policy: Policy, pop: PopulationDistribution, model: AgentModel, spec: LossSpec) -> float:
    _check_support(policy, pop.support)
    recs = dict(policy.items())
    terms = []
    for (x, u, y), w in pop.pmf.items():
        p_hire = model.prob_hire_given(u, recs[x])
        terms.append(w * ((1.0 - p_hire) * loss(spec, y, Decision.NOT_HIRE) + p_hire * loss(spec, y, Decision.HIRE)))
    return math.fsum(terms)


def policy_cost_table(pop: PopulationDistribution, model: AgentModel, spec: LossSpec) -> np.ndarray:
    """Array ``[i, r]``: expected loss mass contributed by ``support[i]`` under recommendation ``r``."""
    idx = {x: i for i, x in enumerate(pop.support)}
    table = [[[] for _ in Recommendation] for _ in pop.support]
    for (x, u, y), w in pop.pmf.items():
        for r in Recommendation:
            p = model.prob_hire_given(u, r)
            table[idx[x]][r].append(w * ((1.0 - p) * loss(spec, y, Decision.NOT_HIRE) + p * loss(spec, y, Decision.HIRE)))
    return np.array([[math.fsum(c) for c in row] for row in table])


def enumerate_policies(support: Sequence, cap: int = DEFAULT_CAP) -> Iterator[Policy]:
    support = tuple(support)
    if len(support) > cap:
        raise CapExceeded(f"support of size {len(support)} exceeds enumeration cap {cap}")
    for recs in itertools.product(tuple(Recommendation), repeat=len(support)):
        yield Policy(support, recs)


def all_sums(table: np.ndarray) -> np.ndarray:
    """Values of every policy from a per-x additive table, shaped ``(3,) * k``."""
    total = np.zeros(())
    for row in table:
        total = np.add.outer(total, row)
    return total


def argmin_policies(values: np.ndarray, support: tuple, tol: float = ARGMIN_TOL) -> tuple[list[Policy], float]:
    best = float(values.min())
    hits = np.argwhere(values <= best + tol)
    pols = [Policy(support, tuple(Recommendation(int(i)) for i in idx)) for idx in hits]
    return pols, best


def brute_force_optimal(
    pop: PopulationDistribution,
    model: AgentModel,
    spec: LossSpec,
    allowed: Sequence[Policy] | None = None,
    cap: int = DEFAULT_CAP,
) -> tuple[list[Policy], float]:
    """Exact argmin (with ties) of expected loss over all policies or an allow-list."""
    support = pop.support
    if allowed is not None:
        vals = [evaluate_policy_exact(p, pop, model, spec) for p in allowed]
        best = min(vals)
        return [p for p, v in zip(allowed, vals) if v <= best + ARGMIN_TOL], best
    if len(support) > cap:
        raise CapExceeded(f"support of size {len(support)} exceeds enumeration cap {cap}")
    return argmin_policies(all_sums(policy_cost_table(pop, model, spec)), support)
