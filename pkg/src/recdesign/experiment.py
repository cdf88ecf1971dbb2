"""The hiring game: applicant population, treatment arms, and simulated subjects.

Twenty-five applicants each have a role (seen by the subject), a personality
type (seen by the algorithm) and an ability. The exact cell counts of the
game are pinned down only through published constraints, so the default
population is the constant returned by :func:`search_populations` and every
constraint is re-checked by :func:`validate_population`.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .agents import (
    AgentModel,
    perfect_compliance_model,
    random_active,
    selective_compliance_model,
    sophisticated_active,
)
from .core import Decision, LossSpec, Outcome, Recommendation, loss
from .lfm import MistakeStats, kappa_thresholds, mistake_stats, sweep
from .policies import (
    BaselineJoint,
    Policy,
    PopulationDistribution,
    brute_force_optimal,
    evaluate_policy_exact,
)

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

N, NONE, H = Recommendation.NOT_HIRE, Recommendation.NONE, Recommendation.HIRE
G, B = Outcome.GOOD, Outcome.BAD

ROLES = ("Engineering", "Sales", "Communications")
TYPES = ("A", "B", "C", "D", "E")
N_APPLICANTS = 25
PER_TYPE = 5
RATIONAL_ACCURACY = (19, 25)

TREATMENT_NAMES = ("Control", "Predictive", "Complementary", "Triage", "Complementary Triage")
TREATMENTS = {
    "Control": Policy.from_codes(TYPES, ["none"] * 5),
    "Predictive": Policy.from_codes(TYPES, "NHHHH"),
    "Complementary": Policy.from_codes(TYPES, "NHHHN"),
    "Triage": Policy.from_codes(TYPES, "N00HH"),
    "Complementary Triage": Policy.from_codes(TYPES, "N00HN"),
}

# human-subject results, shown next to simulated numbers only
HUMAN_TABLE5 = {
    "Control": {"optimal": 69.5, "hire": 67.0, "deviated": None},
    "Predictive": {"optimal": 76.2, "hire": 75.3, "deviated": 19.7},
    "Complementary": {"optimal": 81.6, "hire": 66.9, "deviated": 25.6},
    "Triage": {"optimal": 78.8, "hire": 65.9, "deviated": 23.5},
    "Complementary Triage": {"optimal": 80.1, "hire": 60.9, "deviated": 28.2},
}

# (p, h, m_N, m_H) per type, from the control arm
TABLE6 = {
    "A": (0.20, 0.67, 0.06, 0.43),
    "B": (0.20, 0.68, 0.52, 0.07),
    "C": (0.20, 0.65, 0.58, 0.08),
    "D": (0.20, 0.68, 1.00, 0.00),
    "E": (0.20, 0.67, 0.53, 0.36),
}

# published band starts of the kappa sweep; None means "from kappa = 0"
FIG7_BAND_STARTS = {
    ("A", N): 1.326,
    ("B", H): 0.923,
    ("C", H): 0.724,
    ("D", H): None,
    ("E", H): 0.886,
    ("E", N): 5.128,
}
FIG7_TOL = 0.005


# ---------------------------------------------------------------------------
# population


class PopRow(NamedTuple):
    role: str
    type: str
    ability: Outcome
    count: int


@dataclass(frozen=True)
class PopulationSpec:
    rows: tuple

    def __post_init__(self):
        rows = []
        for r in self.rows:
            r = PopRow(*r)
            if r.role not in ROLES:
                raise ValueError(f"unknown role {r.role!r}")
            if r.type not in TYPES:
                raise ValueError(f"unknown personality type {r.type!r}")
            ability = r.ability if isinstance(r.ability, Outcome) else Outcome.parse(str(r.ability))
            if int(r.count) != r.count or r.count < 0:
                raise ValueError(f"count must be a nonnegative integer, got {r.count!r}")
            rows.append(PopRow(r.role, r.type, ability, int(r.count)))
        object.__setattr__(self, "rows", tuple(rows))

    def count(self, role=None, type=None, ability=None) -> int:
        return sum(
            r.count
            for r in self.rows
            if (role is None or r.role == role or (not isinstance(role, str) and r.role in role))
            and (type is None or r.type == type)
            and (ability is None or r.ability is ability)
        )

    @property
    def total(self) -> int:
        return self.count()

    def to_distribution(self) -> PopulationDistribution:
        """Law of (type, role, ability); types appear in A..E order."""
        acc: dict = {}
        for t in TYPES:
            for r in self.rows:
                if r.type == t and r.count > 0:
                    acc[(t, r.role, r.ability)] = acc.get((t, r.role, r.ability), 0) + r.count
        return PopulationDistribution.from_counts((x, u, y, c) for (x, u, y), c in acc.items())

    def applicants(self) -> list[tuple[str, str, Outcome]]:
        """One (type, role, ability) entry per applicant, in a fixed order."""
        out = []
        for t in TYPES:
            for role in ROLES:
                for y in (G, B):
                    out += [(t, role, y)] * self.count(role, t, y)
        return out

    def as_dict(self) -> dict:
        return {"rows": [{"role": r.role, "type": r.type, "ability": r.ability.value, "count": r.count} for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationSpec":
        try:
            return cls(tuple((r["role"], r["type"], r["ability"], r["count"]) for r in d["rows"]))
        except (KeyError, TypeError) as e:
            raise ValueError(f"population rows need role, type, ability, count: {e}") from None

    @classmethod
    def from_file(cls, path: str | Path) -> "PopulationSpec":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".toml":
            return cls.from_dict(tomllib.loads(text))
        return cls.from_dict(json.loads(text))


def _from_type_tuples(cells: dict) -> PopulationSpec:
    """``{type: (eng_good, sales_good, sales_bad, comm_good, comm_bad)}``."""
    rows = []
    for t, (eg, sg, sb, cg, cb) in cells.items():
        rows += [
            ("Engineering", t, G, eg),
            ("Sales", t, G, sg),
            ("Sales", t, B, sb),
            ("Communications", t, G, cg),
            ("Communications", t, B, cb),
        ]
    return PopulationSpec(tuple(rows))


_DEFAULT_CELLS = {
    "A": (2, 0, 2, 0, 1),
    "B": (1, 3, 0, 0, 1),
    "C": (1, 3, 0, 0, 1),
    "D": (4, 0, 0, 1, 0),
    "E": (2, 0, 2, 1, 0),
}


def default_population() -> PopulationSpec:
    return _from_type_tuples(_DEFAULT_CELLS)


# ---------------------------------------------------------------------------
# verbal treatment rules


def _at_least_half(good: int, bad: int, spec: LossSpec) -> bool:
    # cost-weighted majority; an empty group passes vacuously
    return spec.c_I * good >= spec.c_II * bad


def _at_least_half_bad(good: int, bad: int, spec: LossSpec) -> bool:
    return spec.c_II * bad >= spec.c_I * good


def derive_treatments(pop: PopulationSpec, spec: LossSpec = LossSpec()) -> dict:
    sc = ("Sales", "Communications")
    es = ("Engineering", "Sales")
    pred, comp, tri, ctri = [], [], [], []
    for t in TYPES:
        p = H if _at_least_half(pop.count(None, t, G), pop.count(None, t, B), spec) else N
        c = H if _at_least_half(pop.count(sc, t, G), pop.count(sc, t, B), spec) else N
        comm_ok = _at_least_half(pop.count("Communications", t, G), pop.count("Communications", t, B), spec)
        es_bad = _at_least_half_bad(pop.count(es, t, G), pop.count(es, t, B), spec)
        sales_bad = _at_least_half_bad(pop.count("Sales", t, G), pop.count("Sales", t, B), spec)
        pred.append(p)
        comp.append(c)
        tri.append((H if comm_ok else NONE) if p is H else (N if es_bad else NONE))
        ctri.append((H if comm_ok else NONE) if c is H else (N if sales_bad else NONE))
    return {
        "Control": Policy.constant(TYPES, NONE),
        "Predictive": Policy(TYPES, tuple(pred)),
        "Complementary": Policy(TYPES, tuple(comp)),
        "Triage": Policy(TYPES, tuple(tri)),
        "Complementary Triage": Policy(TYPES, tuple(ctri)),
    }


# ---------------------------------------------------------------------------
# agent models of the game


def game_model(pop: PopulationSpec, compliance: str, active: str, spec: LossSpec = LossSpec()) -> AgentModel:
    dist = pop.to_distribution()
    rule = random_active(0.5) if active == "random" else sophisticated_active(dist, spec)
    if compliance == "perfect":
        return perfect_compliance_model(rule, active=active)
    if compliance == "selective":
        return selective_compliance_model(["Engineering"], rule, ROLES, active=active)
    raise ValueError(f"unknown compliance {compliance!r}")


def _majority_errors(pop: PopulationSpec, key) -> int:
    groups: dict = {}
    for r in pop.rows:
        g = groups.setdefault(key(r), [0, 0])
        g[0 if r.ability is G else 1] += r.count
    return sum(min(g) for g in groups.values())


def role_only_errors(pop: PopulationSpec) -> int:
    return _majority_errors(pop, lambda r: r.role)


def type_only_errors(pop: PopulationSpec) -> int:
    return _majority_errors(pop, lambda r: r.type)


def rational_errors(pop: PopulationSpec, policy: Policy, compliance: str = "selective") -> list[tuple]:
    """Applicants a rational sophisticated subject gets wrong under ``policy``, with counts."""
    rule = sophisticated_active(pop.to_distribution())
    out = []
    for r in pop.rows:
        if r.count == 0:
            continue
        rec = policy[r.type]
        follows = rec is not NONE and not (compliance == "selective" and r.role == "Engineering")
        d = rec.decision if follows else (Decision.HIRE if rule(r.role) >= 0.5 else Decision.NOT_HIRE)
        if loss(LossSpec(), r.ability, d) > 0:
            out.append((r.type, r.role, r.ability.value, r.count))
    return out


def validate_population(pop: PopulationSpec, spec: LossSpec = LossSpec()) -> list[str]:
    v = []
    total = pop.total
    if total != N_APPLICANTS:
        v.append(f"total count ≠ {N_APPLICANTS}: got {total}")
    bad_types = {t: pop.count(None, t) for t in TYPES if pop.count(None, t) != PER_TYPE}
    if bad_types:
        v.append(f"personality type totals ≠ {PER_TYPE}: {bad_types}")
    eng_bad = pop.count("Engineering", None, B)
    if eng_bad:
        v.append(f"Engineering not all Good: {eng_bad} Bad")
    for role, share in (("Sales", 0.6), ("Communications", 0.4)):
        n = pop.count(role)
        g = pop.count(role, None, G)
        if n == 0 or 5 * g != round(5 * share) * n:
            v.append(f"{role} not {round(100 * share)}% Good: {g}/{n}")
    if total:
        target = RATIONAL_ACCURACY[1] - RATIONAL_ACCURACY[0]
        ok_total = total == RATIONAL_ACCURACY[1]
        e = role_only_errors(pop)
        if not ok_total or e != target:
            v.append(f"role-only rational accuracy ≠ 19/25: {total - e}/{total}")
        e = type_only_errors(pop)
        if not ok_total or e != target:
            v.append(f"type-only rational accuracy ≠ 19/25: {total - e}/{total}")
    derived = derive_treatments(pop, spec)
    for name in TREATMENT_NAMES:
        if derived[name] != TREATMENTS[name]:
            v.append(f"derived {name} policy ≠ reference treatment: got {derived[name].id}")
    errs = rational_errors(pop, TREATMENTS["Complementary Triage"])
    n_err = sum(c for *_, c in errs)
    if n_err != 1 or errs[0][:3] != ("E", "Communications", "G"):
        v.append(f"Complementary Triage rational error ≠ one type-E Communications Good: {errs}")
    return v


def search_populations(require_bc_equivalent: bool = False) -> list[dict]:
    """Every integer population satisfying the game's constraints.

    Each type is enumerated as (eng_good, sales_good, sales_bad, comm_good,
    comm_bad) summing to 5, filtered by the four verbal treatment rules, then
    combined under the aggregate constraints.
    """
    unit = LossSpec()

    def compositions(n, k):
        if k == 1:
            yield (n,)
            return
        for i in range(n + 1):
            for rest in compositions(n - i, k - 1):
                yield (i,) + rest

    per_type = {}
    for i, t in enumerate(TYPES):
        keep = []
        for cell in compositions(PER_TYPE, 5):
            trial = derive_treatments(_from_type_tuples({t: cell}), unit)
            if all(trial[name][t] is TREATMENTS[name][t] for name in TREATMENT_NAMES[1:]):
                keep.append(cell)
        per_type[t] = keep
    found = []
    for combo in itertools.product(*(per_type[t] for t in TYPES)):
        eng = sum(c[0] for c in combo)
        sales = sum(c[1] + c[2] for c in combo)
        comm = sum(c[3] + c[4] for c in combo)
        if eng != 10 or sales + comm != 15:
            continue
        if 5 * sum(c[1] for c in combo) != 3 * sales or 5 * sum(c[3] for c in combo) != 2 * comm:
            continue
        if require_bc_equivalent and combo[1] != combo[2]:
            continue
        cells = dict(zip(TYPES, combo))
        if not validate_population(_from_type_tuples(cells)):
            found.append(cells)
    return found


# ---------------------------------------------------------------------------
# table 4 and table 6


@dataclass
class Table4Cell:
    compliance: str
    active: str
    named: str
    argmin: list
    value: float
    contains_named: bool


TABLE4_NAMED = {
    ("perfect", "random"): "Predictive",
    ("selective", "random"): "Complementary",
    ("perfect", "sophisticated"): "Triage",
    ("selective", "sophisticated"): "Complementary Triage",
}


def table4_matrix(pop: PopulationSpec, spec: LossSpec = LossSpec()) -> list[Table4Cell]:
    dist = pop.to_distribution()
    cells = []
    for (comp, act), name in TABLE4_NAMED.items():
        model = game_model(pop, comp, act, spec)
        argmin, value = brute_force_optimal(dist, model, spec)
        cells.append(Table4Cell(comp, act, name, argmin, value, TREATMENTS[name] in argmin))
    return cells


def table6_baseline() -> BaselineJoint:
    return BaselineJoint.from_rates(TABLE6)


def fig7_comparison(stats: MistakeStats, spec: LossSpec = LossSpec(), kappa_max: float = 10.0) -> list[dict]:
    """Derived band starts next to the published ones, with a discrepancy flag per band."""
    bands = sweep(stats, spec, 0.0, kappa_max)
    rows = []
    for (x, rec), published in FIG7_BAND_STARTS.items():
        starts = [b.start for b in bands if b.x == x and b.rec is rec]
        derived = starts[0] if starts else None
        if published is None:
            ok = derived == 0.0
        else:
            ok = derived is not None and abs(derived - published) <= FIG7_TOL
        rows.append({"x": x, "rec": rec.code, "derived": derived, "published": published, "discrepancy": not ok})
    return rows


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    treatment: str
    x: str
    u: str
    r: Recommendation
    y: Outcome
    d: Decision
    flag: str | None = None


SUBJECT_LOG_COLUMNS = ("subject_id", "treatment", "x", "u", "r", "y", "d")


@dataclass
class SimulationSummary:
    n_subjects: int
    n_decisions: int
    optimal_pct: float
    hire_pct: float
    deviated_pct: float | None
    optimal_se: float
    hire_se: float
    deviated_se: float | None

    def as_dict(self) -> dict:
        return asdict(self)


BOOTSTRAP_RESAMPLES = 1000
SUBJECT_BLOCK = 256


def _subject_counts(records: Sequence[SubjectRecord]) -> tuple[list, np.ndarray]:
    """Per subject: decisions, optimal, hires, directional recommendations, deviations."""
    order: dict = {}
    for rec in records:
        row = order.setdefault(rec.subject_id, [0, 0, 0, 0, 0])
        row[0] += 1
        row[1] += rec.d is (Decision.HIRE if rec.y is G else Decision.NOT_HIRE)
        row[2] += rec.d is Decision.HIRE
        if rec.r is not NONE:
            row[3] += 1
            row[4] += rec.d is not rec.r.decision
    return list(order), np.array(list(order.values()), dtype=np.int64).reshape(-1, 5)


def summarize(records: Sequence[SubjectRecord], seed: int = 0, resamples: int = BOOTSTRAP_RESAMPLES) -> SimulationSummary:
    """Table-5 style percentages with bootstrap SEs clustered by subject."""
    _, counts = _subject_counts(records)
    if len(counts) == 0:
        raise ValueError("no records to summarise")
    n_sub = len(counts)
    tot = counts.sum(axis=0)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    boot = np.empty((resamples, 5))
    for b in range(resamples):
        w = np.bincount(rng.integers(0, n_sub, n_sub), minlength=n_sub)
        boot[b] = w @ counts
    has_rec = tot[3] > 0

    def pct(num, den):
        return 100.0 * num / den

    def se(num_col, den_col):
        vals = pct(boot[:, num_col], boot[:, den_col])
        return float(np.std(vals, ddof=1)) if resamples > 1 else 0.0

    dev_se = None
    if has_rec:
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = pct(boot[:, 4], boot[:, 3])
        vals = vals[np.isfinite(vals)]
        dev_se = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return SimulationSummary(
        n_subjects=int(n_sub),
        n_decisions=int(tot[0]),
        optimal_pct=float(pct(tot[1], tot[0])),
        hire_pct=float(pct(tot[2], tot[0])),
        deviated_pct=float(pct(tot[4], tot[3])) if has_rec else None,
        optimal_se=se(1, 0),
        hire_se=se(2, 0),
        deviated_se=dev_se,
    )


def _simulate_block(applicants, recs, comply, active, seqs, first_id, treatment):
    out = []
    n = len(applicants)
    for k, ss in enumerate(seqs):
        rng = np.random.default_rng(ss)
        order = rng.permutation(n)
        v = rng.random((n, 2))  # same stream as one rng.random(2) per decision
        sid = str(first_id + k)
        for pos, a in enumerate(order):
            x, u, y = applicants[a]
            r = recs[a]
            if r is not NONE and v[pos, 0] < comply[a]:
                d = r.decision
            else:
                d = Decision.HIRE if v[pos, 1] < active[a] else Decision.NOT_HIRE
            out.append(SubjectRecord(sid, treatment, x, u, r, y, d))
    return out


def simulate_experiment(
    pop: PopulationSpec,
    policy: Policy,
    model: AgentModel,
    n_subjects: int,
    seed: int,
    treatment: str = "",
    threads: int = 1,
    resamples: int = BOOTSTRAP_RESAMPLES,
) -> tuple[list[SubjectRecord], SimulationSummary]:
    """Synthetic subjects each decide on every applicant, in a per-subject random order.

    Subject ``i`` draws from the ``i``-th child of ``SeedSequence(seed)``, so
    results do not depend on ``threads``.
    """
    if n_subjects < 1:
        raise ValueError("n_subjects must be >= 1")
    applicants = pop.applicants()
    recs = [policy[x] for x, _, _ in applicants]
    comply = [model.comply_prob(u, r) for (_, u, _), r in zip(applicants, recs)]
    active = [model.hire_prob(u) for _, u, _ in applicants]
    root = np.random.SeedSequence(seed)
    sim_seq, boot_seq = root.spawn(2)
    seqs = sim_seq.spawn(n_subjects)
    blocks = [(i, seqs[i : i + SUBJECT_BLOCK]) for i in range(0, n_subjects, SUBJECT_BLOCK)]
    job = lambda blk: _simulate_block(applicants, recs, comply, active, blk[1], blk[0], treatment)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(job, blocks))
    else:
        parts = [job(b) for b in blocks]
    records = [r for part in parts for r in part]
    boot_seed = int(boot_seq.generate_state(1, np.uint64)[0])
    return records, summarize(records, seed=boot_seed, resamples=resamples)


def exact_rates(pop: PopulationSpec, policy: Policy, model: AgentModel) -> dict:
    """Expected optimal and hire percentages from exact evaluation."""
    dist = pop.to_distribution()
    err = evaluate_policy_exact(policy, dist, model, LossSpec())
    recs = dict(policy.items())
    hire = math.fsum(w * model.prob_hire_given(u, recs[x]) for (x, u, _), w in dist.pmf.items())
    return {"optimal_pct": 100.0 * (1.0 - err), "hire_pct": 100.0 * hire}


# ---------------------------------------------------------------------------
# subject logs


def write_subject_log(records: Iterable[SubjectRecord], filter_column: str | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(SUBJECT_LOG_COLUMNS) + ([filter_column] if filter_column else [])
    w.writerow(cols)
    for r in records:
        row = [r.subject_id, r.treatment, r.x, r.u, r.r.code, r.y.value, r.d.code]
        if filter_column:
            row.append(r.flag or "")
        w.writerow(row)
    return buf.getvalue()


def read_subject_log(text: str, filter_column: str | None = None) -> list[SubjectRecord]:
    reader = csv.DictReader(io.StringIO(text))
    cols = reader.fieldnames or []
    missing = [c for c in SUBJECT_LOG_COLUMNS if c not in cols]
    if filter_column and filter_column not in cols:
        missing.append(filter_column)
    if missing:
        raise ValueError(f"line 1: missing columns {missing}")
    out = []
    for line, row in enumerate(reader, start=2):
        try:
            rec = SubjectRecord(
                subject_id=row["subject_id"],
                treatment=row["treatment"],
                x=row["x"],
                u=row["u"],
                r=Recommendation.parse(row["r"] or ""),
                y=Outcome.parse(row["y"] or ""),
                d=Decision.parse(row["d"] or ""),
                flag=row[filter_column] if filter_column else None,
            )
        except (ValueError, AttributeError) as e:
            raise ValueError(f"line {line}: {e}") from None
        if not rec.subject_id or not rec.x:
            raise ValueError(f"line {line}: empty subject_id or x")
        out.append(rec)
    return out


def ingest_subject_log(text: str, filter_column: str | None = None, seed: int = 0) -> tuple[list[SubjectRecord], dict]:
    """Summaries keyed by treatment, or by (treatment, filter value) when a filter column is given."""
    records = read_subject_log(text, filter_column)
    groups: dict = {}
    for r in records:
        key = r.treatment if filter_column is None else (r.treatment, r.flag)
        groups.setdefault(key, []).append(r)
    return records, {k: summarize(v, seed=seed) for k, v in groups.items()}
