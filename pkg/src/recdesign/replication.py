"""End-to-end checks of the published results, with a deterministic JSON report.

Each check returns whether it passed plus the numbers behind the verdict.
Random instances are drawn from children of one seed, one child per check.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import agents, experiment
from .agents import AgentModel, ALL_TRIPLES, MonotonicityError, PotentialTriple, classify_response, from_compact, to_compact
from .core import FinitePmf, LossSpec, Outcome, Recommendation
from .decomposition import compliance_response_effect, decompose
from .estimation import PolicyClass, cost_weighted_erm, fit_mistake_stats, plugin_policy, sample_log
from .lfm import (
    ComplianceAssumptions,
    MistakeStats,
    XStats,
    adversary_excess,
    bound_table,
    grid_slack,
    kappa_thresholds,
    lfm_policy,
    minimax_grid_oracle,
    mistake_stats,
    worst_case_excess,
)
from .policies import BaselineJoint, Policy, PopulationDistribution, all_sums, enumerate_policies, optimal_triage_policy

N, NONE, H = Recommendation.NOT_HIRE, Recommendation.NONE, Recommendation.HIRE
G, B = Outcome.GOOD, Outcome.BAD

TABLE1 = {
    "NNN": "Ignore",
    "HHH": "Ignore",
    "NNH": "Comply",
    "NHH": "Comply",
    "HNN": "Defy",
    "HHN": "Defy",
    "HNH": "Change",
    "NHN": "Change",
}


@dataclass
class CheckResult:
    id: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# random instances


def random_costs(rng: np.random.Generator) -> LossSpec:
    return LossSpec(float(rng.uniform(0.1, 10)), float(rng.uniform(0.1, 10)))


def random_baseline(rng: np.random.Generator, k: int) -> BaselineJoint:
    p = rng.dirichlet(np.ones(k))
    rates = {f"x{i}": (p[i], *rng.uniform(0.02, 0.98, 3)) for i in range(k)}
    return BaselineJoint.from_rates(rates)


def _tie_free(stats: MistakeStats, spec: LossSpec, kappa: float, gap: float = 1e-6) -> bool:
    from .lfm import gains

    for x in stats.support:
        g_n, g_h = gains(stats[x], spec, kappa)
        if min(abs(g_n), abs(g_h), abs(g_n - g_h)) < gap:
            return False
    return True


def random_population(rng: np.random.Generator, k: int, n_u: int) -> PopulationDistribution:
    atoms = [(f"x{i}", f"u{j}", y) for i in range(k) for j in range(n_u) for y in (G, B)]
    w = rng.dirichlet(np.ones(len(atoms)))
    # keep every x with positive mass
    return PopulationDistribution(FinitePmf(zip(atoms, w)))


def random_model(rng: np.random.Generator, signals) -> AgentModel:
    comply = {(u, r): float(rng.uniform()) for u in signals for r in (N, H)}
    active = {u: float(rng.uniform()) for u in signals}
    if rng.uniform() < 0.2:
        active = {u: float(rng.integers(0, 2)) for u in signals}
    return AgentModel(lambda u, r: comply[(u, r)], lambda u: active[u])


def random_policy(rng: np.random.Generator, support) -> Policy:
    return Policy(tuple(support), tuple(Recommendation(int(i)) for i in rng.integers(0, 3, len(support))))


# ---------------------------------------------------------------------------
# the checks


def check_kappa_thresholds(rng) -> CheckResult:
    stats = mistake_stats(experiment.table6_baseline())
    unit = LossSpec()
    rows = experiment.fig7_comparison(stats, unit)
    got = {x: kappa_thresholds(stats, unit, x) for x in stats.support}
    expected = [("A", "kappa_N", 1.326), ("B", "kappa_H", 0.923), ("C", "kappa_H", 0.724), ("D", "kappa_H", 0.0), ("E", "kappa_H", 0.886)]
    checks = {}
    for x, which, ref in expected:
        val = getattr(got[x], which)
        checks[f"{x}.{which}"] = {"derived": val, "published": ref, "ok": val is not None and abs(val - ref) <= 0.005}
    crossover = got["E"].kappa_crossover
    e_flag = next(r for r in rows if r["x"] == "E" and r["rec"] == "N")
    crossover_ok = crossover is not None and abs(crossover - 4.128) <= 0.005 and e_flag["discrepancy"]
    return CheckResult(
        1,
        "kappa thresholds of the control-arm sweep",
        all(c["ok"] for c in checks.values()) and crossover_ok,
        {"thresholds": checks, "E_crossover": crossover, "E_crossover_published": 5.128, "E_crossover_flagged": e_flag["discrepancy"]},
    )


def check_triage_equivalence(rng, n: int = 1000) -> CheckResult:
    mismatches = 0
    done = 0
    while done < n:
        k = int(rng.integers(1, 7))
        base = random_baseline(rng, k)
        spec = random_costs(rng)
        stats = mistake_stats(base)
        if not _tie_free(stats, spec, 1.0):
            continue
        done += 1
        if lfm_policy(stats, spec, 1.0) != optimal_triage_policy(base, spec):
            mismatches += 1
    return CheckResult(2, "learning from mistakes at kappa = 1 equals optimal triage", mismatches == 0, {"instances": n, "mismatches": mismatches})


def check_decomposition(rng, n: int = 500) -> CheckResult:
    worst_total = worst_split = 0.0
    for _ in range(n):
        k, n_u = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        pop = random_population(rng, k, n_u)
        model = random_model(rng, pop.signals)
        baseline = random_model(rng, pop.signals)
        spec = random_costs(rng)
        policy = random_policy(rng, pop.support)
        rep = decompose(policy, pop, model, baseline, spec)
        ign, shift = compliance_response_effect(policy, pop, model, baseline, spec)
        worst_total = max(worst_total, abs(rep.total - (rep.te + rep.re)))
        worst_split = max(worst_split, abs(rep.re - (ign + shift)))
    ok = worst_total <= 1e-9 and worst_split <= 1e-9
    return CheckResult(3, "triage effect plus response effect equals total loss", ok, {"instances": n, "max_total_gap": worst_total, "max_split_gap": worst_split})


def check_table4(rng) -> CheckResult:
    cells = experiment.table4_matrix(experiment.default_population(), LossSpec())
    details = {
        f"{c.compliance}/{c.active}": {"named": c.named, "in_argmin": c.contains_named, "argmin": [p.id for p in c.argmin], "errors": round(25 * c.value, 9)}
        for c in cells
    }
    return CheckResult(4, "named treatment policies are optimal in their compliance and active-decision cells", all(c.contains_named for c in cells), details)


def check_minimax(rng, n_analytic: int = 200, n_grid: int = 50, grid_step: float = 0.05) -> CheckResult:
    analytic_fail = 0
    for _ in range(n_analytic):
        k = int(rng.integers(1, 6))
        base = random_baseline(rng, k)
        spec = random_costs(rng)
        a = ComplianceAssumptions(float(rng.uniform(0.05, 10)), float(rng.uniform(0.05, 1)))
        stats = mistake_stats(base)
        best = float(all_sums(bound_table(stats, spec, a)).min())
        if worst_case_excess(lfm_policy(stats, spec, a.kappa), stats, spec, a) > best + 1e-12:
            analytic_fail += 1
    argmin_fail = 0
    bound_total = bound_miss = bound_miss_certified = 0
    exact_miss = 0
    for _ in range(n_grid):
        k = int(rng.integers(1, 4))
        base = random_baseline(rng, k)
        spec = random_costs(rng)
        # epsilon and epsilon / kappa on the grid, so the bound's attainment point is a grid point;
        # kappa >= epsilon, since below it the compliance floor binds and the bound is not attained
        n_steps = round(1 / grid_step)
        eps = grid_step * int(rng.integers(1, n_steps + 1))
        q0 = grid_step * int(rng.integers(max(1, math.ceil(eps / grid_step / 10)), n_steps + 1))
        a = ComplianceAssumptions(eps / q0, eps)
        stats = mistake_stats(base)
        res = minimax_grid_oracle(base, spec, a, grid_step)
        if lfm_policy(stats, spec, a.kappa) not in res.argmin:
            argmin_fail += 1
        for p, v in res.per_policy:
            slack = grid_slack(stats, spec, p, grid_step) + 1e-12
            bound_total += 1
            if abs(v - worst_case_excess(p, stats, spec, a)) > slack:
                bound_miss += 1
                table = bound_table(stats, spec, a)
                idx = {x: i for i, x in enumerate(stats.support)}
                if all(table[idx[x], r] <= 0 for x, r in p.items() if r is not NONE):
                    bound_miss_certified += 1
            exact = adversary_excess(p, stats, spec, a)
            if not (v <= exact + 1e-12 and exact <= v + slack):
                exact_miss += 1
    ok = analytic_fail == 0 and argmin_fail == 0 and bound_miss == 0
    return CheckResult(
        5,
        "learning from mistakes is minimax optimal",
        ok,
        {
            "analytic_instances": n_analytic,
            "analytic_failures": analytic_fail,
            "grid_instances": n_grid,
            "grid_argmin_failures": argmin_fail,
            "policies_checked": bound_total,
            "bound_mismatches": bound_miss,
            # mismatches among policies that only recommend where the bound's bracket is <= 0
            "bound_mismatches_nonpositive_bracket": bound_miss_certified,
            "exact_adversary_mismatches": exact_miss,
        },
    )


def random_stats(rng: np.random.Generator, k: int) -> MistakeStats:
    p = rng.dirichlet(np.ones(k))
    return MistakeStats({f"x{i}": XStats(float(p[i]), *map(float, rng.uniform(0, 1, 3))) for i in range(k)})


def check_estimation(rng, n_stats: int = 1000, n_logs: int = 100, log_size: int = 500) -> CheckResult:
    plug_fail = 0
    for _ in range(n_stats):
        stats = random_stats(rng, int(rng.integers(1, 7)))
        spec = random_costs(rng)
        kappa = float(rng.uniform(0, 10))
        if plugin_policy(stats, spec, kappa) != lfm_policy(stats, spec, kappa):
            plug_fail += 1
    erm_fail = 0
    for _ in range(n_logs):
        base = random_baseline(rng, int(rng.integers(1, 6)))
        log = sample_log(base, log_size, rng)
        spec = random_costs(rng)
        kappa = float(rng.uniform(0, 10))
        argmin, _ = cost_weighted_erm(log, PolicyClass(), spec, kappa)
        if plugin_policy(fit_mistake_stats(log, 0.0), spec, kappa) not in argmin:
            erm_fail += 1
    return CheckResult(
        6,
        "plug-in rule, cost-weighted ERM and the algorithm agree",
        plug_fail == 0 and erm_fail == 0,
        {"stats_instances": n_stats, "plugin_mismatches": plug_fail, "logs": n_logs, "erm_misses": erm_fail},
    )


def check_taxonomy(rng) -> CheckResult:
    wrong = [str(t) for t in ALL_TRIPLES if classify_response(t).value != TABLE1[str(t)]]
    roundtrip = rejected = 0
    monotone = [t for t in ALL_TRIPLES if TABLE1[str(t)] in ("Ignore", "Comply")]
    for t in ALL_TRIPLES:
        if t in monotone:
            roundtrip += from_compact(to_compact(t)) == t
        else:
            try:
                to_compact(t)
            except MonotonicityError:
                rejected += 1
    ok = not wrong and roundtrip == 4 and rejected == 4
    return CheckResult(7, "response taxonomy and compact bijection", ok, {"misclassified": wrong, "round_trips": roundtrip, "rejected": rejected})


def check_population(rng) -> CheckResult:
    pop = experiment.default_population()
    violations = experiment.validate_population(pop)
    derived = experiment.derive_treatments(pop)
    table3 = {name: derived[name] == experiment.TREATMENTS[name] for name in experiment.TREATMENT_NAMES}
    return CheckResult(
        8,
        "default population meets every game constraint",
        not violations and all(table3.values()),
        {
            "violations": violations,
            "role_only_correct": 25 - experiment.role_only_errors(pop),
            "type_only_correct": 25 - experiment.type_only_errors(pop),
            "table3_rows": table3,
        },
    )


def check_simulation(rng, n_subjects: int = 10_000, threads: int = 1) -> CheckResult:
    pop = experiment.default_population()
    model = experiment.game_model(pop, "perfect", "sophisticated")
    seed = int(rng.integers(0, 2**63))
    policy = experiment.TREATMENTS["Triage"]
    _, summary = experiment.simulate_experiment(pop, policy, model, n_subjects, seed, "Triage", threads=threads)
    exact = experiment.exact_rates(pop, policy, model)["optimal_pct"]
    tol = max(3 * summary.optimal_se, 1e-9)
    ok = abs(summary.optimal_pct - exact) <= tol and summary.deviated_pct == 0
    return CheckResult(
        9,
        "simulated subjects match exact evaluation",
        ok,
        {"simulated_optimal_pct": summary.optimal_pct, "se": summary.optimal_se, "exact_optimal_pct": exact, "deviated_pct": summary.deviated_pct},
    )


CHECKS: list[Callable] = [
    check_kappa_thresholds,
    check_triage_equivalence,
    check_decomposition,
    check_table4,
    check_minimax,
    check_estimation,
    check_taxonomy,
    check_population,
    check_simulation,
]


def run_checks(seed: int = 0, threads: int = 1) -> list[CheckResult]:
    children = np.random.SeedSequence(seed).spawn(len(CHECKS))
    out = []
    for fn, ss in zip(CHECKS, children):
        rng = np.random.default_rng(ss)
        out.append(fn(rng, threads=threads) if fn is check_simulation else fn(rng))
    return out


def treatment_table(seed: int = 0, n_subjects: int = 1000, threads: int = 1) -> dict:
    """Simulated Table-5 style rows for noisy subjects: comply w.p. 0.75, probability-matching active decisions."""
    pop = experiment.default_population()
    model = agents.build_model({"compliance": 0.75, "active": "matching"}, pop.to_distribution())
    children = np.random.SeedSequence([seed, 5]).spawn(len(experiment.TREATMENT_NAMES))
    rows = {}
    for name, ss in zip(experiment.TREATMENT_NAMES, children):
        s = int(ss.generate_state(1, np.uint64)[0])
        _, summary = experiment.simulate_experiment(pop, experiment.TREATMENTS[name], model, n_subjects, s, name, threads)
        rows[name] = {"simulated": summary.as_dict(), "human_reference": experiment.HUMAN_TABLE5[name]}
    return rows


def replicate_report(seed: int = 0, threads: int = 1) -> dict:
    results = run_checks(seed, threads)
    return {
        "seed": seed,
        "all_passed": all(r.passed for r in results),
        "criteria": [{"id": r.id, "title": r.title, "passed": r.passed, "details": r.details} for r in results],
        "treatments": treatment_table(seed, threads=threads),
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Recommendation):
        return o.code
    raise TypeError(f"not serialisable: {type(o).__name__}")
