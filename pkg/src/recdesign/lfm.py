"""Learning from mistakes: minimax recommendations from unassisted-decision data.

Only the baseline law of (x, d0, y) is observed. Compliance is constrained by
a ratio ``kappa`` between compliance given a baseline mistake and given no
mistake, and by a floor ``epsilon`` on compliance given a mistake.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .agents import AgentModel
from .core import Decision, LossSpec, Outcome, Recommendation, loss
from .policies import (
    ARGMIN_TOL,
    TIE_TOL,
    BaselineJoint,
    CapExceeded,
    Policy,
    PopulationDistribution,
    _check_support,
    all_sums,
    argmin_policies,
    enumerate_policies,
)

N, NONE, H = Recommendation.NOT_HIRE, Recommendation.NONE, Recommendation.HIRE
ORACLE_CAP = 4


@dataclass(frozen=True)
class XStats:
    """Per-x baseline statistics. ``m_N``/``m_H`` are None when their conditioning event is empty."""

    p: float
    h: float | None
    m_N: float | None
    m_H: float | None

    def __post_init__(self):
        for name in ("p", "h", "m_N", "m_H"):
            v = getattr(self, name)
            if v is None:
                continue
            if not (-1e-12 <= v <= 1.0 + 1e-12):
                raise ValueError(f"{name}={v} outside [0, 1]")
            # absorb rounding from ratios of float masses
            object.__setattr__(self, name, min(1.0, max(0.0, float(v))))


class MistakeStats(Mapping):
    def __init__(self, rows: Mapping):
        self._rows = {x: (r if isinstance(r, XStats) else XStats(*r)) for x, r in rows.items()}
        total = math.fsum(r.p for r in self._rows.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"p_x sums to {total}, not 1")

    def __getitem__(self, x) -> XStats:
        return self._rows[x]

    def __iter__(self):
        return iter(self._rows)

    def __len__(self):
        return len(self._rows)

    @property
    def support(self) -> tuple:
        return tuple(self._rows)

    def as_dict(self) -> dict:
        return {str(x): {"p": s.p, "h": s.h, "m_N": s.m_N, "m_H": s.m_H} for x, s in self._rows.items()}


@dataclass(frozen=True)
class ComplianceAssumptions:
    kappa: float
    epsilon: float = 1.0

    def __post_init__(self):
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        if not (0 < self.epsilon <= 1):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")


def mistake_stats(base: BaselineJoint) -> MistakeStats:
    rows = {}
    for x in base.support:
        cell = {(d, y): w for (xx, d, y), w in base.pmf.items() if xx == x}
        p = math.fsum(cell.values())
        if p <= 0:
            raise ValueError(f"characteristic {x!r} has zero mass")
        hired = math.fsum(w for (d, _), w in cell.items() if d is Decision.HIRE)
        passed = p - hired
        bad_hired = cell.get((Decision.HIRE, Outcome.BAD), 0.0)
        good_passed = cell.get((Decision.NOT_HIRE, Outcome.GOOD), 0.0)
        rows[x] = XStats(
            p=p,
            h=hired / p,
            m_N=good_passed / passed if passed > 0 else None,
            m_H=bad_hired / hired if hired > 0 else None,
        )
    return MistakeStats(rows)


# ---------------------------------------------------------------------------
# the rule


def condition_thresholds(spec: LossSpec, kappa: float) -> tuple[float, float]:
    """Mistake rates at which recommending N (against hires) or H (against passes) is certifiably safe."""
    return spec.c_I / (spec.c_I + kappa * spec.c_II), spec.c_II / (kappa * spec.c_I + spec.c_II)


def gains(s: XStats, spec: LossSpec, kappa: float) -> tuple[float, float]:
    """Guaranteed improvement of recommending (N, H); -inf where the branch was never observed."""
    g_n = -math.inf
    g_h = -math.inf
    if s.m_H is not None and s.h:
        g_n = ((spec.c_I + kappa * spec.c_II) * s.m_H - spec.c_I) * s.h
    if s.m_N is not None and s.h is not None and s.h < 1:
        g_h = ((kappa * spec.c_I + spec.c_II) * s.m_N - spec.c_II) * (1.0 - s.h)
    return g_n, g_h


def _lfm_rec(s: XStats, spec: LossSpec, kappa: float) -> Recommendation:
    thr_n, thr_h = condition_thresholds(spec, kappa)
    cond_n = s.m_H is not None and bool(s.h) and s.m_H >= thr_n - TIE_TOL
    cond_h = s.m_N is not None and s.h is not None and s.h < 1 and s.m_N >= thr_h - TIE_TOL
    if cond_n and cond_h:
        g_n, g_h = gains(s, spec, kappa)
        return N if g_n >= g_h else H
    if cond_n:
        return N
    if cond_h:
        return H
    return NONE


def lfm_policy(stats: MistakeStats, spec: LossSpec, kappa: float) -> Policy:
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    return Policy(stats.support, tuple(_lfm_rec(stats[x], spec, kappa) for x in stats.support))


def mistakes_rule(stats: MistakeStats, spec: LossSpec) -> Policy:
    """The uncorrelated-compliance rule: recommend against any decision that errs at least break-even often."""
    thr_n = spec.c_I / (spec.c_I + spec.c_II)
    thr_h = spec.c_II / (spec.c_I + spec.c_II)
    recs = []
    for x in stats.support:
        s = stats[x]
        cond_n = s.m_H is not None and bool(s.h) and s.m_H >= thr_n - TIE_TOL
        cond_h = s.m_N is not None and s.h is not None and s.h < 1 and s.m_N >= thr_h - TIE_TOL
        if cond_n and cond_h:
            g_n, g_h = gains(s, spec, 1.0)
            recs.append(N if g_n >= g_h else H)
        else:
            recs.append(N if cond_n else H if cond_h else NONE)
    return Policy(stats.support, tuple(recs))


# ---------------------------------------------------------------------------
# kappa sweeps


class KappaThresholds(NamedTuple):
    kappa_N: float | None
    kappa_H: float | None
    kappa_crossover: float | None


def kappa_thresholds(stats: MistakeStats, spec: LossSpec, x) -> KappaThresholds:
    s = stats[x]
    k_n = k_h = None
    # a vanishing mistake rate never activates its condition
    if s.m_H is not None and s.h and spec.c_II * s.m_H > 0:
        k_n = spec.c_I * (1.0 - s.m_H) / (spec.c_II * s.m_H)
    if s.m_N is not None and s.h is not None and s.h < 1 and spec.c_I * s.m_N > 0:
        k_h = spec.c_II * (1.0 - s.m_N) / (spec.c_I * s.m_N)
    cross = None
    if k_n is not None and k_h is not None:
        # gain difference is affine in kappa: a + b * kappa
        hn, hh = s.h, 1.0 - s.h
        a = (spec.c_I * s.m_H - spec.c_I) * hn - (spec.c_II * s.m_N - spec.c_II) * hh
        b = spec.c_II * s.m_H * hn - spec.c_I * s.m_N * hh
        start = max(k_n, k_h)
        if b != 0:
            root = -a / b
            if root > start:
                cross = root
    return KappaThresholds(k_n, k_h, cross)


class Band(NamedTuple):
    x: object
    start: float
    end: float
    rec: Recommendation


def sweep(stats: MistakeStats, spec: LossSpec, kappa_min: float = 0.0, kappa_max: float = 10.0) -> list[Band]:
    """Maximal kappa intervals on which each x's recommendation is constant.

    Change points come from the closed-form thresholds, never from sampling;
    each band's label is read at its midpoint.
    """
    if not 0 <= kappa_min < kappa_max:
        raise ValueError("need 0 <= kappa_min < kappa_max")
    bands = []
    for x in stats.support:
        cuts = {kappa_min, kappa_max}
        cuts.update(k for k in kappa_thresholds(stats, spec, x) if k is not None and kappa_min < k < kappa_max)
        pts = sorted(cuts)
        merged: list[Band] = []
        for lo, hi in zip(pts, pts[1:]):
            r = _lfm_rec(stats[x], spec, 0.5 * (lo + hi))
            if merged and merged[-1].rec is r:
                merged[-1] = merged[-1]._replace(end=hi)
            else:
                merged.append(Band(x, lo, hi, r))
        bands += merged
    return bands


# ---------------------------------------------------------------------------
# worst-case guarantees


def _cells(stats: MistakeStats, spec: LossSpec, kappa: float):
    """Per x and directional r: (mass of the overridden decision, mistake rate, cost gained, cost risked, bracket)."""
    out = {}
    for x in stats.support:
        s = stats[x]
        cells = {}
        if s.h and s.m_H is not None:
            bracket = spec.c_I - (spec.c_I + kappa * spec.c_II) * s.m_H
            cells[N] = (s.p * s.h, s.m_H, spec.c_II, spec.c_I, bracket)
        else:
            cells[N] = (0.0, 0.0, spec.c_II, spec.c_I, 0.0)
        if s.h is not None and s.h < 1 and s.m_N is not None:
            bracket = spec.c_II - (kappa * spec.c_I + spec.c_II) * s.m_N
            cells[H] = (s.p * (1.0 - s.h), s.m_N, spec.c_I, spec.c_II, bracket)
        else:
            cells[H] = (0.0, 0.0, spec.c_I, spec.c_II, 0.0)
        out[x] = cells
    return out


def bound_table(stats: MistakeStats, spec: LossSpec, assumptions: ComplianceAssumptions) -> np.ndarray:
    """``[i, r]`` contribution of x_i to the analytic worst-case excess when recommending r."""
    k, eps = assumptions.kappa, assumptions.epsilon
    table = np.zeros((len(stats), 3))
    for i, (x, cells) in enumerate(_cells(stats, spec, k).items()):
        for r, (w, m, _, _, bracket) in cells.items():
            if w == 0:
                continue
            if k > 0:
                table[i, r] = eps / k * bracket * w
            elif m >= 1.0 - TIE_TOL:
                # kappa -> 0 limit of the scaled bracket at a certain mistake
                table[i, r] = -eps * w * (spec.c_II if r is N else spec.c_I)
            else:
                table[i, r] = math.inf
    return table


def worst_case_excess(
    policy: Policy, stats: MistakeStats, spec: LossSpec, assumptions: ComplianceAssumptions
) -> float:
    """Analytic upper bound on E[loss(assisted)] - E[loss(unassisted)] over compatible distributions.

    At ``kappa = 0`` the bound keeps only certain-mistake cells; any other
    recommendation makes it infinite.
    """
    _check_support(policy, stats.support)
    table = bound_table(stats, spec, assumptions)
    idx = {x: i for i, x in enumerate(stats.support)}
    return math.fsum(table[idx[x], r] for x, r in policy.items())


def _cell_max(w, m, c_gain, c_risk, kappa, eps) -> float:
    """Exact adversary maximum of w * (-c_gain * m * q1 + c_risk * (1 - m) * q0) over compliant (q1, q0)."""
    if w == 0:
        return 0.0
    a = -c_gain * m  # coefficient of q1 (<= 0)
    b = c_risk * (1.0 - m)  # coefficient of q0 (>= 0)
    if kappa == 0:
        q0s = (1.0,)
    else:
        q0s = (0.0, min(1.0, eps / kappa), min(1.0, 1.0 / kappa))
    best = -math.inf
    for q0 in q0s:
        q1 = max(eps, kappa * q0)
        if q1 <= 1.0 + 1e-15:
            best = max(best, a * q1 + b * q0)
    return w * best


def adversary_table(stats: MistakeStats, spec: LossSpec, assumptions: ComplianceAssumptions) -> np.ndarray:
    k, eps = assumptions.kappa, assumptions.epsilon
    table = np.zeros((len(stats), 3))
    for i, cells in enumerate(_cells(stats, spec, k).values()):
        for r, (w, m, c_gain, c_risk, _) in cells.items():
            table[i, r] = _cell_max(w, m, c_gain, c_risk, k, eps)
    return table


def adversary_excess(
    policy: Policy, stats: MistakeStats, spec: LossSpec, assumptions: ComplianceAssumptions
) -> float:
    """Exact worst-case excess loss, solved per cell in closed form.

    Equals :func:`worst_case_excess` whenever every recommended cell has a
    non-positive bracket and ``kappa >= epsilon``.
    """
    _check_support(policy, stats.support)
    table = adversary_table(stats, spec, assumptions)
    idx = {x: i for i, x in enumerate(stats.support)}
    return math.fsum(table[idx[x], r] for x, r in policy.items())


def baseline_loss(base: BaselineJoint, spec: LossSpec) -> float:
    return math.fsum(w * loss(spec, y, d) for (_, d, y), w in base.pmf.items())


@dataclass
class OracleResult:
    argmin: list
    value: float  # minimax excess over the unassisted loss
    baseline_loss: float
    per_policy: list  # (policy, adversary max excess)
    grid_step: float

    @property
    def minimax_loss(self) -> float:
        return self.baseline_loss + self.value


def grid_cell_max(w, m, c_gain, c_risk, kappa, eps, step) -> float:
    """Brute-force adversary over a (q1, q0) grid; probabilities restricted to multiples of ``step``."""
    if w == 0:
        return 0.0
    n = int(round(1.0 / step))
    q = np.linspace(0.0, 1.0, n + 1) if abs(n * step - 1.0) < 1e-12 else np.append(np.arange(0.0, 1.0, step), 1.0)
    q1, q0 = np.meshgrid(q, q, indexing="ij")
    feasible = (q1 >= eps - 1e-12) & (q1 >= kappa * q0 - 1e-12)
    vals = w * (-c_gain * m * q1 + c_risk * (1.0 - m) * q0)
    return float(vals[feasible].max())


def grid_slack(stats: MistakeStats, spec: LossSpec, policy: Policy, step: float) -> float:
    """Largest gap between grid and continuous adversary for one policy (one step per coordinate)."""
    cells = _cells(stats, spec, 1.0)
    total = 0.0
    for x, r in policy.items():
        if r is NONE:
            continue
        w, m, c_gain, c_risk, _ = cells[x][r]
        total += step * w * (c_gain * m + c_risk * (1.0 - m))
    return total


def minimax_grid_oracle(
    base: BaselineJoint,
    spec: LossSpec,
    assumptions: ComplianceAssumptions,
    grid_step: float = 0.05,
    allowed: Sequence[Policy] | None = None,
) -> OracleResult:
    """Min over policies of the grid adversary's max excess loss.

    The adversary picks, independently for every (x, d0, r) cell with r != d0,
    compliance probabilities given a mistake (q1) and given none (q0), subject
    to ``q1 >= epsilon`` and ``q1 >= kappa * q0``; active decisions equal the
    unassisted ones. Cells with r = d0 or r = none contribute nothing.
    """
    if len(base.support) > ORACLE_CAP:
        raise CapExceeded(f"oracle supports at most {ORACLE_CAP} characteristic values, got {len(base.support)}")
    if not 0 < grid_step <= 0.5:
        raise ValueError("grid_step must lie in (0, 0.5]")
    stats = mistake_stats(base)
    k, eps = assumptions.kappa, assumptions.epsilon
    cells = _cells(stats, spec, k)
    cell_max = {
        (x, r): grid_cell_max(w, m, cg, cr, k, eps, grid_step)
        for x, cs in cells.items()
        for r, (w, m, cg, cr, _) in cs.items()
    }
    if allowed is None:
        candidates = list(enumerate_policies(stats.support, cap=ORACLE_CAP))
    else:
        candidates = list(allowed)
        if k > 0:
            lfm = lfm_policy(stats, spec, k)
            if lfm not in candidates:
                warnings.warn("policy allow-list excludes the learning-from-mistakes policy; adding it", stacklevel=2)
                candidates.append(lfm)
    per_policy = []
    for p in candidates:
        v = math.fsum(cell_max[(x, r)] for x, r in p.items() if r is not NONE)
        per_policy.append((p, v))
    best = min(v for _, v in per_policy)
    arg = [p for p, v in per_policy if v <= best + ARGMIN_TOL]
    return OracleResult(arg, best, baseline_loss(base, spec), per_policy, grid_step)


def exhaustive_bound_argmin(
    stats: MistakeStats, spec: LossSpec, assumptions: ComplianceAssumptions, cap: int = 12
) -> tuple[list[Policy], float]:
    if len(stats) > cap:
        raise CapExceeded(f"support of size {len(stats)} exceeds enumeration cap {cap}")
    return argmin_policies(all_sums(bound_table(stats, spec, assumptions)), stats.support)


# ---------------------------------------------------------------------------


def assumption2_bound_check(
    policy: Policy, pop: PopulationDistribution, model: AgentModel, baseline_model: AgentModel, spec: LossSpec
) -> float | None:
    """E[loss(active) - loss(unassisted) | ignored or no recommendation]; None if that event has no mass.

    A model satisfies the active-vs-baseline quality assumption iff this is <= 0.
    """
    from .decomposition import _expected_loss

    _check_support(policy, pop.support)
    recs = dict(policy.items())
    num, den = [], []
    for (x, u, y), w in pop.pmf.items():
        r = recs[x]
        p_event = 1.0 if r is NONE else 1.0 - model.comply_prob(u, r)
        if p_event == 0:
            continue
        diff = _expected_loss(spec, y, model.hire_prob(u)) - _expected_loss(spec, y, baseline_model.hire_prob(u))
        num.append(w * p_event * diff)
        den.append(w * p_event)
    mass = math.fsum(den)
    if mass <= 0:
        return None
    return math.fsum(num) / mass
