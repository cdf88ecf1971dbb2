"""Estimating mistake statistics and policies from finite unassisted-decision logs."""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import Decision, LossSpec, Outcome, Recommendation
from .lfm import MistakeStats, XStats, gains
from .policies import ARGMIN_TOL, CapExceeded, Policy, argmin_policies, all_sums, DEFAULT_CAP

N, NONE, H = Recommendation.NOT_HIRE, Recommendation.NONE, Recommendation.HIRE

LOG_COLUMNS = ("subject_id", "x", "u", "y", "d0")


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LogRecord:
    subject_id: str
    x: str
    u: str | None
    y: Outcome
    d0: Decision


@dataclass
class DecisionLog:
    records: list[LogRecord]
    support: tuple = ()

    def __post_init__(self):
        if not self.support:
            self.support = tuple(dict.fromkeys(r.x for r in self.records))
        allowed = set(self.support)
        for i, r in enumerate(self.records):
            if r.x not in allowed:
                raise ValueError(f"record {i}: characteristic {r.x!r} outside declared support {list(self.support)}")

    def __len__(self):
        return len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in self.records:
            w.writerow([r.subject_id, r.x, r.u or "", r.y.value, r.d0.code])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, support: Sequence | None = None) -> "DecisionLog":
        reader = csv.DictReader(io.StringIO(text))
        missing = [c for c in LOG_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise LogFormatError(f"line 1: missing columns {missing}")
        records = []
        for line, row in enumerate(reader, start=2):
            try:
                y = Outcome.parse(row["y"] or "")
                d0 = Decision.parse(row["d0"] or "")
            except ValueError as e:
                raise LogFormatError(f"line {line}: {e}") from None
            if not row["x"]:
                raise LogFormatError(f"line {line}: empty x")
            records.append(LogRecord(row["subject_id"], row["x"], row["u"] or None, y, d0))
        if support is not None:
            bad = [(i + 2, r.x) for i, r in enumerate(records) if r.x not in set(support)]
            if bad:
                raise LogFormatError(f"line {bad[0][0]}: characteristic {bad[0][1]!r} outside declared support")
        return cls(records, tuple(support) if support is not None else ())


class ClassKind(enum.Enum):
    ALL_MAPS = "AllMaps"
    EXPLICIT_LIST = "ExplicitList"


@dataclass(frozen=True)
class PolicyClass:
    kind: ClassKind = ClassKind.ALL_MAPS
    members: tuple = field(default=())

    def __post_init__(self):
        if self.kind is ClassKind.EXPLICIT_LIST and not self.members:
            raise ValueError("explicit policy class is empty")

    @classmethod
    def explicit(cls, members: Iterable[Policy]) -> "PolicyClass":
        return cls(ClassKind.EXPLICIT_LIST, tuple(members))


def _rate(num: int, den: int, s: float) -> float | None:
    if den + 2 * s == 0:
        return None
    return (num + s) / (den + 2 * s)


def fit_mistake_stats(log: DecisionLog, smoothing: float = 0.0) -> MistakeStats:
    if not log.records:
        raise ValueError("empty decision log")
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    counts = {x: np.zeros((2, 2), dtype=np.int64) for x in log.support}  # [d0, y is Good]
    for r in log.records:
        counts[r.x][int(r.d0), int(r.y is Outcome.GOOD)] += 1
    n = len(log.records)
    rows = {}
    for x in log.support:
        c = counts[x]
        total = int(c.sum())
        if total == 0:
            # unseen x: no mass, nothing is defined
            rows[x] = XStats(0.0, None, None, None)
            continue
        hired = int(c[1].sum())
        passed = int(c[0].sum())
        rows[x] = XStats(
            p=total / n,
            h=_rate(hired, total, smoothing),
            m_N=_rate(int(c[0, 1]), passed, smoothing),
            m_H=_rate(int(c[1, 0]), hired, smoothing),
        )
    return MistakeStats(rows)


_PLUGIN_ORDER = (N, H, NONE)


def plugin_policy(stats: MistakeStats, spec: LossSpec, kappa: float) -> Policy:
    """Argmax of the estimated gains of N, H and none (gain 0); ties prefer N, then H."""
    recs = []
    for x in stats.support:
        g_n, g_h = gains(stats[x], spec, kappa)
        vals = {N: g_n, H: g_h, NONE: 0.0}
        best = max(vals.values())
        recs.append(next(r for r in _PLUGIN_ORDER if vals[r] >= best))
    return Policy(stats.support, tuple(recs))


def erm_table(log: DecisionLog, spec: LossSpec, kappa: float) -> np.ndarray:
    """Per-x sample-mean contribution of each recommendation to the cost-weighted objective.

    Recommending H costs c_II for every pass it overrides and earns
    (kappa c_I + c_II) for every good worker passed over; N is symmetric.
    """
    idx = {x: i for i, x in enumerate(log.support)}
    table = np.zeros((len(log.support), 3))
    for r in log.records:
        i = idx[r.x]
        m_i = r.y is Outcome.GOOD and r.d0 is Decision.NOT_HIRE
        m_ii = r.y is Outcome.BAD and r.d0 is Decision.HIRE
        table[i, H] += spec.c_II * (r.d0 is Decision.NOT_HIRE) - (kappa * spec.c_I + spec.c_II) * m_i
        table[i, N] += spec.c_I * (r.d0 is Decision.HIRE) - (spec.c_I + kappa * spec.c_II) * m_ii
    return table / len(log.records)


def cost_weighted_erm(
    log: DecisionLog, cls: PolicyClass, spec: LossSpec, kappa: float, cap: int = DEFAULT_CAP
) -> tuple[list[Policy], float]:
    if not log.records:
        raise ValueError("empty decision log")
    table = erm_table(log, spec, kappa)
    if cls.kind is ClassKind.ALL_MAPS:
        if len(log.support) > cap:
            raise CapExceeded(f"support of size {len(log.support)} exceeds enumeration cap {cap}")
        return argmin_policies(all_sums(table), log.support)
    idx = {x: i for i, x in enumerate(log.support)}
    vals = [math.fsum(table[idx[x], r] for x, r in p.items()) for p in cls.members]
    best = min(vals)
    return [p for p, v in zip(cls.members, vals) if v <= best + ARGMIN_TOL], best


def sample_log(base, n: int, rng: np.random.Generator, subject_size: int = 25) -> DecisionLog:
    """Draw ``n`` i.i.d. records from a BaselineJoint; subject ids group consecutive records."""
    atoms = list(base.pmf.atoms)
    w = np.array([base.pmf[a] for a in atoms])
    draws = rng.choice(len(atoms), size=n, p=w / w.sum())
    recs = [
        LogRecord(str(i // subject_size), str(atoms[k][0]), None, atoms[k][2], atoms[k][1]) for i, k in enumerate(draws)
    ]
    return DecisionLog(recs, tuple(str(x) for x in base.support))
