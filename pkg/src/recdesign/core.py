"""Decisions, outcomes, recommendations, loss, and exact finite distributions."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable, Iterator, Mapping

NORMALIZATION_TOL = 1e-12


class Outcome(enum.Enum):
    GOOD = "G"
    BAD = "B"

    @classmethod
    def parse(cls, token: str) -> "Outcome":
        try:
            return cls(token.strip().upper())
        except ValueError:
            raise ValueError(f"unknown outcome token {token!r} (expected G or B)") from None


class Decision(enum.IntEnum):
    # NOT_HIRE < HIRE is the monotonicity order
    NOT_HIRE = 0
    HIRE = 1

    @property
    def code(self) -> str:
        return "H" if self is Decision.HIRE else "N"

    @classmethod
    def parse(cls, token: str) -> "Decision":
        t = token.strip().upper()
        if t == "H":
            return cls.HIRE
        if t == "N":
            return cls.NOT_HIRE
        raise ValueError(f"unknown decision token {token!r} (expected N or H)")


class Recommendation(enum.IntEnum):
    # enumeration order N < none < H
    NOT_HIRE = 0
    NONE = 1
    HIRE = 2

    @property
    def code(self) -> str:
        return {0: "N", 1: "none", 2: "H"}[int(self)]

    @property
    def decision(self) -> Decision | None:
        """The decision a complier adopts, or None for no recommendation."""
        if self is Recommendation.NONE:
            return None
        return Decision.HIRE if self is Recommendation.HIRE else Decision.NOT_HIRE

    @classmethod
    def parse(cls, token: str) -> "Recommendation":
        t = token.strip()
        if t.upper() == "N":
            return cls.NOT_HIRE
        if t.upper() == "H":
            return cls.HIRE
        if t.lower() in ("none", "0", "-", "∅", ""):
            return cls.NONE
        raise ValueError(f"unknown recommendation token {token!r} (expected N, none or H)")

    @classmethod
    def from_decision(cls, d: Decision) -> "Recommendation":
        return cls.HIRE if d is Decision.HIRE else cls.NOT_HIRE


N, NONE, H = Recommendation.NOT_HIRE, Recommendation.NONE, Recommendation.HIRE


@dataclass(frozen=True)
class LossSpec:
    """Costs of the two kinds of error.

    ``c_I`` is paid for not hiring a good worker, ``c_II`` for hiring a bad one.
    """

    c_I: float = 1.0
    c_II: float = 1.0

    def __post_init__(self):
        for name in ("c_I", "c_II"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")

    def scaled(self, factor: float) -> "LossSpec":
        return LossSpec(self.c_I * factor, self.c_II * factor)

    @classmethod
    def parse(cls, text: str) -> "LossSpec":
        parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
        if len(parts) != 2:
            raise ValueError(f"costs must be 'c_I,c_II', got {text!r}")
        return cls(float(parts[0]), float(parts[1]))


def loss(spec: LossSpec, y: Outcome, d: Decision) -> float:
    if y is Outcome.GOOD and d is Decision.NOT_HIRE:
        return spec.c_I
    if y is Outcome.BAD and d is Decision.HIRE:
        return spec.c_II
    return 0.0


def correct_decision(y: Outcome) -> Decision:
    return Decision.HIRE if y is Outcome.GOOD else Decision.NOT_HIRE


class FinitePmf(Mapping):
    """An exact probability mass function over a finite list of distinct atoms.

    Atoms keep insertion order. Zero-weight atoms are allowed; duplicates are
    rejected rather than merged.
    """

    __slots__ = ("_atoms", "_weights", "_index")

    def __init__(self, items: Iterable[tuple[Hashable, float]]):
        atoms: list = []
        weights: list[float] = []
        index: dict = {}
        for atom, w in items:
            if atom in index:
                raise ValueError(f"duplicate atom {atom!r}")
            w = float(w)
            if not math.isfinite(w) or w < 0:
                raise ValueError(f"weight for {atom!r} must be finite and >= 0, got {w}")
            index[atom] = len(atoms)
            atoms.append(atom)
            weights.append(w)
        if not atoms:
            raise ValueError("pmf needs at least one atom")
        total = math.fsum(weights)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        self._atoms = tuple(atoms)
        self._weights = tuple(weights)
        self._index = index

    @classmethod
    def from_counts(cls, counts: Iterable[tuple[Hashable, float]]) -> "FinitePmf":
        items = list(counts)
        total = math.fsum(c for _, c in items)
        if total <= 0:
            raise ValueError("counts must have positive total")
        return cls((a, c / total) for a, c in items)

    @classmethod
    def uniform(cls, atoms: Iterable[Hashable]) -> "FinitePmf":
        atoms = list(atoms)
        return cls((a, 1.0 / len(atoms)) for a in atoms)

    def __getitem__(self, atom):
        return self._weights[self._index[atom]]

    def __iter__(self) -> Iterator:
        return iter(self._atoms)

    def __len__(self) -> int:
        return len(self._atoms)

    def items(self):
        return zip(self._atoms, self._weights)

    @property
    def atoms(self) -> tuple:
        return self._atoms

    def expectation(self, fn: Callable[[Any], float]) -> float:
        return pmf_expectation(self, fn)

    def prob(self, event: Callable[[Any], bool]) -> float:
        return math.fsum(w for a, w in self.items() if event(a))

    def marginal(self, key: Callable[[Any], Hashable]) -> "FinitePmf":
        acc: dict = {}
        for a, w in self.items():
            k = key(a)
            acc.setdefault(k, []).append(w)
        return FinitePmf((k, math.fsum(ws)) for k, ws in acc.items())

    def __repr__(self) -> str:
        body = ", ".join(f"{a!r}: {w:.6g}" for a, w in self.items())
        return f"FinitePmf({{{body}}})"


def pmf_expectation(pmf: FinitePmf, fn: Callable[[Any], float]) -> float:
    # fsum keeps the result independent of atom order
    return math.fsum(w * fn(a) for a, w in pmf.items())
