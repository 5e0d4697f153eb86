"""Train/val/test splitting and balanced subset construction."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInput, MissingQid
from .qa_synth import CATEGORIES, Triple

SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.70, 0.15, 0.15)


@dataclass
class SplitAssignment:
    assignment: dict[str, str]
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0

    def members(self, split: str) -> list[str]:
        return sorted(k for k, v in self.assignment.items() if v == split)

    def sizes(self) -> dict[str, int]:
        c = Counter(self.assignment.values())
        return {s: c.get(s, 0) for s in SPLITS}


def apportion(n: int, ratios: Sequence[float], rng: np.random.Generator) -> list[int]:
    """Largest-remainder apportionment of ``n`` units; ties broken by ``rng``."""
    fracs = [Fraction(str(r)) for r in ratios]
    if sum(fracs) != 1:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    quotas = [f * n for f in fracs]
    counts = [math.floor(q) for q in quotas]
    left = n - sum(counts)
    tiebreak = rng.permutation(len(ratios))
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), int(tiebreak[i])))
    for i in order[:left]:
        counts[i] += 1
    return counts


def split(groups: Iterable[str], ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0) -> SplitAssignment:
    """Assign raw image groups to splits. Everything derived from one raw image
    shares its group's split."""
    ids = sorted(set(groups))
    if not ids:
        raise EmptyInput("nothing to split")
    rng = np.random.default_rng(seed)
    counts = apportion(len(ids), ratios, rng)
    order = rng.permutation(len(ids))
    assignment = {}
    pos = 0
    for name, count in zip(SPLITS, counts):
        for idx in order[pos : pos + count]:
            assignment[ids[idx]] = name
        pos += count
    return SplitAssignment(assignment, tuple(ratios), seed)


# -- balancing --------------------------------------------------------------


@dataclass
class BalanceSpec:
    tolerance: float = 0.02
    per_qid_target: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


def answer_cap(target: int, n_answers: int, tolerance: float) -> int:
    return math.floor(math.ceil(target / n_answers) * (1 + tolerance))


def balanced_capacity(answer_counts: Sequence[int], tolerance: float) -> int:
    """Largest n such that n triples can be drawn with every answer under its cap."""
    k = len(answer_counts)
    best = 0
    for n in range(1, sum(answer_counts) + 1):
        cap = answer_cap(n, k, tolerance)
        if sum(min(c, cap) for c in answer_counts) >= n:
            best = n
    return best


def chi_square(counts: dict[str, int], answers: Sequence[str]) -> float:
    """Pearson statistic of an answer histogram against uniform over ``answers``."""
    total = sum(counts.get(a, 0) for a in answers)
    if total == 0 or not answers:
        return 0.0
    expected = total / len(answers)
    return sum((counts.get(a, 0) - expected) ** 2 / expected for a in answers)


def balance(triples: Sequence[Triple], spec: BalanceSpec, qids: Sequence[int] | None = None) -> list[Triple]:
    """Balanced subset: a common per-qid count and capped, inverse-frequency
    weighted answers inside every qid.

    Without an explicit target the common count is the smallest per-qid
    balanced capacity, so every qid can meet its answer caps.
    """
    by_qid: dict[int, list[Triple]] = defaultdict(list)
    for t in triples:
        by_qid[t.qid].append(t)
    if qids is not None:
        missing = sorted(set(qids) - set(by_qid))
        if missing:
            raise MissingQid(f"no triples for qid(s) {missing}")
    if not by_qid:
        raise MissingQid("no triples at all")

    answer_counts = {q: Counter(t.answer for t in ts) for q, ts in by_qid.items()}
    if spec.per_qid_target is not None:
        target = min(spec.per_qid_target, min(len(ts) for ts in by_qid.values()))
    else:
        target = min(balanced_capacity(sorted(c.values()), spec.tolerance) for c in answer_counts.values())

    rng = np.random.default_rng(spec.seed)
    chosen: list[Triple] = []
    for q in sorted(by_qid):
        pool = sorted(by_qid[q], key=lambda t: t.triple_id)
        counts = answer_counts[q]
        cap = answer_cap(target, len(counts), spec.tolerance)
        # cap can be infeasible under an explicit target; raise it to the water level
        while sum(min(c, cap) for c in counts.values()) < target:
            cap += 1
        # Efraimidis-Spirakis keys u^(1/w) with w = 1 / count(answer)
        u = rng.random(len(pool))
        keys = np.array([u[i] ** counts[t.answer] for i, t in enumerate(pool)])
        taken: Counter = Counter()
        picked = []
        for i in np.argsort(-keys, kind="stable"):
            t = pool[i]
            if taken[t.answer] >= cap:
                continue
            taken[t.answer] += 1
            picked.append(t)
            if len(picked) == target:
                break
        chosen.extend(sorted(picked, key=lambda t: t.triple_id))
    return chosen


# -- reporting --------------------------------------------------------------


@dataclass
class DistributionReport:
    total: int = 0
    per_qid: dict[int, int] = field(default_factory=dict)
    per_answer: dict[int, dict[str, int]] = field(default_factory=dict)
    category_counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(CATEGORIES, 0))
    category_shares: dict[str, float] = field(default_factory=lambda: dict.fromkeys(CATEGORIES, 0.0))

    @property
    def qid_deviation(self) -> float:
        """max/min per-qid count minus one (0 for an empty report)."""
        if not self.per_qid:
            return 0.0
        return max(self.per_qid.values()) / min(self.per_qid.values()) - 1

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_qid": {str(q): n for q, n in sorted(self.per_qid.items())},
            "per_answer": {str(q): dict(sorted(a.items())) for q, a in sorted(self.per_answer.items())},
            "category_counts": self.category_counts,
            "category_shares": self.category_shares,
            "qid_deviation": self.qid_deviation,
        }


def distribution_report(triples: Iterable[Triple]) -> DistributionReport:
    report = DistributionReport()
    per_answer: dict[int, Counter] = defaultdict(Counter)
    for t in triples:
        report.total += 1
        per_answer[t.qid][t.answer] += 1
        report.category_counts[t.category] = report.category_counts.get(t.category, 0) + 1
    report.per_qid = {q: sum(c.values()) for q, c in sorted(per_answer.items())}
    report.per_answer = {q: dict(c) for q, c in sorted(per_answer.items())}
    if report.total:
        report.category_shares = {k: v / report.total for k, v in report.category_counts.items()}
    return report
