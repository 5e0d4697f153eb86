"""Scoring of answer predictions: OA, AA, per-question accuracy, confusion."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BasisMismatch, DuplicateTripleId, EmptyGold, MissingPrediction, ParseError, UnknownQid, UnknownTripleId
from .qa_synth import Registry, Triple

log = logging.getLogger(__name__)

OTHER = "<other/missing>"
LENIENT = "lenient"
STRICT = "strict"


@dataclass(frozen=True)
class Prediction:
    triple_id: str
    answer: str


def normalize(answer: str | None) -> str | None:
    return None if answer is None else answer.strip().casefold()


def gold_digest(gold: Iterable[Triple]) -> str:
    h = hashlib.sha256()
    for t in sorted(gold, key=lambda t: t.triple_id):
        h.update(f"{t.triple_id}\t{t.qid}\t{t.answer}\n".encode())
    return h.hexdigest()


@dataclass
class ConfusionMatrix:
    qid: int
    labels: list[str]  # row labels (gold); columns are labels + [OTHER]
    counts: np.ndarray

    @property
    def columns(self) -> list[str]:
        return self.labels + [OTHER]

    def to_dict(self) -> dict:
        return {"labels": self.labels, "columns": self.columns, "counts": self.counts.tolist()}


@dataclass
class MetricsReport:
    oa: float
    aa: float
    per_qid: dict[int, tuple[int, int, float]]
    confusion: dict[int, ConfusionMatrix] = field(default_factory=dict)
    unmatched_predictions: int = 0
    missing_predictions: int = 0
    basis: str = ""

    def to_dict(self) -> dict:
        return {
            "oa": self.oa,
            "aa": self.aa,
            "per_qid": {str(q): {"correct": c, "total": n, "accuracy": a} for q, (c, n, a) in sorted(self.per_qid.items())},
            "confusion": {str(q): m.to_dict() for q, m in sorted(self.confusion.items())},
            "unmatched_predictions": self.unmatched_predictions,
            "missing_predictions": self.missing_predictions,
            "basis": self.basis,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "correct", "total", "accuracy"])
        for q, (c, n, a) in sorted(self.per_qid.items()):
            writer.writerow([f"Q{q}", c, n, f"{a:.2f}"])
        writer.writerow(["OA", "", "", f"{self.oa:.2f}"])
        writer.writerow(["AA", "", "", f"{self.aa:.2f}"])
        return buf.getvalue()


def _index_predictions(preds: Iterable[Prediction]) -> dict[str, str]:
    out: dict[str, str] = {}
    for p in preds:
        if p.triple_id in out:
            raise DuplicateTripleId(p.triple_id)
        out[p.triple_id] = p.answer
    return out


def _answer_labels(gold: Sequence[Triple], qid: int, registry: Registry | None) -> list[str]:
    if registry is not None:
        try:
            return [normalize(a) for a in registry.template(qid).answer_domain]
        except KeyError:
            pass
    return sorted({normalize(t.answer) for t in gold if t.qid == qid})


def confusion(
    gold: Sequence[Triple],
    preds: Iterable[Prediction] | dict[str, str],
    qid: int,
    registry: Registry | None = None,
) -> ConfusionMatrix:
    """Rows are gold answers, columns predicted answers plus one other/missing column."""
    pred_map = preds if isinstance(preds, dict) else _index_predictions(preds)
    rows = [t for t in gold if t.qid == qid]
    if not rows:
        raise UnknownQid(qid)
    labels = _answer_labels(gold, qid, registry)
    for t in rows:
        if normalize(t.answer) not in labels:
            labels.append(normalize(t.answer))
    index = {a: i for i, a in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels) + 1), dtype=np.int64)
    for t in rows:
        p = normalize(pred_map.get(t.triple_id))
        counts[index[normalize(t.answer)], index.get(p, len(labels))] += 1
    return ConfusionMatrix(qid, labels, counts)


def score(
    gold: Sequence[Triple],
    preds: Iterable[Prediction],
    policy: str = LENIENT,
    registry: Registry | None = None,
) -> MetricsReport:
    if not gold:
        raise EmptyGold("no gold triples")
    pred_map = _index_predictions(preds)
    gold_ids = {t.triple_id for t in gold}
    if len(gold_ids) != len(gold):
        raise DuplicateTripleId("duplicate triple_id in gold")
    unmatched = sorted(set(pred_map) - gold_ids)
    missing = sorted(gold_ids - set(pred_map))
    if policy == STRICT:
        if unmatched:
            raise UnknownTripleId(f"{len(unmatched)} prediction(s) match no gold triple, e.g. {unmatched[0]}")
        if missing:
            raise MissingPrediction(f"{len(missing)} gold triple(s) without prediction, e.g. {missing[0]}")
    elif missing:
        log.warning("%d gold triples have no prediction; counted as incorrect", len(missing))

    tally: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for t in gold:
        ok = normalize(pred_map.get(t.triple_id)) == normalize(t.answer)
        tally[t.qid][0] += int(ok)
        tally[t.qid][1] += 1

    per_qid = {q: (c, n, 100.0 * c / n) for q, (c, n) in sorted(tally.items())}
    total_correct = sum(c for c, _, _ in per_qid.values())
    oa = 100.0 * total_correct / len(gold)
    aa = float(np.mean([a for _, _, a in per_qid.values()]))
    return MetricsReport(
        oa=round(oa, 2),
        aa=round(aa, 2),
        per_qid={q: (c, n, round(a, 2)) for q, (c, n, a) in per_qid.items()},
        confusion={q: confusion(gold, pred_map, q, registry) for q in per_qid},
        unmatched_predictions=len(unmatched),
        missing_predictions=len(missing),
        basis=gold_digest(gold),
    )


@dataclass
class ReportDelta:
    oa: float
    aa: float
    per_qid: dict[int, float]

    def rows(self) -> list[tuple[str, str]]:
        def fmt(x):
            return f"{x:+.2f}"

        out = [(f"Q{q}", fmt(d)) for q, d in sorted(self.per_qid.items())]
        return out + [("OA", fmt(self.oa)), ("AA", fmt(self.aa))]


def compare_reports(a: MetricsReport, b: MetricsReport) -> ReportDelta:
    """Deltas b - a."""
    if a.basis != b.basis:
        raise BasisMismatch(f"{a.basis[:12]} != {b.basis[:12]}")
    qids = sorted(set(a.per_qid) | set(b.per_qid))
    per_qid = {q: round(b.per_qid.get(q, (0, 0, 0.0))[2] - a.per_qid.get(q, (0, 0, 0.0))[2], 2) for q in qids}
    return ReportDelta(oa=round(b.oa - a.oa, 2), aa=round(b.aa - a.aa, 2), per_qid=per_qid)


def read_predictions(path: Path) -> list[Prediction]:
    """One JSON object per line with ``triple_id`` and ``answer``."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(Prediction(str(rec["triple_id"]), str(rec["answer"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
    return out


def write_predictions(preds: Iterable[Prediction], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(json.dumps({"answer": p.answer, "triple_id": p.triple_id}, sort_keys=True) + "\n")
