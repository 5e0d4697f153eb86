"""Question registry, tampering facts and triple synthesis."""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from . import rasterops
from .errors import InvalidRecord, MissingSlot, TemplateGap
from .tamper_engine import BLUR, COPY_MOVE, TamperRecord

UNTAMPERED = "untampered"
CATEGORIES = ("basic", "independent", "related")
TAMPER_TYPE_NAMES = {"gaussian": "gaussian-blur", "mosaic": "mosaic-blur", "daub": "daub"}


@dataclass(frozen=True)
class QuestionTemplate:
    qid: int
    category: str
    fact: str
    text_pattern: str
    answer_domain: tuple[str, ...]
    applicability: frozenset[str]


@dataclass(frozen=True)
class Registry:
    name: str
    templates: tuple[QuestionTemplate, ...]
    themes: tuple[str, ...]
    size_bins: tuple[tuple[float | None, str], ...]
    distance_bins: tuple[tuple[float | None, str], ...]
    enlarged_above: float
    shrunk_below: float

    def template(self, qid: int) -> QuestionTemplate:
        for t in self.templates:
            if t.qid == qid:
                return t
        raise KeyError(qid)

    @property
    def qids(self) -> list[int]:
        return [t.qid for t in self.templates]

    def applicable(self, kind: str) -> list[QuestionTemplate]:
        return [t for t in self.templates if kind in t.applicability]

    def category_counts(self, kind: str) -> dict[str, int]:
        counts = dict.fromkeys(CATEGORIES, 0)
        for t in self.applicable(kind):
            counts[t.category] += 1
        return counts


def parse_registry(doc: dict) -> Registry:
    thresholds = doc["thresholds"]
    size_bins = tuple((b[0], b[1]) for b in thresholds["size_bins"])
    distance_bins = tuple((b[0], b[1]) for b in thresholds["distance_bins"])
    expansions = {
        "$themes": list(doc.get("themes", [])),
        "$grid": list(rasterops.GRID_CELLS),
        "$directions": list(rasterops.DIRECTIONS),
        "$size_bins": [label for _, label in size_bins],
        "$distance_bins": [label for _, label in distance_bins],
    }
    templates = []
    for t in doc["templates"]:
        answers = t["answers"]
        if isinstance(answers, str):
            answers = expansions[answers]
        if not answers:
            raise ValueError(f"qid {t['qid']}: empty answer domain")
        if t["category"] not in CATEGORIES:
            raise ValueError(f"qid {t['qid']}: unknown category {t['category']!r}")
        templates.append(
            QuestionTemplate(
                qid=int(t["qid"]),
                category=t["category"],
                fact=t["fact"],
                text_pattern=t["text"],
                answer_domain=tuple(answers),
                applicability=frozenset(t["applies_to"]),
            )
        )
    qids = [t.qid for t in templates]
    if len(set(qids)) != len(qids):
        raise ValueError("duplicate qid in registry")
    rel = thresholds["size_relation"]
    return Registry(
        name=doc.get("name", "custom"),
        templates=tuple(templates),
        themes=tuple(doc.get("themes", [])),
        size_bins=size_bins,
        distance_bins=distance_bins,
        enlarged_above=float(rel["enlarged_above"]),
        shrunk_below=float(rel["shrunk_below"]),
    )


def load_registry_doc(kind_or_path: str | Path) -> dict:
    if str(kind_or_path) in ("cmqa", "tqa"):
        text = resources.files("tamperqa.data").joinpath(f"registry_{kind_or_path}.json").read_text()
    else:
        text = Path(kind_or_path).read_text()
    return json.loads(text)


@lru_cache(maxsize=None)
def _cached_registry(kind_or_path: str) -> Registry:
    return parse_registry(load_registry_doc(kind_or_path))


def load_registry(kind_or_path: str | Path = "cmqa") -> Registry:
    return _cached_registry(str(kind_or_path))


# -- facts ------------------------------------------------------------------


@dataclass(frozen=True)
class UntamperedItem:
    image_id: str
    theme: str | None = None


@dataclass(frozen=True)
class FactSheet:
    tampered: bool
    tamper_type: str
    object_class: str | None = None
    theme: str | None = None
    tmp_cell: str | None = None
    src_cell: str | None = None
    tmp_size_bin: str | None = None
    src_size_bin: str | None = None
    tmp_touches_border: bool | None = None
    single_in_class: bool | None = None
    direction_src_to_tmp: str | None = None
    distance_bin: str | None = None
    size_relation: str | None = None
    rotated: bool | None = None
    overlapping: bool | None = None

    def answer(self, fact: str) -> str | None:
        value = getattr(self, fact)
        if isinstance(value, bool):
            return "yes" if value else "no"
        return value


def bin_value(value: float, bins) -> str:
    for upper, label in bins:
        if upper is None or value < upper:
            return label
    raise ValueError("bins must end with an open upper bound")


def size_relation(scale: float, registry: Registry) -> str:
    if scale > registry.enlarged_above:
        return "enlarged"
    if scale < registry.shrunk_below:
        return "shrunk"
    return "unchanged"


def derive_facts(
    record: TamperRecord | UntamperedItem,
    registry: Registry | None = None,
    *,
    theme: str | None = None,
    class_instance_count: int | None = None,
) -> FactSheet:
    registry = registry or load_registry("cmqa")
    if isinstance(record, UntamperedItem):
        return FactSheet(tampered=False, tamper_type="none", theme=record.theme)
    if record.kind not in (COPY_MOVE, BLUR):
        raise InvalidRecord(f"unknown record kind {record.kind!r}")
    if not record.tmp_mask.any() or not record.src_mask.any():
        raise InvalidRecord(f"{record.record_id}: empty mask")

    h, w = record.tmp_mask.shape
    size = (w, h)
    tmp = rasterops.region_stats(record.tmp_mask)
    src = rasterops.region_stats(record.src_mask)
    common = dict(
        tampered=True,
        object_class=record.instance.class_label,
        theme=theme,
        tmp_cell=rasterops.grid_cell(tmp.centroid, size),
        tmp_size_bin=bin_value(tmp.area_px / (w * h), registry.size_bins),
        tmp_touches_border=rasterops.touches_border(record.tmp_mask),
        single_in_class=None if class_instance_count is None else class_instance_count == 1,
    )
    if record.kind == BLUR:
        if not (record.src_mask == record.tmp_mask).all():
            raise InvalidRecord(f"{record.record_id}: blur masks differ")
        return FactSheet(tamper_type=TAMPER_TYPE_NAMES[record.params.blur_kind], **common)

    try:
        heading = rasterops.direction(src.centroid, tmp.centroid)
    except Exception as exc:
        raise InvalidRecord(f"{record.record_id}: {exc}") from exc
    return FactSheet(
        tamper_type="copy-move",
        src_cell=rasterops.grid_cell(src.centroid, size),
        src_size_bin=bin_value(src.area_px / (w * h), registry.size_bins),
        direction_src_to_tmp=heading,
        distance_bin=bin_value(rasterops.normalized_distance(src.centroid, tmp.centroid, size), registry.distance_bins),
        size_relation=size_relation(record.params.scale, registry),
        rotated=record.params.rotation_deg != 0,
        overlapping=rasterops.overlap_fraction(record.src_mask, record.tmp_mask) > 0,
        **common,
    )


# -- triples ----------------------------------------------------------------


@dataclass(frozen=True)
class Triple:
    triple_id: str
    image_id: str
    qid: int
    category: str
    question_text: str
    answer: str

    def to_dict(self) -> dict:
        return {
            "triple_id": self.triple_id,
            "image_id": self.image_id,
            "qid": self.qid,
            "category": self.category,
            "question_text": self.question_text,
            "answer": self.answer,
        }


def triple_id_for(image_id: str, qid: int) -> str:
    return hashlib.sha1(f"{image_id}|{qid}".encode()).hexdigest()[:16]


def render_text(template: QuestionTemplate, facts: FactSheet) -> str:
    slots = {name for _, name, _, _ in string.Formatter().parse(template.text_pattern) if name}
    values = {}
    for name in slots:
        value = facts.answer(name) if hasattr(facts, name) else None
        if value is None:
            raise MissingSlot(f"qid {template.qid}: slot {name!r} not derivable")
        values[name] = value
    return template.text_pattern.format(**values)


def _kind_of(record) -> str:
    return UNTAMPERED if isinstance(record, UntamperedItem) else record.kind


def synthesize(
    record: TamperRecord | UntamperedItem,
    dataset_kind: str = "cmqa",
    *,
    item_id: str | None = None,
    theme: str | None = None,
    class_instance_count: int | None = None,
    registry: Registry | None = None,
) -> list[Triple]:
    """Triples for one output image, in qid order.

    Untampered images only get the tamper-presence question.
    """
    registry = registry or load_registry(dataset_kind)
    kind = _kind_of(record)
    facts = derive_facts(record, registry, theme=theme, class_instance_count=class_instance_count)
    item_id = item_id or record.image_id
    templates = registry.applicable(kind)
    if kind == UNTAMPERED:
        templates = [t for t in templates if t.fact == "tampered"]
    triples = []
    for t in templates:
        answer = facts.answer(t.fact)
        if answer is None:
            raise TemplateGap(f"{item_id}: qid {t.qid} ({t.fact}) has no derivable answer")
        if answer not in t.answer_domain:
            raise TemplateGap(f"{item_id}: answer {answer!r} outside domain of qid {t.qid}")
        triples.append(
            Triple(
                triple_id=triple_id_for(item_id, t.qid),
                image_id=item_id,
                qid=t.qid,
                category=t.category,
                question_text=render_text(t, facts),
                answer=answer,
            )
        )
    return triples


def answer_vocabulary(registry: Registry) -> list[str]:
    seen: dict[str, None] = {}
    for t in registry.templates:
        for a in t.answer_domain:
            seen.setdefault(a, None)
    return list(seen)
