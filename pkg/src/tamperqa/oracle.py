"""Independent dataset verifier.

Every check here is recomputed from raw rasters with its own code: nothing
is imported from ``rasterops`` or ``qa_synth``. Agreement between the two
paths is what the test-suite relies on.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IoFailure, MissingTriple

AREA_BOUNDS = (0.001, 0.15)
MAX_OVERLAP = 0.05

_CELL_NAMES = [["top-left", "top", "top-right"], ["left", "center", "right"], ["bottom-left", "bottom", "bottom-right"]]
# (label, lower bound exclusive, upper bound inclusive) in degrees, y-up frame
_SECTORS = [
    ("east", -22.5, 22.5),
    ("northeast", 22.5, 67.5),
    ("north", 67.5, 112.5),
    ("northwest", 112.5, 157.5),
    ("west", 157.5, 202.5),
    ("southwest", 202.5, 247.5),
    ("south", 247.5, 292.5),
    ("southeast", 292.5, 337.5),
]
_BLUR_NAMES = {"gaussian": "gaussian-blur", "mosaic": "mosaic-blur", "daub": "daub"}


@dataclass
class Violation:
    item_id: str
    rule_id: str
    detail: str = ""


@dataclass
class VerificationReport:
    items_checked: int = 0
    violations: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule_id for v in self.violations}

    def merge(self, other: VerificationReport) -> None:
        self.items_checked += other.items_checked
        self.violations.extend(other.violations)
        self.warnings.extend(other.warnings)

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "items_checked": self.items_checked,
            "violations": [vars(v) for v in self.violations],
            "warnings": [vars(v) for v in self.warnings],
        }


# -- raw raster helpers -----------------------------------------------------


def _load(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(str(path))
    try:
        with Image.open(path) as im:
            return np.array(im)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def load_rasters(entry: dict, root: Path) -> dict[str, np.ndarray]:
    return {role: _load(Path(root) / rel) for role, rel in entry["files"].items()}


def _binary(arr: np.ndarray) -> bool:
    return arr.ndim == 2 and bool(np.isin(arr, (0, 255)).all())


def _centroid(mask: np.ndarray) -> tuple[Fraction, Fraction, int]:
    """Exact centroid from per-row / per-column pixel tallies."""
    col_counts = mask.sum(axis=0, dtype=np.int64)
    row_counts = mask.sum(axis=1, dtype=np.int64)
    area = int(col_counts.sum())
    sx = int((col_counts * np.arange(mask.shape[1], dtype=np.int64)).sum())
    sy = int((row_counts * np.arange(mask.shape[0], dtype=np.int64)).sum())
    return Fraction(sx, area), Fraction(sy, area), area


def _cell(cx: Fraction, cy: Fraction, w: int, h: int) -> str:
    def third(v, size):
        if 3 * v < size:
            return 0
        if 3 * v < 2 * size:
            return 1
        return 2

    return _CELL_NAMES[third(cy, h)][third(cx, w)]


def _heading(src: tuple[Fraction, Fraction], dst: tuple[Fraction, Fraction]) -> str:
    dx = float(dst[0] - src[0])
    dy_up = float(src[1] - dst[1])
    angle = math.degrees(math.atan2(dy_up, dx))
    if angle <= -22.5:
        angle += 360.0
    for name, lo, hi in _SECTORS:
        if lo < angle <= hi:
            return name
    raise AssertionError(f"angle {angle} fell through the sector table")


def _touches_edge(mask: np.ndarray) -> bool:
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    return bool(xs.size) and (xs.min() == 0 or ys.min() == 0 or xs.max() == w - 1 or ys.max() == h - 1)


def _components(mask: np.ndarray) -> int:
    """4-connected component count by iterated min-label propagation."""
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return 0
    crop = mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    big = np.iinfo(np.int64).max
    labels = np.where(crop, np.arange(crop.size, dtype=np.int64).reshape(crop.shape), big)
    while True:
        padded = np.pad(labels, 1, constant_values=big)
        best = np.minimum.reduce(
            [labels, padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]]
        )
        best = np.where(crop, best, big)
        if np.array_equal(best, labels):
            break
        labels = best
    return len(np.unique(labels[crop]))


def _bin(value: float, bins) -> str:
    for upper, label in bins:
        if upper is None or value < upper:
            return label
    raise AssertionError("unterminated bins")


# -- registry (read as data, independently of qa_synth) --------------------


@dataclass
class OracleRegistry:
    doc: dict

    @classmethod
    def load(cls, kind_or_path: str) -> OracleRegistry:
        if kind_or_path in ("cmqa", "tqa"):
            text = resources.files("tamperqa.data").joinpath(f"registry_{kind_or_path}.json").read_text()
        else:
            text = Path(kind_or_path).read_text()
        return cls(json.loads(text))

    @property
    def templates(self) -> list[dict]:
        return self.doc["templates"]

    def by_qid(self) -> dict[int, dict]:
        return {int(t["qid"]): t for t in self.templates}

    def expected_qids(self, kind: str) -> list[int]:
        if kind == "untampered":
            return [int(t["qid"]) for t in self.templates if t["fact"] == "tampered"]
        return [int(t["qid"]) for t in self.templates if kind in t["applies_to"]]

    def domain(self, qid: int) -> list[str]:
        answers = self.by_qid()[qid]["answers"]
        if not isinstance(answers, str):
            return list(answers)
        th = self.doc["thresholds"]
        return {
            "$themes": list(self.doc.get("themes", [])),
            "$grid": [c for row in _CELL_NAMES for c in row],
            "$directions": [s[0] for s in _SECTORS],
            "$size_bins": [b[1] for b in th["size_bins"]],
            "$distance_bins": [b[1] for b in th["distance_bins"]],
        }[answers]


# -- item checks ------------------------------------------------------------


def verify_rasters(entry: dict, rasters: dict[str, np.ndarray]) -> VerificationReport:
    item_id = entry["item_id"]
    rep = VerificationReport(items_checked=1)

    def bad(rule, detail=""):
        rep.violations.append(Violation(item_id, rule, detail))

    tampered = rasters["tampered"]
    original = rasters["original"]
    src_raw = rasters["source_mask"]
    tmp_raw = rasters["tampering_mask"]
    for role, arr in (("source_mask", src_raw), ("tampering_mask", tmp_raw)):
        if not _binary(arr):
            bad("nonbinary_mask", role)
    if tampered.shape != original.shape or src_raw.shape != tmp_raw.shape or tampered.shape[:2] != src_raw.shape[:2]:
        bad("shape_mismatch", f"{tampered.shape} {original.shape} {src_raw.shape} {tmp_raw.shape}")
        return rep
    src = src_raw != 0
    tmp = tmp_raw != 0
    h, w = src.shape
    changed = (tampered != original)
    if changed.ndim == 3:
        changed = changed.any(axis=2)
    kind = entry["kind"]

    if kind == "untampered":
        if changed.any():
            bad("untampered_modified", f"{int(changed.sum())} px differ")
        if src.any() or tmp.any():
            bad("untampered_mask_nonempty")
        return rep

    if not src.any() or not tmp.any():
        bad("empty_mask")
        return rep
    outside = changed & ~tmp
    if outside.any():
        bad("diff_outside_mask", f"{int(outside.sum())} px")
    if not changed.any():
        rep.warnings.append(Violation(item_id, "degenerate", "no pixel changed"))

    src_area = int(src.sum())
    ratio = src_area / (w * h)
    if not (AREA_BOUNDS[0] <= ratio <= AREA_BOUNDS[1]):
        bad("area_out_of_bounds", f"{ratio:.5f}")
    if _components(src) != 1:
        bad("src_fragmented")
    is_road = entry.get("class_label") == "road"

    if kind == "blur":
        if not np.array_equal(src, tmp):
            bad("blur_mask_mismatch", f"{int((src != tmp).sum())} px")
        if not is_road and _touches_edge(src):
            bad("border_touch", "source")
        return rep

    overlap = int((src & tmp).sum()) / src_area
    if overlap > MAX_OVERLAP:
        bad("overlap_exceeded", f"{overlap:.4f}")
    if not is_road:
        if _touches_edge(tmp):
            bad("border_touch", "tampering")
        if _touches_edge(src):
            bad("border_touch", "source")
    return rep


def verify_item(entry: dict, root: Path) -> VerificationReport:
    try:
        rasters = load_rasters(entry, root)
    except FileNotFoundError as exc:
        return VerificationReport(1, [Violation(entry["item_id"], "missing_file", str(exc))])
    return verify_rasters(entry, rasters)


# -- answer recomputation ---------------------------------------------------


@dataclass
class AnswerCheck:
    mismatches: list[Violation] = field(default_factory=list)
    unverifiable: list[Violation] = field(default_factory=list)


def expected_answers(entry: dict, rasters: dict[str, np.ndarray], registry: OracleRegistry) -> dict[int, str | None]:
    """Answer per expected qid; None marks an answer that cannot be recomputed."""
    kind = entry["kind"]
    qids = registry.expected_qids(kind)
    templates = registry.by_qid()
    th = registry.doc["thresholds"]
    facts: dict[str, str | None] = {"tampered": "no" if kind == "untampered" else "yes"}
    if kind != "untampered":
        src = rasters["source_mask"] != 0
        tmp = rasters["tampering_mask"] != 0
        h, w = tmp.shape
        tx, ty, t_area = _centroid(tmp)
        sx, sy, s_area = _centroid(src)
        params = entry.get("params")
        count = entry.get("class_instance_count")
        facts.update(
            object_class=entry.get("class_label"),
            theme=entry.get("theme"),
            tmp_cell=_cell(tx, ty, w, h),
            tmp_size_bin=_bin(t_area / (w * h), th["size_bins"]),
            tmp_touches_border="yes" if _touches_edge(tmp) else "no",
            single_in_class=None if count is None else ("yes" if count == 1 else "no"),
        )
        if kind == "blur":
            facts["tamper_type"] = _BLUR_NAMES.get((params or {}).get("blur_kind")) if params else None
        else:
            facts["tamper_type"] = "copy-move"
            facts.update(
                src_cell=_cell(sx, sy, w, h),
                src_size_bin=_bin(s_area / (w * h), th["size_bins"]),
                direction_src_to_tmp=_heading((sx, sy), (tx, ty)),
                distance_bin=_bin(math.dist((float(sx), float(sy)), (float(tx), float(ty))) / math.hypot(w, h), th["distance_bins"]),
                overlapping="yes" if (src & tmp).any() else "no",
            )
            if params is None:
                facts["size_relation"] = None
                facts["rotated"] = None
            else:
                rel = th["size_relation"]
                scale = float(params["scale"])
                facts["size_relation"] = (
                    "enlarged" if scale > rel["enlarged_above"] else "shrunk" if scale < rel["shrunk_below"] else "unchanged"
                )
                facts["rotated"] = "no" if float(params["rotation_deg"]) == 0 else "yes"
    return {q: facts.get(templates[q]["fact"]) for q in qids}


def recompute_answers(entry: dict, triples: list, rasters: dict[str, np.ndarray], registry: OracleRegistry) -> AnswerCheck:
    item_id = entry["item_id"]
    stored = {}
    for t in triples:
        stored.setdefault(t.qid, t)
    expected = expected_answers(entry, rasters, registry)
    missing = sorted(set(expected) - set(stored))
    if missing:
        raise MissingTriple(f"{item_id}: no triple for qid(s) {missing}")
    check = AnswerCheck()
    for qid, answer in expected.items():
        got = stored[qid].answer
        if answer is None:
            check.unverifiable.append(Violation(item_id, "unverifiable", f"qid {qid}"))
        elif got != answer:
            check.mismatches.append(Violation(item_id, "answer_mismatch", f"qid {qid}: stored {got!r}, expected {answer!r}"))
    for qid in sorted(set(stored) - set(expected)):
        check.mismatches.append(Violation(item_id, "unexpected_qid", f"qid {qid}"))
    return check


# -- dataset ----------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _read_triples(path: Path, rep: VerificationReport) -> list:
    from .dataset_io import read_triples

    try:
        return read_triples(path)
    except Exception as exc:  # any parse problem is a dataset violation
        rep.violations.append(Violation(str(path.name), "triples_unreadable", str(exc)))
        return []


def verify_dataset(root: Path | str, strict: bool = False, verify_checksums: bool = True) -> VerificationReport:
    root = Path(root)
    if root.is_file():
        root = root.parent
    rep = VerificationReport()
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        rep.violations.append(Violation("manifest.json", "missing_file"))
        return rep
    manifest = json.loads(manifest_path.read_text())
    registry = OracleRegistry.load((manifest.get("config") or {}).get("registry_path") or manifest["dataset_kind"])

    if verify_checksums:
        for rel, digest in sorted(manifest["checksums"].items()):
            p = root / rel
            if not p.exists():
                rep.violations.append(Violation(rel, "missing_file"))
            elif _sha256(p) != digest:
                rep.violations.append(Violation(rel, "checksum_mismatch"))

    triples = _read_triples(root / manifest.get("triples_file", "triples.jsonl"), rep)
    if len(triples) != manifest["triple_count"]:
        rep.violations.append(Violation("triples", "triple_count", f"{len(triples)} != {manifest['triple_count']}"))
    id_counts = Counter(t.triple_id for t in triples)
    for tid, n in sorted(id_counts.items()):
        if n > 1:
            rep.violations.append(Violation(tid, "duplicate_id", f"{n} copies"))
    domains = {q: registry.domain(q) for q in registry.by_qid()}
    by_item = defaultdict(list)
    for t in triples:
        by_item[t.image_id].append(t)
        if t.qid not in domains or t.answer not in domains[t.qid]:
            rep.violations.append(Violation(t.image_id, "answer_out_of_domain", f"qid {t.qid}: {t.answer!r}"))
        elif t.category != registry.by_qid()[t.qid]["category"]:
            rep.violations.append(Violation(t.image_id, "category_mismatch", f"qid {t.qid}"))

    item_ids = set()
    for entry in sorted(manifest["items"], key=lambda e: e["item_id"]):
        item_id = entry["item_id"]
        if item_id in item_ids:
            rep.violations.append(Violation(item_id, "duplicate_id", "item"))
        item_ids.add(item_id)
        try:
            rasters = load_rasters(entry, root)
        except FileNotFoundError as exc:
            rep.merge(VerificationReport(1, [Violation(item_id, "missing_file", str(exc))]))
            continue
        rep.merge(verify_rasters(entry, rasters))
        try:
            check = recompute_answers(entry, by_item.get(item_id, []), rasters, registry)
        except MissingTriple as exc:
            rep.violations.append(Violation(item_id, "missing_triple", str(exc)))
            continue
        rep.violations.extend(check.mismatches)
        rep.warnings.extend(check.unverifiable)
    for image_id in sorted(set(by_item) - item_ids):
        rep.violations.append(Violation(image_id, "orphan_triple"))

    if manifest.get("splits"):
        _check_splits(manifest, root, rep)
    if manifest.get("balance"):
        _check_balance(manifest, root, triples, rep)

    if strict:
        rep.violations.extend(rep.warnings)
        rep.warnings = []
    return rep


def _check_splits(manifest: dict, root: Path, rep: VerificationReport) -> None:
    where: dict[str, list[str]] = defaultdict(list)
    for name, rel in sorted(manifest["splits"]["files"].items()):
        p = root / rel
        if not p.exists():
            rep.violations.append(Violation(rel, "missing_file"))
            continue
        for line in p.read_text().splitlines():
            if line.strip():
                where[line.strip()].append(name)
    raw_of = {e["item_id"]: e["raw_image_id"] for e in manifest["items"]}
    for item_id in sorted(raw_of):
        if len(where.get(item_id, [])) != 1:
            rep.violations.append(Violation(item_id, "split_partition", f"assigned to {where.get(item_id, [])}"))
    for item_id in sorted(set(where) - set(raw_of)):
        rep.violations.append(Violation(item_id, "split_partition", "unknown item"))
    raw_splits: dict[str, set[str]] = defaultdict(set)
    for item_id, names in where.items():
        if item_id in raw_of:
            raw_splits[raw_of[item_id]].update(names)
    for raw, names in sorted(raw_splits.items()):
        if len(names) > 1:
            rep.violations.append(Violation(raw, "split_leak", f"spread over {sorted(names)}"))


def _check_balance(manifest: dict, root: Path, triples: list, rep: VerificationReport) -> None:
    spec = manifest["balance"]
    balanced = _read_triples(root / spec["file"], rep)
    full = {t.triple_id: t for t in triples}
    for t in balanced:
        if full.get(t.triple_id) != t:
            rep.violations.append(Violation(t.triple_id, "balance_not_subset"))
    per_qid = Counter(t.qid for t in balanced)
    for q in spec.get("qids", []):
        if per_qid.get(q, 0) == 0:
            rep.violations.append(Violation(f"qid {q}", "balance_missing_qid"))
    if per_qid:
        deviation = max(per_qid.values()) / min(per_qid.values()) - 1
        if deviation > float(spec["tolerance"]):
            rep.violations.append(Violation("balance", "balance_tolerance", f"deviation {deviation:.4f}"))
