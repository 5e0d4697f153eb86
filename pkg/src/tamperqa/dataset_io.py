"""On-disk formats: corpus layout, item quintuples, triples file, manifest.

Corpus layout (input)::

    <root>/index.json   {"items": [{"image_id", "image", "semantic_mask", "theme",
                                    "instances": [{"instance_id", "class_label", "mask"}]}]}

Paths inside the index are relative to ``<root>``. Dataset layout (output)::

    images/ originals/ masks_seg/ masks_src/ masks_tmp/
    triples.jsonl  manifest.json  splits/{train,val,test}.txt
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .errors import BadDimensions, ChecksumMismatch, IoFailure, MissingFile, NonBinaryMask, ParseError
from .qa_synth import Triple

IMAGE_SIZE = 512
ROLES = ("tampered", "original", "segmentation", "source_mask", "tampering_mask")
ROLE_DIRS = {
    "tampered": "images",
    "original": "originals",
    "segmentation": "masks_seg",
    "source_mask": "masks_src",
    "tampering_mask": "masks_tmp",
}
TRIPLE_FIELDS = ("triple_id", "image_id", "qid", "category", "question_text", "answer")
PNG_COMPRESS_LEVEL = 1


@dataclass
class InstanceRef:
    instance_id: str
    class_label: str
    mask_path: Path


@dataclass
class CorpusItem:
    image_id: str
    image_path: Path
    semantic_mask_path: Path
    instances: list[InstanceRef] = field(default_factory=list)
    theme: str | None = None

    def load_image(self) -> np.ndarray:
        return read_rgb(self.image_path)

    def load_semantic(self) -> np.ndarray:
        return read_png(self.semantic_mask_path)

    def load_mask(self, ref: InstanceRef) -> np.ndarray:
        return read_mask(ref.mask_path)


# -- PNG --------------------------------------------------------------------


def read_png(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    with Image.open(path) as im:
        return np.array(im)


def read_rgb(path: Path) -> np.ndarray:
    arr = read_png(path)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise BadDimensions(f"{path}: expected RGB, got shape {arr.shape}")
    return arr


def read_mask(path: Path) -> np.ndarray:
    """Load a {0,255} single-channel PNG as a boolean array."""
    arr = read_png(path)
    if arr.ndim != 2:
        raise BadDimensions(f"{path}: expected single-channel mask, got shape {arr.shape}")
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        raise NonBinaryMask(f"{path}: value {int(arr[bad][0])} is neither 0 nor 255")
    return arr == 255


def encode_png(arr: np.ndarray) -> bytes:
    """PNG bytes with pinned encoder settings, so equal arrays give equal bytes."""
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint8)).save(
        buf, format="PNG", optimize=False, compress_level=PNG_COMPRESS_LEVEL
    )
    return buf.getvalue()


def write_png(path: Path, arr: np.ndarray | bytes) -> None:
    """Write an array (or already encoded PNG bytes) to ``path``."""
    path = Path(path)
    data = arr if isinstance(arr, bytes) else encode_png(arr)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- corpus -----------------------------------------------------------------


def load_corpus(root: Path | str, check_pixels: bool = True) -> list[CorpusItem]:
    root = Path(root)
    index = root / "index.json"
    if not index.exists():
        raise MissingFile(str(index))
    try:
        doc = json.loads(index.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{index}: {exc.msg}", exc.lineno) from exc
    items = []
    for entry in doc["items"]:
        item = CorpusItem(
            image_id=str(entry["image_id"]),
            image_path=root / entry["image"],
            semantic_mask_path=root / entry["semantic_mask"],
            instances=[InstanceRef(str(i["instance_id"]), i["class_label"], root / i["mask"]) for i in entry.get("instances", [])],
            theme=entry.get("theme"),
        )
        if check_pixels:
            _validate_item(item)
        items.append(item)
    return items


def _validate_item(item: CorpusItem) -> None:
    img = item.load_image()
    if img.shape[:2] != (IMAGE_SIZE, IMAGE_SIZE):
        raise BadDimensions(f"{item.image_path}: {img.shape[1]}x{img.shape[0]}, expected {IMAGE_SIZE}x{IMAGE_SIZE}")
    seg = item.load_semantic()
    if seg.shape[:2] != img.shape[:2]:
        raise BadDimensions(f"{item.semantic_mask_path}: shape {seg.shape[:2]}")
    for ref in item.instances:
        m = item.load_mask(ref)
        if m.shape != img.shape[:2]:
            raise BadDimensions(f"{ref.mask_path}: shape {m.shape}")


# -- items ------------------------------------------------------------------


def item_file_names(image_id: str, record_id: str) -> dict[str, str]:
    return {role: f"{ROLE_DIRS[role]}/{image_id}__{record_id}__{role}.png" for role in ROLES}


def write_item(out_root: Path, image_id: str, record_id: str, rasters: dict[str, np.ndarray | bytes]) -> dict:
    """Write the five rasters of one item; returns {"files": ..., "checksums": ...}.

    Rasters may be given pre-encoded (see ``encode_png``).
    """
    out_root = Path(out_root)
    missing = set(ROLES) - set(rasters)
    if missing:
        raise IoFailure(f"missing rasters: {sorted(missing)}")
    files = item_file_names(image_id, record_id)
    checksums = {}
    for role in ROLES:
        path = out_root / files[role]
        data = rasters[role] if isinstance(rasters[role], bytes) else encode_png(rasters[role])
        write_png(path, data)
        checksums[files[role]] = hashlib.sha256(data).hexdigest()
    return {"files": files, "checksums": checksums}


# -- triples ----------------------------------------------------------------


def triple_line(t: Triple) -> str:
    return json.dumps(t.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_triples(triples: Iterable[Triple], path: Path) -> None:
    atomic_write_text(Path(path), "".join(triple_line(t) + "\n" for t in triples))


def read_triples(path: Path) -> list[Triple]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if set(rec) != set(TRIPLE_FIELDS):
                    raise ValueError(f"fields {sorted(rec)}")
                out.append(
                    Triple(
                        triple_id=str(rec["triple_id"]),
                        image_id=str(rec["image_id"]),
                        qid=int(rec["qid"]),
                        category=str(rec["category"]),
                        question_text=str(rec["question_text"]),
                        answer=str(rec["answer"]),
                    )
                )
            except (ValueError, TypeError, AttributeError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
    return out


# -- manifest ---------------------------------------------------------------


@dataclass
class Manifest:
    tool_version: str
    global_seed: int
    dataset_kind: str
    items: list[dict]
    triple_count: int
    checksums: dict[str, str]
    config: dict = field(default_factory=dict)
    triples_file: str = "triples.jsonl"
    splits: dict | None = None
    balance: dict | None = None

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "global_seed": self.global_seed,
            "dataset_kind": self.dataset_kind,
            "config": self.config,
            "items": self.items,
            "triple_count": self.triple_count,
            "triples_file": self.triples_file,
            "checksums": dict(sorted(self.checksums.items())),
            "splits": self.splits,
            "balance": self.balance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Manifest:
        return cls(
            tool_version=d["tool_version"],
            global_seed=int(d["global_seed"]),
            dataset_kind=d["dataset_kind"],
            items=list(d["items"]),
            triple_count=int(d["triple_count"]),
            checksums=dict(d["checksums"]),
            config=dict(d.get("config", {})),
            triples_file=d.get("triples_file", "triples.jsonl"),
            splits=d.get("splits"),
            balance=d.get("balance"),
        )


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def write_manifest(manifest: Manifest, path: Path) -> None:
    atomic_write_text(Path(path), canonical_json(manifest.to_dict()))


def verify_checksums(manifest: Manifest, root: Path) -> None:
    for rel, digest in sorted(manifest.checksums.items()):
        p = root / rel
        if not p.exists():
            raise MissingFile(str(p))
        if sha256_file(p) != digest:
            raise ChecksumMismatch(rel)


def read_manifest(path: Path, verify: bool = True) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        manifest = Manifest.from_dict(doc)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if verify:
        verify_checksums(manifest, path.parent)
    return manifest


def write_split_files(root: Path, members: dict[str, list[str]]) -> dict[str, str]:
    """Write splits/<name>.txt; returns {relpath: sha256}."""
    sums = {}
    for name, ids in members.items():
        rel = f"splits/{name}.txt"
        atomic_write_text(root / rel, "".join(f"{i}\n" for i in ids))
        sums[rel] = sha256_file(root / rel)
    return sums


def read_split_file(path: Path) -> list[str]:
    if not Path(path).exists():
        raise MissingFile(str(path))
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
