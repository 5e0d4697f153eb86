"""End-to-end dataset generation: corpus in, tampered items + triples + manifest out."""

from __future__ import annotations

import logging
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dataset_io import CorpusItem, Manifest, encode_png, load_corpus, sha256_file, write_item, write_manifest, write_triples
from .qa_synth import UntamperedItem, load_registry, synthesize
from .tamper_engine import BLUR, COPY_MOVE, SourceInstance, check_eligibility, derive_rng, tamper_instance

log = logging.getLogger(__name__)

UNTAMPERED_RECORD_ID = "orig"


@dataclass
class RunConfig:
    corpus_root: str = ""
    out_root: str = ""
    dataset_kind: str = "cmqa"
    global_seed: int = 0
    workers: int | None = None
    max_attempts: int = 100
    registry_path: str | None = None
    tolerance: float = 0.02
    include_untampered: bool = True

    def resolved_workers(self) -> int:
        if self.workers:
            return int(self.workers)
        env = os.environ.get("RSCM_WORKERS")
        if env:
            return int(env)
        return os.cpu_count() or 1

    def manifest_view(self) -> dict:
        # paths and worker count do not influence output bytes
        d = asdict(self)
        for key in ("corpus_root", "out_root", "workers"):
            d.pop(key)
        return d


def _item_entry(item_id, raw_id, record_id, kind, theme, files, **extra) -> dict:
    entry = {
        "item_id": item_id,
        "raw_image_id": raw_id,
        "record_id": record_id,
        "kind": kind,
        "theme": theme,
        "files": files,
    }
    entry.update(extra)
    return entry


def process_image(item: CorpusItem, config: RunConfig) -> list[tuple[dict, dict, list]]:
    """Tamper every eligible instance of one corpus image.

    Returns (item entry, checksums, triples) per written item.
    """
    registry = load_registry(config.registry_path or config.dataset_kind)
    out_root = Path(config.out_root)
    image = item.load_image()
    semantic = item.load_semantic()
    h, w = image.shape[:2]
    refs = item.instances
    class_counts = Counter(r.class_label for r in refs)
    original_png = encode_png(image)
    semantic_png = encode_png(semantic)
    empty_png = encode_png(np.zeros((h, w), dtype=bool))
    results = []

    if config.include_untampered:
        item_id = f"{item.image_id}__{UNTAMPERED_RECORD_ID}"
        written = write_item(
            out_root,
            item.image_id,
            UNTAMPERED_RECORD_ID,
            {
                "tampered": original_png,
                "original": original_png,
                "segmentation": semantic_png,
                "source_mask": empty_png,
                "tampering_mask": empty_png,
            },
        )
        triples = synthesize(UntamperedItem(item.image_id, item.theme), config.dataset_kind, item_id=item_id, registry=registry)
        entry = _item_entry(item_id, item.image_id, UNTAMPERED_RECORD_ID, "untampered", item.theme, written["files"], params=None)
        results.append((entry, written["checksums"], triples))

    for ref in refs:
        instance = SourceInstance(ref.instance_id, ref.class_label, item.load_mask(ref), item.image_id)
        verdict = check_eligibility(instance, (w, h))
        if not verdict:
            log.debug("skip %s/%s: %s", item.image_id, ref.instance_id, verdict.reason)
            continue
        rng = derive_rng(config.global_seed, item.image_id, ref.instance_id)
        if config.dataset_kind == "tqa":
            kind = BLUR if rng.random() < 0.5 else COPY_MOVE
        else:
            kind = COPY_MOVE
        out = tamper_instance(image, instance, kind, rng, max_attempts=config.max_attempts)
        if out is None:
            continue
        record, tampered = out
        item_id = f"{item.image_id}__{record.record_id}"
        written = write_item(
            out_root,
            item.image_id,
            record.record_id,
            {
                "tampered": tampered,
                "original": original_png,
                "segmentation": semantic_png,
                "source_mask": record.src_mask,
                "tampering_mask": record.tmp_mask,
            },
        )
        n_class = class_counts[ref.class_label]
        triples = synthesize(
            record,
            config.dataset_kind,
            item_id=item_id,
            theme=item.theme,
            class_instance_count=n_class,
            registry=registry,
        )
        entry = _item_entry(
            item_id,
            item.image_id,
            record.record_id,
            record.kind,
            item.theme,
            written["files"],
            instance_id=ref.instance_id,
            class_label=ref.class_label,
            class_instance_count=n_class,
            params=record.params.to_dict(),
            degenerate=record.degenerate,
        )
        results.append((entry, written["checksums"], triples))
    return results


def _process_star(args):
    return process_image(*args)


def generate(config: RunConfig, corpus: list[CorpusItem] | None = None) -> Manifest:
    """Generate a dataset under ``config.out_root`` and write its manifest last."""
    if config.dataset_kind not in ("cmqa", "tqa"):
        raise ValueError(f"dataset kind must be cmqa or tqa, not {config.dataset_kind!r}")
    corpus = corpus if corpus is not None else load_corpus(config.corpus_root)
    out_root = Path(config.out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    workers = config.resolved_workers()

    jobs = [(item, config) for item in corpus]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_process_star, jobs))
    else:
        chunks = [_process_star(j) for j in jobs]

    results = sorted((r for chunk in chunks for r in chunk), key=lambda r: r[0]["item_id"])
    entries, checksums, triples = [], {}, []
    for entry, sums, ts in results:
        entries.append(entry)
        checksums.update(sums)
        triples.extend(ts)

    triples_rel = "triples.jsonl"
    write_triples(triples, out_root / triples_rel)
    checksums[triples_rel] = sha256_file(out_root / triples_rel)
    manifest = Manifest(
        tool_version=__version__,
        global_seed=config.global_seed,
        dataset_kind=config.dataset_kind,
        items=entries,
        triple_count=len(triples),
        checksums=checksums,
        config=config.manifest_view(),
        triples_file=triples_rel,
    )
    write_manifest(manifest, out_root / "manifest.json")
    log.info("generated %d items, %d triples", len(entries), len(triples))
    return manifest
