"""Desk-scale end-to-end run.

Builds a fixture corpus, generates both dataset kinds, balances, splits and
verifies them, then scores two answer-prior baselines on the test split:

* ``majority``: the most frequent training answer for each qid
* ``uniform``: a seeded uniform draw from each qid's answer domain

The baselines show how much of each question can be answered without
looking at the image, which is the floor any real model has to beat.
"""

from __future__ import annotations

import argparse
import json
import time
from collections import Counter, defaultdict
from pathlib import Path

import numpy as np

from tamperqa import cli
from tamperqa.dataset_io import read_split_file, read_triples
from tamperqa.evalkit import Prediction, score
from tamperqa.fixtures import make_corpus
from tamperqa.qa_synth import load_registry


def baselines(root: Path, kind: str, seed: int) -> dict:
    triples = read_triples(root / "triples.jsonl")
    train = set(read_split_file(root / "splits/train.txt"))
    test = set(read_split_file(root / "splits/test.txt"))
    gold = [t for t in triples if t.image_id in test]
    counts = defaultdict(Counter)
    for t in triples:
        if t.image_id in train:
            counts[t.qid][t.answer] += 1
    registry = load_registry(kind)
    rng = np.random.default_rng(seed)
    majority = [Prediction(t.triple_id, counts[t.qid].most_common(1)[0][0] if counts[t.qid] else "") for t in gold]
    uniform = [Prediction(t.triple_id, str(rng.choice(registry.template(t.qid).answer_domain))) for t in gold]
    out = {}
    for name, preds in (("majority", majority), ("uniform", uniform)):
        report = score(gold, preds, registry=registry)
        out[name] = {"oa": report.oa, "aa": report.aa, "per_qid": {q: a for q, (_, _, a) in report.per_qid.items()}}
    out["test_triples"] = len(gold)
    return out


def run(args) -> dict:
    work = args.work
    corpus = make_corpus(work / "corpus", n_images=args.images, instances_per_image=args.instances, seed=args.seed)
    results = {}
    for kind in ("cmqa", "tqa"):
        root = work / kind
        t0 = time.perf_counter()
        steps = [
            ["generate", "--corpus", str(corpus), "--out", str(root), "--kind", kind, "--seed", str(args.seed)],
            ["balance", "--dataset", str(root), "--seed", str(args.seed), "--out", str(root / "balanced_stats.json")],
            ["split", "--dataset", str(root), "--seed", str(args.seed), "--out", str(root / "split_stats.json")],
            ["verify", "--dataset", str(root), "--out", str(root / "verify.json")],
        ]
        for argv in steps:
            rc = cli.main(argv + (["--workers", str(args.workers)] if args.workers and argv[0] == "generate" else []))
            if rc != 0:
                raise SystemExit(f"{kind}: `{argv[0]}` exited with {rc}")
        manifest = json.loads((root / "manifest.json").read_text())
        balanced = json.loads((root / "balanced_stats.json").read_text())
        results[kind] = {
            "seconds": round(time.perf_counter() - t0, 1),
            "items": Counter(e["kind"] for e in manifest["items"]),
            "triples": manifest["triple_count"],
            "balanced_triples": balanced["total"],
            "balanced_qid_deviation": balanced["qid_deviation"],
            "baselines": baselines(root, kind, args.seed),
        }
    return results


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--work", type=Path, default=Path("desk_run"))
    p.add_argument("--images", type=int, default=40)
    p.add_argument("--instances", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    args = p.parse_args()
    results = run(args)
    text = json.dumps(results, indent=1, sort_keys=True, default=dict)
    (args.work / "results.json").write_text(text + "\n")
    for kind, r in results.items():
        b = r["baselines"]
        print(
            f"{kind}: {r['triples']} triples ({dict(r['items'])}) in {r['seconds']}s; "
            f"balanced {r['balanced_triples']} (dev {r['balanced_qid_deviation']:.4f}); "
            f"majority OA/AA {b['majority']['oa']:.2f}/{b['majority']['aa']:.2f}, "
            f"uniform {b['uniform']['oa']:.2f}/{b['uniform']['aa']:.2f}"
        )


if __name__ == "__main__":
    main()
