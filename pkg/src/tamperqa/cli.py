"""Command-line entry point: generate, balance, split, stats, verify, score."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .curator import DEFAULT_RATIOS, BalanceSpec, balance, distribution_report, split
from .dataset_io import (
    Manifest,
    atomic_write_text,
    canonical_json,
    read_manifest,
    read_triples,
    sha256_file,
    write_manifest,
    write_split_files,
    write_triples,
)
from .errors import (
    BadDimensions,
    BasisMismatch,
    ChecksumMismatch,
    DuplicateTripleId,
    EmptyGold,
    EmptyInput,
    MissingFile,
    MissingPrediction,
    MissingQid,
    NonBinaryMask,
    ParseError,
    TamperQAError,
    UnknownTripleId,
)
from .evalkit import LENIENT, STRICT, MetricsReport, compare_reports, read_predictions, score
from .oracle import verify_dataset
from .pipeline import RunConfig, generate
from .qa_synth import load_registry

log = logging.getLogger("tamperqa")

EXIT_OK, EXIT_VIOLATIONS, EXIT_CONFIG, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3, 4
INPUT_ERRORS = (
    MissingFile,
    BadDimensions,
    NonBinaryMask,
    ParseError,
    ChecksumMismatch,
    BasisMismatch,
    DuplicateTripleId,
    UnknownTripleId,
    MissingPrediction,
    EmptyGold,
    EmptyInput,
    MissingQid,
)


class ConfigError(Exception):
    pass


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="global random seed (default 0)")
    g.add_argument("--workers", type=int, default=None, help="worker processes; falls back to $RSCM_WORKERS, then core count")
    g.add_argument("--config", type=Path, default=None, help="JSON config file; command-line flags take precedence")
    g.add_argument("--out", type=Path, default=None, help="output directory (generate) or report file (other commands)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="tamperqa", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="synthesize a tampered dataset with QA triples")
    g.add_argument("--corpus", type=Path, default=None, help="corpus root containing index.json")
    g.add_argument("--kind", choices=("cmqa", "tqa"), default=None, help="dataset kind (default cmqa)")
    g.add_argument("--max-attempts", type=int, default=None, help="placement draws per instance (default 100)")
    g.add_argument("--registry", type=Path, default=None, help="question registry JSON (default: built-in for --kind)")
    g.add_argument("--no-untampered", action="store_true", help="do not emit untampered originals")

    b = sub.add_parser("balance", parents=[common], help="build the balanced subset of a dataset")
    b.add_argument("--dataset", type=Path, required=True, help="dataset directory with manifest.json")
    b.add_argument("--tolerance", type=float, default=None, help="allowed per-qid deviation (default 0.02)")
    b.add_argument("--target", type=int, default=None, help="explicit per-qid triple count")

    s = sub.add_parser("split", parents=[common], help="assign items to train/val/test by raw image")
    s.add_argument("--dataset", type=Path, required=True, help="dataset directory with manifest.json")
    s.add_argument("--ratios", type=float, nargs=3, default=None, metavar=("TRAIN", "VAL", "TEST"), help="default 0.70 0.15 0.15")

    st = sub.add_parser("stats", parents=[common], help="question / answer distribution report")
    st.add_argument("--dataset", type=Path, required=True, help="dataset directory with manifest.json")
    st.add_argument("--balanced", action="store_true", help="report on the balanced subset instead of all triples")

    v = sub.add_parser("verify", parents=[common], help="independently re-check a dataset")
    v.add_argument("--dataset", type=Path, required=True, help="dataset directory with manifest.json")
    v.add_argument("--strict", action="store_true", help="treat warnings as violations")
    v.add_argument("--no-checksums", action="store_true", help="skip file checksum verification")

    sc = sub.add_parser("score", parents=[common], help="score predictions against gold triples")
    sc.add_argument("--gold", type=Path, required=True, help="gold triples file (JSON lines)")
    sc.add_argument("--pred", type=Path, required=True, help="predictions file: JSON lines with triple_id, answer")
    sc.add_argument("--strict", action="store_true", help="error on missing or unknown predictions")
    sc.add_argument("--csv", type=Path, default=None, help="also write a flat CSV table here")
    sc.add_argument("--kind", choices=("cmqa", "tqa"), default=None, help="registry used to order confusion matrices")
    sc.add_argument("--compare", type=Path, default=None, help="earlier JSON report to diff against")
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _pick(flag, config: dict, key: str, default):
    if flag is not None:
        return flag
    return config.get(key, default)


def _emit(args, payload: dict) -> None:
    text = canonical_json(payload)
    if args.out:
        atomic_write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)


def cmd_generate(args, cfg: dict) -> int:
    corpus = _pick(args.corpus, cfg, "corpus_root", None)
    out = _pick(args.out, cfg, "out_root", None)
    if not corpus or not out:
        raise ConfigError("generate needs --corpus and --out (or corpus_root / out_root in --config)")
    registry = _pick(args.registry, cfg, "registry_path", None)
    config = RunConfig(
        corpus_root=str(corpus),
        out_root=str(out),
        dataset_kind=_pick(args.kind, cfg, "dataset_kind", "cmqa"),
        global_seed=int(_pick(args.seed, cfg, "global_seed", 0)),
        workers=_pick(args.workers, cfg, "workers", None),
        max_attempts=int(_pick(args.max_attempts, cfg, "max_attempts", 100)),
        registry_path=str(registry) if registry else None,
        tolerance=float(cfg.get("tolerance", 0.02)),
        include_untampered=not (args.no_untampered or cfg.get("include_untampered") is False),
    )
    if config.dataset_kind not in ("cmqa", "tqa"):
        raise ConfigError(f"unknown dataset kind {config.dataset_kind!r}")
    if config.max_attempts < 1:
        raise ConfigError("--max-attempts must be >= 1")
    manifest = generate(config)
    print(f"items={len(manifest.items)} triples={manifest.triple_count} out={out}")
    return EXIT_OK


def _update_manifest(root: Path, manifest: Manifest) -> None:
    write_manifest(manifest, root / "manifest.json")


def cmd_balance(args, cfg: dict) -> int:
    root = args.dataset
    manifest = read_manifest(root / "manifest.json")
    tolerance = float(_pick(args.tolerance, cfg, "tolerance", 0.02))
    if tolerance <= 0:
        raise ConfigError("--tolerance must be > 0")
    spec = BalanceSpec(tolerance=tolerance, per_qid_target=_pick(args.target, cfg, "target", None), seed=int(_pick(args.seed, cfg, "global_seed", 0)))
    triples = read_triples(root / manifest.triples_file)
    registry = load_registry(manifest.config.get("registry_path") or manifest.dataset_kind)
    qids = sorted({t.qid for t in triples})
    missing = sorted(set(registry.qids) - set(qids))
    if missing:
        log.warning("qids %s never occur and are left out of the balance", missing)
    subset = balance(triples, spec, qids=qids)
    rel = "triples_balanced.jsonl"
    write_triples(subset, root / rel)
    manifest.checksums[rel] = sha256_file(root / rel)
    manifest.balance = {"file": rel, "tolerance": tolerance, "seed": spec.seed, "target": spec.per_qid_target, "qids": qids}
    _update_manifest(root, manifest)
    report = distribution_report(subset)
    _emit(args, report.to_dict())
    log.info("balanced %d -> %d triples, deviation %.4f", len(triples), len(subset), report.qid_deviation)
    return EXIT_OK


def cmd_split(args, cfg: dict) -> int:
    root = args.dataset
    manifest = read_manifest(root / "manifest.json")
    ratios = tuple(_pick(args.ratios, cfg, "ratios", DEFAULT_RATIOS))
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {ratios}")
    seed = int(_pick(args.seed, cfg, "global_seed", 0))
    assignment = split([e["raw_image_id"] for e in manifest.items], ratios, seed)
    members = {name: [] for name in ("train", "val", "test")}
    for e in manifest.items:
        members[assignment.assignment[e["raw_image_id"]]].append(e["item_id"])
    sums = write_split_files(root, {k: sorted(v) for k, v in members.items()})
    manifest.checksums.update(sums)
    manifest.splits = {"ratios": list(ratios), "seed": seed, "files": {k: f"splits/{k}.txt" for k in members}}
    _update_manifest(root, manifest)
    _emit(args, {"groups": assignment.sizes(), "items": {k: len(v) for k, v in members.items()}})
    return EXIT_OK


def cmd_stats(args, cfg: dict) -> int:
    root = args.dataset
    manifest = read_manifest(root / "manifest.json", verify=False)
    if args.balanced:
        if not manifest.balance:
            raise MissingFile("dataset has no balanced subset; run `balance` first")
        path = root / manifest.balance["file"]
    else:
        path = root / manifest.triples_file
    _emit(args, distribution_report(read_triples(path)).to_dict())
    return EXIT_OK


def cmd_verify(args, cfg: dict) -> int:
    report = verify_dataset(args.dataset, strict=args.strict, verify_checksums=not args.no_checksums)
    _emit(args, report.to_dict())
    status = "PASS" if report.passed else "FAIL"
    print(f"{status}: {report.items_checked} items, {len(report.violations)} violations, {len(report.warnings)} warnings", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VIOLATIONS


def _report_from_dict(d: dict) -> MetricsReport:
    return MetricsReport(
        oa=d["oa"],
        aa=d["aa"],
        per_qid={int(q): (v["correct"], v["total"], v["accuracy"]) for q, v in d["per_qid"].items()},
        basis=d["basis"],
    )


def cmd_score(args, cfg: dict) -> int:
    gold = read_triples(args.gold)
    preds = read_predictions(args.pred) if args.pred.exists() else None
    if preds is None:
        raise MissingFile(str(args.pred))
    kind = _pick(args.kind, cfg, "dataset_kind", None)
    registry = load_registry(kind) if kind else None
    report = score(gold, preds, policy=STRICT if args.strict else LENIENT, registry=registry)
    payload = report.to_dict()
    if args.compare:
        other = _report_from_dict(json.loads(Path(args.compare).read_text()))
        delta = compare_reports(other, report)
        payload["delta_vs_baseline"] = dict(delta.rows())
    _emit(args, payload)
    if args.csv:
        atomic_write_text(args.csv, report.to_csv())
    print(f"OA={report.oa:.2f} AA={report.aa:.2f}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "balance": cmd_balance,
    "split": cmd_split,
    "stats": cmd_stats,
    "verify": cmd_verify,
    "score": cmd_score,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except INPUT_ERRORS as exc:
        print(f"input error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (TamperQAError, OSError, ValueError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
