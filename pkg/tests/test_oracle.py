import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tamperqa import oracle, rasterops
from tamperqa.dataset_io import read_triples
from tamperqa.errors import MissingTriple

from faults import FAULTS, inject


def test_clean_datasets_pass(cmqa_dir, tqa_dir):
    for d in (cmqa_dir, tqa_dir):
        rep = oracle.verify_dataset(d)
        assert rep.passed, rep.violations[:5]
        assert rep.items_checked == len(json.loads((d / "manifest.json").read_text())["items"])


def test_zero_answer_mismatches(tqa_dir):
    manifest = json.loads((tqa_dir / "manifest.json").read_text())
    reg = oracle.OracleRegistry.load("tqa")
    triples = read_triples(tqa_dir / "triples.jsonl")
    mism = 0
    for e in manifest["items"]:
        rasters = oracle.load_rasters(e, tqa_dir)
        check = oracle.recompute_answers(e, [t for t in triples if t.image_id == e["item_id"]], rasters, reg)
        mism += len(check.mismatches)
        assert not check.unverifiable
    assert mism == 0


@pytest.mark.parametrize("fault", FAULTS, ids=[f.name for f in FAULTS])
def test_fault_detected(fault, small_tqa_dir, tmp_path):
    broken = inject(small_tqa_dir, tmp_path, fault)
    rep = oracle.verify_dataset(broken)
    assert not rep.passed
    assert fault.rule in rep.rules(), sorted(rep.rules())


def test_missing_triple_raised(tqa_dir):
    manifest = json.loads((tqa_dir / "manifest.json").read_text())
    e = next(e for e in manifest["items"] if e["kind"] == "copy_move")
    with pytest.raises(MissingTriple):
        oracle.recompute_answers(e, [], oracle.load_rasters(e, tqa_dir), oracle.OracleRegistry.load("tqa"))


def test_missing_params_is_unverifiable(tqa_dir):
    manifest = json.loads((tqa_dir / "manifest.json").read_text())
    e = dict(next(e for e in manifest["items"] if e["kind"] == "copy_move"))
    e["params"] = None
    triples = [t for t in read_triples(tqa_dir / "triples.jsonl") if t.image_id == e["item_id"]]
    check = oracle.recompute_answers(e, triples, oracle.load_rasters(e, tqa_dir), oracle.OracleRegistry.load("tqa"))
    assert not check.mismatches
    assert len(check.unverifiable) == 2  # size relation and rotation


def test_degenerate_is_warning_unless_strict():
    m = np.zeros((64, 64), np.uint8)
    m[10:20, 10:20] = 255
    img = np.zeros((64, 64, 3), np.uint8)
    entry = {"item_id": "x", "kind": "blur", "class_label": "building"}
    rasters = {"tampered": img, "original": img, "source_mask": m, "tampering_mask": m}
    rep = oracle.verify_rasters(entry, rasters)
    assert rep.passed and [w.rule_id for w in rep.warnings] == ["degenerate"]


# -- independent helpers agree with rasterops ------------------------------------


@settings(max_examples=300, deadline=None)
@given(arrays(np.bool_, (12, 12)))
def test_component_count_agrees(mask):
    assert oracle._components(mask) == (rasterops.component_count(mask) if mask.any() else 0)


@settings(max_examples=300, deadline=None)
@given(arrays(np.bool_, (30, 45)))
def test_centroid_and_cell_agree(mask):
    if not mask.any():
        return
    cx, cy, area = oracle._centroid(mask)
    s = rasterops.region_stats(mask)
    assert area == s.area_px
    assert (float(cx), float(cy)) == pytest.approx(s.centroid)
    assert oracle._cell(cx, cy, 45, 30) == rasterops.grid_cell(s.centroid, (45, 30))


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 511), st.integers(0, 511), st.integers(0, 511), st.integers(0, 511))
def test_heading_agrees(ax, ay, bx, by):
    if (ax, ay) == (bx, by):
        return
    got = oracle._heading((Fraction(ax), Fraction(ay)), (Fraction(bx), Fraction(by)))
    assert got == rasterops.direction((ax, ay), (bx, by))


def test_cell_exact_thirds():
    # 3 * 512/3 is exactly on the boundary: belongs to the middle column
    assert oracle._cell(Fraction(512, 3), Fraction(0), 512, 512) == "top"
    assert oracle._cell(Fraction(512, 3) - Fraction(1, 10**9), Fraction(0), 512, 512) == "top-left"
