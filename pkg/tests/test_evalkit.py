import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tamperqa import evalkit as ek
from tamperqa.errors import BasisMismatch, DuplicateTripleId, EmptyGold, MissingPrediction, UnknownQid, UnknownTripleId
from tamperqa.qa_synth import Triple


def T(tid, qid, answer):
    return Triple(tid, "img", qid, "basic", "q", answer)


def P(tid, answer):
    return ek.Prediction(tid, answer)


def fixture_75():
    gold = [T("a1", 1, "yes"), T("a2", 1, "no"), T("b1", 2, "ship"), T("b2", 2, "road")]
    preds = [P("a1", "yes"), P("a2", "yes"), P("b1", "ship"), P("b2", "road")]
    return gold, preds


def fixture_50():
    gold = [T("a1", 1, "yes"), T("b1", 2, "north"), T("b2", 2, "south"), T("b3", 2, "east")]
    preds = [P("a1", "yes"), P("b1", "north"), P("b2", "north"), P("b3", "north")]
    return gold, preds


def test_all_correct():
    gold, _ = fixture_75()
    r = ek.score(gold, [P(t.triple_id, t.answer) for t in gold])
    assert (r.oa, r.aa) == (100.0, 100.0)


def test_hand_fixture_equal_oa_aa():
    r = ek.score(*fixture_75())
    assert (r.oa, r.aa) == (75.00, 75.00)
    assert r.per_qid == {1: (1, 2, 50.0), 2: (2, 2, 100.0)}


def test_hand_fixture_oa_differs_from_aa():
    r = ek.score(*fixture_50())
    assert r.oa == 50.00
    assert r.aa == 66.67
    assert f"{r.aa:.2f}" == "66.67"


def test_normalization():
    gold = [T("a", 1, "Yes")]
    assert ek.score(gold, [P("a", "  yES \n")]).oa == 100.0


def test_duplication_invariant():
    gold, preds = fixture_50()
    base = ek.score(gold, preds)
    extra_gold = [T(t.triple_id + "_dup", t.qid, t.answer) for t in gold if t.qid == 2]
    extra_pred = [P(p.triple_id + "_dup", p.answer) for p in preds if p.triple_id.startswith("b")]
    dup = ek.score(gold + extra_gold, preds + extra_pred)
    assert dup.aa == base.aa
    assert dup.oa != base.oa
    assert dup.oa == pytest.approx(round(100 * 3 / 7, 2))


def test_missing_prediction_lenient_vs_strict(caplog):
    gold, preds = fixture_75()
    r = ek.score(gold, preds[:-1])
    assert r.missing_predictions == 1
    assert r.oa == 50.0
    with pytest.raises(MissingPrediction):
        ek.score(gold, preds[:-1], policy=ek.STRICT)


def test_unmatched_prediction():
    gold, preds = fixture_75()
    r = ek.score(gold, preds + [P("zz", "yes")])
    assert r.unmatched_predictions == 1 and r.oa == 75.0
    with pytest.raises(UnknownTripleId):
        ek.score(gold, preds + [P("zz", "yes")], policy=ek.STRICT)


def test_contract_errors():
    gold, preds = fixture_75()
    with pytest.raises(DuplicateTripleId):
        ek.score(gold, preds + [P("a1", "no")])
    with pytest.raises(EmptyGold):
        ek.score([], preds)
    with pytest.raises(UnknownQid):
        ek.confusion(gold, preds, 9)


def test_confusion_diagonal_and_single_column():
    gold, _ = fixture_50()
    perfect = ek.confusion(gold, [P(t.triple_id, t.answer) for t in gold], 2)
    body = perfect.counts[:, : len(perfect.labels)]
    assert np.array_equal(body, np.diag(np.diag(body)))
    fixed = ek.confusion(gold, [P(t.triple_id, "north") for t in gold], 2)
    assert np.count_nonzero(fixed.counts.sum(axis=0)) == 1


def test_confusion_brute_force():
    gold, preds = fixture_50()
    preds[2] = P("b2", "banana")
    m = ek.confusion(gold, preds, 2)
    pmap = {p.triple_id: p.answer for p in preds}
    for i, g in enumerate(m.labels):
        for j, c in enumerate(m.columns):
            n = sum(
                1 for t in gold if t.qid == 2 and t.answer == g
                and (pmap[t.triple_id] == c or (c == ek.OTHER and pmap[t.triple_id] not in m.labels))
            )
            assert m.counts[i, j] == n
    assert m.counts.sum(axis=1).tolist() == [1, 1, 1]


def test_confusion_total_and_shuffle():
    gold, preds = fixture_50()
    r = ek.score(gold, preds[:-1])
    assert sum(int(m.counts.sum()) for m in r.confusion.values()) == len(gold)
    shuffled = preds[:-1]
    random.Random(0).shuffle(shuffled)
    assert ek.score(gold, shuffled).to_dict() == r.to_dict()


def test_compare_reports():
    gold, preds = fixture_75()
    a = ek.score(gold, preds)
    assert ek.compare_reports(a, a).oa == 0 and set(ek.compare_reports(a, a).per_qid.values()) == {0}
    better = ek.score(gold, [P(t.triple_id, t.answer) for t in gold])
    d = ek.compare_reports(a, better)
    assert d.oa == pytest.approx(better.oa - a.oa) == 25.0
    assert d.per_qid == {1: 50.0, 2: 0.0}
    assert ("OA", "+25.00") in d.rows()
    other_gold, other_preds = fixture_50()
    with pytest.raises(BasisMismatch):
        ek.compare_reports(a, ek.score(other_gold, other_preds))


def test_prediction_file_round_trip(tmp_path):
    _, preds = fixture_75()
    ek.write_predictions(preds, tmp_path / "p.jsonl")
    assert ek.read_predictions(tmp_path / "p.jsonl") == preds


def test_csv_report():
    csv_text = ek.score(*fixture_50()).to_csv()
    assert "AA,,,66.67" in csv_text and "Q2,1,3,33.33" in csv_text


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 5), st.sampled_from("abc"), st.sampled_from("abc")), min_size=1, max_size=60))
def test_oa_aa_definitions(rows):
    gold = [T(f"t{i}", q, g) for i, (q, g, _) in enumerate(rows)]
    preds = [P(f"t{i}", p) for i, (_, _, p) in enumerate(rows)]
    r = ek.score(gold, preds)
    correct = sum(g == p for _, g, p in rows)
    assert r.oa == round(100 * correct / len(rows), 2)
    accs = []
    for q in sorted({q for q, _, _ in rows}):
        sub = [(g, p) for qq, g, p in rows if qq == q]
        accs.append(100 * sum(g == p for g, p in sub) / len(sub))
    assert r.aa == round(sum(accs) / len(accs), 2)
    assert all(0 <= a <= 100 for _, _, a in r.per_qid.values())
