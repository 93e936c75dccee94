import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chemeval.extraction import ExtractedAnswer
from chemeval.fingerprint import GoldInvalid
from chemeval.metrics import (
    EmptyBenchmark,
    EvalReport,
    ExamVerdict,
    OcrVerdict,
    ReportIntegrityError,
    format_pct,
    score_blanks,
    score_choice,
    score_ocr,
    total_score,
)

# Frozen from the unfolding-tree oracle (tests/oracles.py), computed before the
# package's own fingerprint code was exercised on this fixture.
OCR10_AVG = 48.4046
OCR10_TANI = 30.0

OCR10_PAIRS = [
    ("OCC", "CCO"),
    ("Oc1ccccc1", "c1ccccc1O"),
    ("CC(=O)Oc1ccccc1C(=O)OC", "CC(=O)Oc1ccccc1C(=O)O"),
    ("CCO", "CCN"),
    ("c1ccccc1", "c1ccncc1"),
    ("CC(C)Cc1ccc(cc1)C(C)C(=O)N", "CC(C)Cc1ccc(cc1)C(C)C(=O)O"),
    (None, "CN1C=NC2=C1C(=O)N(C(=O)N2C)C"),
    ("O=C(O)CCC(=O", "O=C(O)CCC(=O)O"),
    ("[Cl-].[NH4+]", "[NH4+].[Cl-]"),
    ("ClCCl", "ClC(Cl)Cl"),
]


def test_all_identical():
    avg, tani, verdicts = score_ocr([("CCO", "OCC"), ("c1ccccc1", "c1ccccc1")])
    assert (avg, tani) == (100.0, 100.0)
    assert all(v.exact for v in verdicts)


def test_seven_pairs_three_exact():
    pairs = [("CCO", "CCO")] * 3 + [(None, "CCO")] * 4
    avg, tani, _ = score_ocr(pairs)
    assert Fraction(tani).limit_denominator(1000) * 7 == 300
    assert format_pct(tani) == "42.9"
    assert format_pct(avg) == "42.9"


def test_ten_pair_fixture():
    avg, tani, verdicts = score_ocr(OCR10_PAIRS)
    assert round(avg, 4) == OCR10_AVG
    assert round(tani, 4) == OCR10_TANI
    assert [v.exact for v in verdicts].count(True) == 3


def test_gold_invalid_names_record():
    with pytest.raises(GoldInvalid) as err:
        score_ocr([("CCO", "CCO"), ("CCO", "C1CC")], record_ids=["a", "b"])
    assert err.value.record_id == "b"


def test_empty_inputs():
    with pytest.raises(EmptyBenchmark):
        score_ocr([])
    with pytest.raises(EmptyBenchmark):
        total_score([])


def test_record_ids_length_mismatch():
    with pytest.raises(ValueError):
        score_ocr([("C", "C")], record_ids=["a", "b"])


# --- exam rules ---------------------------------------------------------------


def _choices(letters):
    return ExtractedAnswer("choices", set(letters), "heuristic", "")


@pytest.mark.parametrize(
    "gold, answer, points",
    [
        ({"A", "C"}, _choices("AC"), 1),
        ({"A", "C"}, _choices("A"), 0),
        ({"A", "C"}, _choices("ACD"), 0),
        ({"B"}, ExtractedAnswer.nothing(""), 0),
        ({"B"}, None, 0),
    ],
)
def test_score_choice(gold, answer, points):
    assert score_choice(gold, answer) == points


def test_score_choice_empty_gold():
    with pytest.raises(ValueError):
        score_choice(set(), _choices("A"))


@pytest.mark.parametrize(
    "marks, points",
    [([True, True, True], 1), ([True, False, True], 0), ([False], 0), ([True], 1)],
)
def test_score_blanks(marks, points):
    assert score_blanks(marks) == points


def test_score_blanks_empty():
    with pytest.raises(ValueError):
        score_blanks([])


def test_total_score_counts_questions_not_blanks():
    verdicts = [ExamVerdict(str(k), int(k < 6), "single_choice") for k in range(10)]
    assert total_score(verdicts) == 60.0


@given(st.lists(st.integers(0, 1), min_size=1, max_size=50))
def test_total_score_bounds(points):
    verdicts = [ExamVerdict(str(k), p, "fill_blank") for k, p in enumerate(points)]
    score = total_score(verdicts)
    assert 0.0 <= score <= 100.0
    assert score == pytest.approx(100.0 * sum(points) / len(points))


def test_verdict_invariants():
    with pytest.raises(ValueError):
        OcrVerdict("a", 1.5)
    with pytest.raises(ValueError):
        ExamVerdict("a", 2, "single_choice")
    with pytest.raises(ValueError):
        ExamVerdict("a", 1, "essay")
    assert OcrVerdict("a", 1.0).exact and not OcrVerdict("a", 0.999).exact


# --- report -----------------------------------------------------------------------


def _ocr_report():
    _, _, verdicts = score_ocr(OCR10_PAIRS, record_ids=[f"r{k}" for k in range(10)])
    return EvalReport.from_verdicts("fixture", "ocr", verdicts, ["w1"], {"model": {"model_name": "m"}})


def test_report_aggregates_and_check():
    report = _ocr_report()
    assert report.n_records == 10
    assert round(report.avg_similarity_pct, 4) == OCR10_AVG
    report.check()
    report.tanimoto_at_1_pct = 31.0
    with pytest.raises(ReportIntegrityError):
        report.check()
    with pytest.raises(ReportIntegrityError):
        report.to_json()


def test_report_json_round_trip():
    report = _ocr_report()
    text = report.to_json()
    assert text.endswith("\n")
    again = EvalReport.from_dict(json.loads(text))
    again.check()
    assert again.to_json() == text


def test_exam_report_round_trip():
    verdicts = [
        ExamVerdict("q1", 1, "multi_choice", frozenset("AC")),
        ExamVerdict("q2", 0, "fill_blank", (True, False), "judge reply malformed"),
    ]
    report = EvalReport.from_verdicts("exam", "exam", verdicts)
    assert report.total_score_pct == 50.0
    assert report.avg_similarity_pct is None
    data = json.loads(report.to_json())
    assert data["per_record"][0]["detail"] == ["A", "C"]
    EvalReport.from_dict(data).check()


def test_markdown_table():
    md = _ocr_report().to_markdown()
    assert "| Model | Benchmark | N | Avg Sim. (%↑) | Tani@1.0 (%↑) |" in md
    assert "| m | fixture | 10 | 48.4 | 30.0 |" in md
    assert "- w1" in md
    exam = EvalReport.from_verdicts("e", "exam", [ExamVerdict("q", 1, "single_choice")])
    assert "| - | e | 1 | 100.0 |" in exam.to_markdown()


def test_unknown_schema():
    with pytest.raises(ValueError):
        EvalReport.from_verdicts("x", "quiz", [ExamVerdict("q", 1, "single_choice")])
