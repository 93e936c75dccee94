import base64
import json

import pytest

from chemeval.datasets import (
    PLACEHOLDERS,
    DuplicateId,
    ExamRecord,
    ImageRef,
    MissingBinding,
    NoTemplateForTask,
    OcrRecord,
    QaItem,
    QaTemplate,
    SchemaError,
    build_qa_pairs,
    default_templates,
    dump_jsonl,
    expand_template,
    load_benchmark,
    load_templates,
    qa_item,
)

B64 = base64.b64encode(b"fake-png").decode()


def _write(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), "utf-8")
    return path


def _ocr(rid, gold="CCO", image=None):
    return {"id": rid, "image": image or {"type": "base64", "value": B64}, "gold_smiles": gold}


def test_load_three_ocr_records(tmp_path):
    path = _write(tmp_path / "b.jsonl", [_ocr("a"), _ocr("b", "c1ccccc1"), _ocr("c", image="img/c.png")])
    recs = load_benchmark(path, "ocr")
    assert [r.id for r in recs] == ["a", "b", "c"]
    assert all(isinstance(r, OcrRecord) for r in recs)
    assert recs[2].image == ImageRef("path", "img/c.png")


def test_blank_lines_skipped(tmp_path):
    path = tmp_path / "b.jsonl"
    path.write_text(json.dumps(_ocr("a")) + "\n\n" + json.dumps(_ocr("b")) + "\n")
    assert len(load_benchmark(path, "ocr")) == 2


def test_invalid_gold_line_reported(tmp_path):
    path = _write(tmp_path / "b.jsonl", [_ocr("a"), _ocr("b", "C1CC")])
    with pytest.raises(SchemaError) as err:
        load_benchmark(path, "ocr")
    assert (err.value.line, err.value.field) == (2, "gold_smiles")


def test_duplicate_id(tmp_path):
    path = _write(tmp_path / "b.jsonl", [_ocr("a"), _ocr("b"), _ocr("a")])
    with pytest.raises(DuplicateId) as err:
        load_benchmark(path, "ocr")
    assert err.value.record_id == "a" and err.value.line == 3


@pytest.mark.parametrize(
    "row, field",
    [
        ({"image": "x.png", "gold_smiles": "C"}, "id"),
        ({"id": "a", "gold_smiles": "C"}, "image"),
        ({"id": "a", "image": {"type": "url", "value": "x"}, "gold_smiles": "C"}, "image"),
        ({"id": "a", "image": {"type": "base64", "value": "@@@"}, "gold_smiles": "C"}, "image"),
        ({"id": "a", "image": "x.png", "gold_smiles": "C", "lang": "fr"}, "lang"),
    ],
)
def test_ocr_schema_errors(tmp_path, row, field):
    with pytest.raises(SchemaError) as err:
        load_benchmark(_write(tmp_path / "b.jsonl", [row]), "ocr")
    assert err.value.field == field and err.value.line == 1


def test_bad_json_line(tmp_path):
    path = tmp_path / "b.jsonl"
    path.write_text(json.dumps(_ocr("a")) + "\n{not json\n")
    with pytest.raises(SchemaError) as err:
        load_benchmark(path, "ocr")
    assert err.value.line == 2


def test_unknown_schema(tmp_path):
    with pytest.raises(ValueError):
        load_benchmark(_write(tmp_path / "b.jsonl", [_ocr("a")]), "quiz")


def test_image_to_part(tmp_path):
    (tmp_path / "img").mkdir()
    (tmp_path / "img" / "a.png").write_bytes(b"pixels")
    part = ImageRef("path", "img/a.png").to_part(tmp_path)
    assert base64.b64decode(part.data) == b"pixels" and part.media_type == "image/png"
    inline = ImageRef("base64", B64, "image/jpeg").to_part()
    assert inline.data == B64 and inline.media_type == "image/jpeg"


# --- exam records -------------------------------------------------------------

EXAM_ROWS = [
    {"id": "q1", "question": "哪个是苯?", "qtype": "single_choice",
     "choices": {"A": "C1CC1", "B": "c1ccccc1"}, "gold": "B"},
    {"id": "q2", "question": "Pick acids", "qtype": "multi_choice", "lang": "en",
     "choices": {"A": "HCl", "B": "NaOH", "C": "HNO3"}, "gold": ["A", "C"]},
    {"id": "q3", "question": "H2 + ___ -> ___", "qtype": "fill_blank", "gold": ["O2", "H2O"],
     "images": [{"type": "base64", "value": B64}]},
    {"id": "q4", "question": "Why?", "qtype": "short_answer", "gold": "Because.", "solution": "s"},
]


def test_exam_records(tmp_path):
    recs = load_benchmark(_write(tmp_path / "e.jsonl", EXAM_ROWS), "exam")
    assert [r.qtype for r in recs] == ["single_choice", "multi_choice", "fill_blank", "short_answer"]
    assert recs[0].gold == frozenset("B") and recs[0].lang == "zh"
    assert recs[1].gold == frozenset("AC")
    assert recs[2].gold_blanks == ("O2", "H2O") and len(recs[2].images) == 1
    assert recs[3].gold_blanks == ("Because.",)
    assert "B. c1ccccc1" in recs[0].prompt_text()
    assert recs[1].gold_text() == "AC"


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"qtype": "essay"}, "qtype"),
        ({"gold": "D"}, "gold"),
        ({"gold": ["A", "B"]}, "gold"),
        ({"choices": {"Z": "x"}}, "choices"),
        ({"choices": None}, "choices"),
    ],
)
def test_exam_schema_errors(tmp_path, patch, field):
    row = {**EXAM_ROWS[0], **patch}
    if row.get("choices") is None:
        row.pop("choices")
    with pytest.raises(SchemaError) as err:
        load_benchmark(_write(tmp_path / "e.jsonl", [row]), "exam")
    assert err.value.field == field and err.value.line == 1


def test_dump_round_trip(tmp_path):
    src = _write(tmp_path / "e.jsonl", EXAM_ROWS)
    recs = load_benchmark(src, "exam")
    dump_jsonl(recs, tmp_path / "out.jsonl")
    assert load_benchmark(tmp_path / "out.jsonl", "exam") == recs
    ocr = [OcrRecord("a", ImageRef("path", "a.png"), "CCO")]
    dump_jsonl(ocr, tmp_path / "o.jsonl")
    assert load_benchmark(tmp_path / "o.jsonl", "ocr") == ocr


# --- templates -----------------------------------------------------------------


def test_bundled_templates_cover_tasks():
    templates = default_templates()
    keys = {(t.task, t.lang) for t in templates}
    for task in ("ocr", "caption", "property", "exam", "reaction"):
        for lang in ("en", "zh"):
            assert (task, lang) in keys
    assert len({t.id for t in templates}) == len(templates)
    for t in templates:
        assert set(t.names) - {"Question"} <= PLACEHOLDERS


def test_ocr_template_shape():
    tpl = next(t for t in default_templates() if t.id == "ocr-en-1")
    _, assistant = expand_template(tpl, {"SMILES": "CCO"})
    assert assistant.endswith("is CCO.")


def test_no_placeholder_template():
    tpl = QaTemplate("t", "en", "caption", "Describe it.", "A molecule.")
    assert expand_template(tpl, {}) == ("Describe it.", "A molecule.")


def test_missing_binding():
    tpl = QaTemplate("t", "en", "exam", "{Question}", "The answer is {Answer}.")
    with pytest.raises(MissingBinding) as err:
        expand_template(tpl, {"Question": "q"})
    assert err.value.name == "Answer"


def test_substitution_is_literal():
    tpl = QaTemplate("t", "en", "ocr", "Read it.", "It is {SMILES}.")
    assert expand_template(tpl, {"SMILES": "{Answer}"})[1] == "It is {Answer}."


def test_unknown_assistant_placeholder():
    with pytest.raises(SchemaError):
        QaTemplate("t", "en", "ocr", "x", "{Colour}")


def test_single_template_used_for_all():
    tpl = QaTemplate("only", "en", "ocr", "Read.", "It is {SMILES}.")
    items = [QaItem("ocr", "en", {"SMILES": "CCO"}), QaItem("ocr", "en", {"SMILES": "CCN"})]
    for seed in (0, 1, 99):
        assert build_qa_pairs(items, [tpl], seed) == [("Read.", "It is CCO."), ("Read.", "It is CCN.")]


def test_seeded_determinism():
    items = [QaItem("ocr", "en", {"SMILES": s}) for s in ("C", "CC", "CCC", "CCCC", "CCCCC")]
    templates = default_templates()
    assert build_qa_pairs(items, templates, 5) == build_qa_pairs(items, list(reversed(templates)), 5)


def test_no_template_for_task():
    tpl = QaTemplate("only", "en", "ocr", "Read.", "It is {SMILES}.")
    with pytest.raises(NoTemplateForTask):
        build_qa_pairs([QaItem("exam", "en", {})], [tpl])
    with pytest.raises(NoTemplateForTask):
        build_qa_pairs([QaItem("ocr", "zh", {"SMILES": "C"})], [tpl])


def test_records_become_items(tmp_path):
    recs = load_benchmark(_write(tmp_path / "e.jsonl", EXAM_ROWS), "exam")
    item = qa_item(recs[3])
    assert item.bindings["Detailed solutions"] == "s" and item.task == "exam"
    pairs = build_qa_pairs([OcrRecord("a", ImageRef("path", "x"), "CCO")], default_templates(), 0)
    assert "CCO" in pairs[0][1]


def test_templates_file(tmp_path):
    path = _write(tmp_path / "t.jsonl", [
        {"id": "x", "lang": "en", "task": "ocr", "human": "h", "assistant": "{SMILES}"},
    ])
    assert load_templates(path)[0].assistant == "{SMILES}"
    bad = _write(tmp_path / "bad.jsonl", [{"id": "x", "lang": "en", "task": "ocr", "human": "h"}])
    with pytest.raises(SchemaError) as err:
        load_templates(bad)
    assert err.value.field == "assistant"
