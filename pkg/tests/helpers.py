"""Benchmark and config builders shared by the runner, CLI and acceptance tests."""

from __future__ import annotations

import base64
import json
import re
from pathlib import Path

from chemeval.stub import last_user_text

# The "image" of each OCR record is the gold SMILES itself, so the
# echo_image stub behaves like a perfect model.


def ocr_rows(golds, lang="en"):
    return [
        {
            "id": f"r{k:03d}",
            "image": {"type": "base64", "value": base64.b64encode(g.encode()).decode()},
            "gold_smiles": g,
            "lang": lang,
        }
        for k, g in enumerate(golds)
    ]


def write_jsonl(path: Path, rows) -> Path:
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), "utf-8")
    return path


def write_config(
    path: Path,
    bench: Path,
    schema: str,
    model_url: str,
    judge_url: str | None = None,
    out: str = "out",
    mode: str = "heuristic",
    **model_extra,
) -> Path:
    model = {"base_url": model_url, "model_name": "stub-model", "backoff_base": 0.0, **model_extra}
    lines = [
        "[benchmark]",
        f'path = "{bench.name}"',
        f'schema = "{schema}"',
        "",
        "[model]",
        *(f"{k} = {json.dumps(v)}" for k, v in model.items()),
        "",
        "[run]",
        f'output_dir = "{out}"',
        f'extraction_mode = "{mode}"',
        "seed = 7",
    ]
    if judge_url:
        lines += ["", "[judge]", f'base_url = "{judge_url}"', 'model_name = "stub-judge"',
                  "backoff_base = 0.0", "max_retries = 1"]
    path.write_text("\n".join(lines) + "\n", "utf-8")
    return path


# --- 10-question exam fixture: 4/6 choice correct, 2/4 blank sets correct ------

EXAM10 = [
    {"id": "q1", "qtype": "single_choice", "choices": {"A": "x", "B": "y"}, "gold": ["B"]},
    {"id": "q2", "qtype": "multi_choice", "choices": {"A": "x", "B": "y", "C": "z"}, "gold": ["A", "C"]},
    {"id": "q3", "qtype": "single_choice", "choices": {"C": "x", "D": "y"}, "gold": ["D"]},
    {"id": "q4", "qtype": "single_choice", "choices": {"A": "x", "B": "y"}, "gold": ["A"]},
    {"id": "q5", "qtype": "multi_choice", "choices": {"B": "x", "C": "y", "D": "z"}, "gold": ["B", "D"]},
    {"id": "q6", "qtype": "single_choice", "choices": {"A": "x", "C": "y"}, "gold": ["C"]},
    {"id": "q7", "qtype": "fill_blank", "gold": ["O2", "H2O"]},
    {"id": "q8", "qtype": "fill_blank", "gold": ["NaCl", "HCl"]},
    {"id": "q9", "qtype": "fill_blank", "gold": ["CO2", "CaCO3"]},
    {"id": "q10", "qtype": "fill_blank", "gold": ["N2", "NH3"]},
]

EXAM10_ANSWERS = {
    "q1": "The answer is B.",
    "q2": "Answer: AC",
    "q3": "D",
    "q4": "Final answer: B",  # wrong
    "q5": "BD",
    "q6": "I choose A",  # wrong
    "q7": "GOOD GOOD",
    "q8": "GOOD GOOD",
    "q9": "GOOD BAD",  # one wrong blank
    "q10": "BAD BAD",
}


def exam10_rows(lang="en"):
    return [{**r, "question": f"Question [{r['id']}] about chemistry", "lang": lang} for r in EXAM10]


_TAG = re.compile(r"\[(q\d+)\]")


def exam_model(body: dict) -> str:
    """Answers keyed by the [qN] tag in the question text."""
    return EXAM10_ANSWERS[_TAG.search(last_user_text(body)).group(1)]


def blank_judge(body: dict) -> str:
    """Marks each GOOD/BAD token of the student answer, in order."""
    prompt = last_user_text(body)
    tokens = re.findall(r"\b(GOOD|BAD)\b", prompt)
    return ",".join("1" if t == "GOOD" else "0" for t in tokens)
