"""
Benchmark record formats, JSONL loading and QA template expansion.

Every benchmark file is UTF-8 JSONL, one record per line. Images are
either a path relative to the benchmark file or inline base64:

    {"type": "path", "value": "img/0001.png"}
    {"type": "base64", "value": "iVBORw0...", "media_type": "image/png"}

A bare string is shorthand for a path.
"""

from __future__ import annotations

import base64
import binascii
import json
import mimetypes
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping, Sequence, Union

from .clients import ImagePart
from .metrics import QUESTION_TYPES
from .smiles import validate

__all__ = [
    "DuplicateId",
    "ExamRecord",
    "ImageRef",
    "MissingBinding",
    "NoTemplateForTask",
    "OcrRecord",
    "PLACEHOLDERS",
    "QaItem",
    "QaTemplate",
    "SchemaError",
    "build_qa_pairs",
    "default_templates",
    "dump_jsonl",
    "expand_template",
    "load_benchmark",
    "load_templates",
    "qa_item",
]

LANGS = ("zh", "en")
TASKS = ("ocr", "caption", "property", "exam", "reaction")
PLACEHOLDERS = frozenset(
    {"SMILES", "Name", "Properties", "Answer", "path", "target", "reagent", "Detailed solutions"}
)
CHOICE_TYPES = ("single_choice", "multi_choice")


class SchemaError(ValueError):
    def __init__(self, line: int | None, field: str | None, message: str):
        self.line = line
        self.field = field
        self.message = message
        where = f"line {line}" if line is not None else "record"
        what = f" field {field!r}" if field else ""
        super().__init__(f"{where}{what}: {message}")


class DuplicateId(SchemaError):
    def __init__(self, record_id: str, line: int, first_line: int):
        self.record_id = record_id
        super().__init__(line, "id", f"duplicate id {record_id!r} (first seen on line {first_line})")


class MissingBinding(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"no binding for placeholder {{{self.name}}}"


class NoTemplateForTask(LookupError):
    def __init__(self, task: str, lang: str):
        super().__init__(f"no template for task {task!r} in language {lang!r}")
        self.task = task
        self.lang = lang


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImageRef:
    kind: Literal["path", "base64"]
    value: str
    media_type: str | None = None

    @classmethod
    def from_json(cls, obj: Any) -> "ImageRef":
        if isinstance(obj, str):
            return cls("path", obj)
        if not isinstance(obj, dict):
            raise ValueError("image must be a string or an object")
        kind = obj.get("type")
        value = obj.get("value")
        if kind not in ("path", "base64") or not isinstance(value, str) or not value:
            raise ValueError("image needs type 'path' or 'base64' and a non-empty value")
        if kind == "base64":
            try:
                base64.b64decode(value, validate=True)
            except binascii.Error as exc:
                raise ValueError(f"bad base64 image data: {exc}") from exc
        return cls(kind, value, obj.get("media_type"))

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"type": self.kind, "value": self.value}
        if self.media_type is not None:
            out["media_type"] = self.media_type
        return out

    def to_part(self, base_dir: Path | str = ".") -> ImagePart:
        if self.kind == "base64":
            return ImagePart(self.value, self.media_type or "image/png")
        path = Path(base_dir) / self.value
        media = self.media_type or mimetypes.guess_type(path.name)[0] or "image/png"
        return ImagePart.from_bytes(path.read_bytes(), media)


@dataclass(frozen=True)
class OcrRecord:
    id: str
    image: ImageRef
    gold_smiles: str
    lang: str = "en"

    task = "ocr"

    @classmethod
    def from_json(cls, obj: dict[str, Any], line: int | None = None) -> "OcrRecord":
        rid = _require_str(obj, "id", line)
        gold = _require_str(obj, "gold_smiles", line)
        verdict = validate(gold)
        if not verdict:
            raise SchemaError(line, "gold_smiles", f"invalid SMILES {gold!r}: {verdict.reason}")
        if "image" not in obj:
            raise SchemaError(line, "image", "missing")
        try:
            image = ImageRef.from_json(obj["image"])
        except ValueError as exc:
            raise SchemaError(line, "image", str(exc)) from exc
        return cls(rid, image, gold, _lang(obj, line, "en"))

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "image": self.image.to_json(),
            "gold_smiles": self.gold_smiles,
            "lang": self.lang,
        }


Gold = Union[frozenset, tuple, str]


@dataclass(frozen=True)
class ExamRecord:
    id: str
    question: str
    qtype: str
    gold: Gold
    images: tuple[ImageRef, ...] = ()
    choices: Mapping[str, str] | None = None
    lang: str = "zh"
    solution: str | None = None

    task = "exam"

    def __post_init__(self) -> None:
        if self.qtype in CHOICE_TYPES:
            if not self.choices:
                raise SchemaError(None, "choices", f"{self.qtype} question without choices")
            if not isinstance(self.gold, frozenset) or not self.gold:
                raise SchemaError(None, "gold", "choice gold must be a non-empty letter set")
            if not self.gold <= set(self.choices):
                raise SchemaError(None, "gold", "gold letters are not among the choices")
            if self.qtype == "single_choice" and len(self.gold) != 1:
                raise SchemaError(None, "gold", "single_choice needs exactly one gold letter")
        elif self.qtype == "fill_blank":
            if not isinstance(self.gold, tuple) or not self.gold:
                raise SchemaError(None, "gold", "fill_blank gold must be a non-empty list")
        elif self.qtype == "short_answer":
            if not isinstance(self.gold, str) or not self.gold.strip():
                raise SchemaError(None, "gold", "short_answer gold must be non-empty text")
        else:
            raise SchemaError(None, "qtype", f"unknown question type {self.qtype!r}")

    @property
    def gold_blanks(self) -> tuple[str, ...]:
        """Blanks to score; a short answer is scored as a single blank."""
        if self.qtype == "fill_blank":
            return self.gold  # type: ignore[return-value]
        if self.qtype == "short_answer":
            return (self.gold,)  # type: ignore[return-value]
        raise ValueError(f"{self.qtype} has no blanks")

    def prompt_text(self) -> str:
        if not self.choices:
            return self.question
        options = "\n".join(f"{k}. {v}" for k, v in sorted(self.choices.items()))
        return f"{self.question}\n{options}"

    def gold_text(self) -> str:
        if isinstance(self.gold, frozenset):
            return "".join(sorted(self.gold))
        if isinstance(self.gold, tuple):
            return "; ".join(self.gold)
        return self.gold

    @classmethod
    def from_json(cls, obj: dict[str, Any], line: int | None = None) -> "ExamRecord":
        rid = _require_str(obj, "id", line)
        question = _require_str(obj, "question", line)
        qtype = _require_str(obj, "qtype", line)
        if qtype not in QUESTION_TYPES:
            raise SchemaError(line, "qtype", f"must be one of {', '.join(QUESTION_TYPES)}")
        raw_images = obj.get("images", [])
        if not isinstance(raw_images, list):
            raise SchemaError(line, "images", "must be a list")
        try:
            images = tuple(ImageRef.from_json(im) for im in raw_images)
        except ValueError as exc:
            raise SchemaError(line, "images", str(exc)) from exc
        choices = obj.get("choices")
        if choices is not None:
            if not isinstance(choices, dict) or not all(
                isinstance(k, str) and len(k) == 1 and k in "ABCDEFGH" and isinstance(v, str)
                for k, v in choices.items()
            ):
                raise SchemaError(line, "choices", "must map letters A-H to text")
        if "gold" not in obj:
            raise SchemaError(line, "gold", "missing")
        raw_gold = obj["gold"]
        gold: Gold
        if qtype in CHOICE_TYPES:
            if isinstance(raw_gold, str):
                raw_gold = list(raw_gold)
            if not isinstance(raw_gold, list) or not all(isinstance(g, str) for g in raw_gold):
                raise SchemaError(line, "gold", "choice gold must be letters")
            gold = frozenset(raw_gold)
        elif qtype == "fill_blank":
            if not isinstance(raw_gold, list) or not all(isinstance(g, str) for g in raw_gold):
                raise SchemaError(line, "gold", "fill_blank gold must be a list of strings")
            gold = tuple(raw_gold)
        else:
            if not isinstance(raw_gold, str):
                raise SchemaError(line, "gold", "short_answer gold must be a string")
            gold = raw_gold
        solution = obj.get("solution")
        if solution is not None and not isinstance(solution, str):
            raise SchemaError(line, "solution", "must be a string")
        try:
            return cls(rid, question, qtype, gold, images, choices, _lang(obj, line, "zh"), solution)
        except SchemaError as exc:
            raise SchemaError(line, exc.field, exc.message) from exc

    def to_json(self) -> dict[str, Any]:
        gold: Any = self.gold
        if isinstance(gold, frozenset):
            gold = sorted(gold)
        elif isinstance(gold, tuple):
            gold = list(gold)
        out: dict[str, Any] = {
            "id": self.id,
            "question": self.question,
            "qtype": self.qtype,
            "gold": gold,
            "images": [im.to_json() for im in self.images],
            "lang": self.lang,
        }
        if self.choices is not None:
            out["choices"] = dict(self.choices)
        if self.solution is not None:
            out["solution"] = self.solution
        return out


def _require_str(obj: Mapping[str, Any], key: str, line: int | None) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise SchemaError(line, key, "missing or not a non-empty string")
    return value


def _lang(obj: Mapping[str, Any], line: int | None, default: str) -> str:
    lang = obj.get("lang", default)
    if lang not in LANGS:
        raise SchemaError(line, "lang", f"must be one of {LANGS}")
    return lang


_LOADERS = {"ocr": OcrRecord.from_json, "exam": ExamRecord.from_json}


def iter_jsonl(path: Path | str) -> Iterable[tuple[int, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(lineno, None, f"invalid JSON: {exc.msg}") from exc


def load_benchmark(path: Path | str, schema: str) -> list:
    """Load and validate a JSONL benchmark; records come back in file order."""
    if schema not in _LOADERS:
        raise ValueError(f"schema must be 'ocr' or 'exam', got {schema!r}")
    loader = _LOADERS[schema]
    records = []
    first_seen: dict[str, int] = {}
    for lineno, obj in iter_jsonl(path):
        if not isinstance(obj, dict):
            raise SchemaError(lineno, None, "expected a JSON object")
        record = loader(obj, lineno)
        if record.id in first_seen:
            raise DuplicateId(record.id, lineno, first_seen[record.id])
        first_seen[record.id] = lineno
        records.append(record)
    return records


def dump_jsonl(rows: Iterable[Any], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            obj = row.to_json() if hasattr(row, "to_json") else row
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# QA templates
# ---------------------------------------------------------------------------

_PLACEHOLDER = re.compile(r"\{([^{}]+)\}")


def placeholders(text: str) -> list[str]:
    return _PLACEHOLDER.findall(text)


@dataclass(frozen=True)
class QaTemplate:
    id: str
    lang: str
    task: str
    human: str
    assistant: str

    def __post_init__(self) -> None:
        if self.lang not in LANGS:
            raise SchemaError(None, "lang", f"must be one of {LANGS}")
        if self.task not in TASKS:
            raise SchemaError(None, "task", f"must be one of {TASKS}")
        unknown = set(placeholders(self.assistant)) - PLACEHOLDERS
        if unknown:
            raise SchemaError(None, "assistant", f"unknown placeholders {sorted(unknown)}")

    @property
    def names(self) -> set[str]:
        return set(placeholders(self.human)) | set(placeholders(self.assistant))

    @classmethod
    def from_json(cls, obj: dict[str, Any], line: int | None = None) -> "QaTemplate":
        values = {k: _require_str(obj, k, line) for k in ("id", "lang", "task", "human", "assistant")}
        try:
            return cls(**values)
        except SchemaError as exc:
            raise SchemaError(line, exc.field, exc.message) from exc

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "lang": self.lang,
            "task": self.task,
            "human": self.human,
            "assistant": self.assistant,
        }


def load_templates(path: Path | str | None = None) -> list[QaTemplate]:
    """Templates from a JSONL file, or the bundled set when ``path`` is None."""
    if path is None:
        text = resources.files("chemeval").joinpath("data", "qa_templates.jsonl").read_text("utf-8")
        rows = [(k, json.loads(ln)) for k, ln in enumerate(text.splitlines(), 1) if ln.strip()]
    else:
        rows = list(iter_jsonl(path))
    return [QaTemplate.from_json(obj, lineno) for lineno, obj in rows]


def default_templates() -> list[QaTemplate]:
    return load_templates(None)


def _substitute(text: str, bindings: Mapping[str, str]) -> str:
    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in bindings:
            raise MissingBinding(name)
        return str(bindings[name])

    return _PLACEHOLDER.sub(sub, text)


def expand_template(tpl: QaTemplate, bindings: Mapping[str, str]) -> tuple[str, str]:
    """Literal substitution of ``{Name}`` placeholders in both turns."""
    return _substitute(tpl.human, bindings), _substitute(tpl.assistant, bindings)


@dataclass(frozen=True)
class QaItem:
    task: str
    lang: str
    bindings: Mapping[str, str] = field(default_factory=dict)
    id: str | None = None

    @classmethod
    def from_json(cls, obj: dict[str, Any], line: int | None = None) -> "QaItem":
        task = _require_str(obj, "task", line)
        bindings = obj.get("bindings", {})
        if not isinstance(bindings, dict):
            raise SchemaError(line, "bindings", "must be an object")
        return cls(task, _lang(obj, line, "en"), {k: str(v) for k, v in bindings.items()}, obj.get("id"))


def qa_item(record: OcrRecord | ExamRecord) -> QaItem:
    if isinstance(record, OcrRecord):
        return QaItem("ocr", record.lang, {"SMILES": record.gold_smiles}, record.id)
    bindings = {"Question": record.prompt_text(), "Answer": record.gold_text()}
    if record.solution is not None:
        bindings["Detailed solutions"] = record.solution
    return QaItem("exam", record.lang, bindings, record.id)


def build_qa_pairs(
    items: Sequence[QaItem | OcrRecord | ExamRecord],
    templates: Sequence[QaTemplate],
    seed: int = 0,
) -> list[tuple[str, str]]:
    """Pair each item with a seeded-random template of its task and language."""
    by_key: dict[tuple[str, str], list[QaTemplate]] = {}
    for tpl in sorted(templates, key=lambda t: t.id):
        by_key.setdefault((tpl.task, tpl.lang), []).append(tpl)
    rng = random.Random(seed)
    pairs = []
    for item in items:
        if not isinstance(item, QaItem):
            item = qa_item(item)
        pool = by_key.get((item.task, item.lang))
        if not pool:
            raise NoTemplateForTask(item.task, item.lang)
        pairs.append(expand_template(rng.choice(pool), item.bindings))
    return pairs
