"""
Benchmark metrics: OCR similarity aggregates and whole-point exam scoring.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Literal, Sequence

from .extraction import ExtractedAnswer
from .fingerprint import DEFAULT_PARAMS, FingerprintParams, GoldInvalid, similarity_of_smiles

__all__ = [
    "EmptyBenchmark",
    "EvalReport",
    "ExamVerdict",
    "OcrVerdict",
    "QUESTION_TYPES",
    "ReportIntegrityError",
    "format_pct",
    "score_blanks",
    "score_choice",
    "score_ocr",
    "total_score",
]

QuestionType = Literal["single_choice", "multi_choice", "fill_blank", "short_answer"]
QUESTION_TYPES: tuple[str, ...] = ("single_choice", "multi_choice", "fill_blank", "short_answer")


class EmptyBenchmark(ValueError):
    pass


class ReportIntegrityError(AssertionError):
    pass


def format_pct(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


@dataclass(frozen=True)
class OcrVerdict:
    record_id: str
    similarity: float
    gold: str = ""
    prediction: str | None = None
    extracted: ExtractedAnswer | None = None
    warning: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.similarity <= 1.0:
            raise ValueError(f"similarity {self.similarity} outside [0, 1]")

    @property
    def exact(self) -> bool:
        return self.similarity == 1.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.record_id,
            "similarity": self.similarity,
            "exact": self.exact,
            "gold": self.gold,
            "prediction": self.prediction,
            "extracted": None if self.extracted is None else self.extracted.to_dict(),
            "warning": self.warning,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "OcrVerdict":
        ext = d.get("extracted")
        return cls(
            record_id=d["id"],
            similarity=d["similarity"],
            gold=d.get("gold", ""),
            prediction=d.get("prediction"),
            extracted=None if ext is None else ExtractedAnswer.from_dict(ext),
            warning=d.get("warning"),
        )


@dataclass(frozen=True)
class ExamVerdict:
    record_id: str
    points: int
    question_type: str
    detail: Any = None
    warning: str | None = None

    def __post_init__(self) -> None:
        if self.points not in (0, 1):
            raise ValueError(f"points must be 0 or 1, got {self.points}")
        if self.question_type not in QUESTION_TYPES:
            raise ValueError(f"unknown question type {self.question_type!r}")

    def to_dict(self) -> dict[str, Any]:
        detail = self.detail
        if isinstance(detail, (set, frozenset)):
            detail = sorted(detail)
        elif isinstance(detail, tuple):
            detail = list(detail)
        return {
            "id": self.record_id,
            "points": self.points,
            "question_type": self.question_type,
            "detail": detail,
            "warning": self.warning,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExamVerdict":
        return cls(d["id"], d["points"], d["question_type"], d.get("detail"), d.get("warning"))


# ---------------------------------------------------------------------------
# OCR
# ---------------------------------------------------------------------------


def score_ocr(
    pairs: Iterable[tuple[str | None, str]],
    params: FingerprintParams = DEFAULT_PARAMS,
    record_ids: Sequence[str] | None = None,
) -> tuple[float, float, list[OcrVerdict]]:
    """Score ``(prediction, gold)`` pairs.

    Returns ``(average similarity %, tanimoto@1.0 %, verdicts)``. A missing
    prediction scores 0.0; an invalid gold aborts with :class:`GoldInvalid`.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyBenchmark("no OCR pairs to score")
    if record_ids is None:
        record_ids = [str(k) for k in range(len(pairs))]
    if len(record_ids) != len(pairs):
        raise ValueError("record_ids and pairs differ in length")
    verdicts = []
    for rid, (pred, gold) in zip(record_ids, pairs):
        try:
            sim = similarity_of_smiles(pred, gold, params)
        except GoldInvalid as exc:
            raise GoldInvalid(gold, exc.reason, record_id=rid) from exc
        verdicts.append(OcrVerdict(rid, sim, gold, pred))
    avg, hits = ocr_aggregates(verdicts)
    return avg, hits, verdicts


def ocr_aggregates(verdicts: Sequence[OcrVerdict]) -> tuple[float, float]:
    if not verdicts:
        raise EmptyBenchmark("no OCR verdicts")
    n = len(verdicts)
    avg = math.fsum(v.similarity for v in verdicts) / n * 100.0
    hits = sum(1 for v in verdicts if v.exact) / n * 100.0
    return avg, hits


# ---------------------------------------------------------------------------
# exams
# ---------------------------------------------------------------------------


def score_choice(gold: Iterable[str], answer: ExtractedAnswer | None) -> int:
    """One point only for the exact set of right choices."""
    gold = frozenset(gold)
    if not gold:
        raise ValueError("gold choice set is empty")
    if answer is None or answer.kind != "choices":
        return 0
    return int(frozenset(answer.payload) == gold)


def score_blanks(per_blank: Sequence[bool]) -> int:
    """One point when every blank is right; a single wrong blank gives zero."""
    if not per_blank:
        raise ValueError("no blanks to score")
    return int(all(per_blank))


def total_score(verdicts: Sequence[ExamVerdict]) -> float:
    """Points earned divided by number of questions, as a percentage."""
    if not verdicts:
        raise EmptyBenchmark("no exam verdicts")
    return sum(v.points for v in verdicts) / len(verdicts) * 100.0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    benchmark_name: str
    schema: str  # "ocr" or "exam"
    per_record: list = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    settings: dict[str, Any] = field(default_factory=dict)
    avg_similarity_pct: float | None = None
    tanimoto_at_1_pct: float | None = None
    total_score_pct: float | None = None

    @property
    def n_records(self) -> int:
        return len(self.per_record)

    @classmethod
    def from_verdicts(
        cls,
        name: str,
        schema: str,
        verdicts: Sequence[OcrVerdict] | Sequence[ExamVerdict],
        warnings: Sequence[str] = (),
        settings: dict[str, Any] | None = None,
    ) -> "EvalReport":
        report = cls(name, schema, list(verdicts), list(warnings), dict(settings or {}))
        report.avg_similarity_pct, report.tanimoto_at_1_pct, report.total_score_pct = (
            report._recompute()
        )
        return report

    def _recompute(self) -> tuple[float | None, float | None, float | None]:
        if self.schema == "ocr":
            avg, hits = ocr_aggregates(self.per_record)
            return avg, hits, None
        if self.schema == "exam":
            return None, None, total_score(self.per_record)
        raise ValueError(f"unknown schema {self.schema!r}")

    def check(self) -> None:
        """Raise unless every aggregate equals a recomputation from ``per_record``."""
        expected = self._recompute()
        actual = (self.avg_similarity_pct, self.tanimoto_at_1_pct, self.total_score_pct)
        if expected != actual:
            raise ReportIntegrityError(f"aggregates {actual} != recomputed {expected}")
        for value in actual:
            if value is not None and not 0.0 <= value <= 100.0:
                raise ReportIntegrityError(f"percentage {value} outside [0, 100]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "benchmark": self.benchmark_name,
            "schema": self.schema,
            "n_records": self.n_records,
            "metrics": {
                "avg_similarity_pct": self.avg_similarity_pct,
                "tanimoto_at_1_pct": self.tanimoto_at_1_pct,
                "total_score_pct": self.total_score_pct,
            },
            "settings": self.settings,
            "per_record": [v.to_dict() for v in self.per_record],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        self.check()
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvalReport":
        schema = data["schema"]
        parse_one = OcrVerdict.from_dict if schema == "ocr" else ExamVerdict.from_dict
        metrics = data.get("metrics", {})
        return cls(
            benchmark_name=data["benchmark"],
            schema=schema,
            per_record=[parse_one(d) for d in data.get("per_record", [])],
            warnings=list(data.get("warnings", [])),
            settings=dict(data.get("settings", {})),
            avg_similarity_pct=metrics.get("avg_similarity_pct"),
            tanimoto_at_1_pct=metrics.get("tanimoto_at_1_pct"),
            total_score_pct=metrics.get("total_score_pct"),
        )

    def to_markdown(self) -> str:
        model = self.settings.get("model", {}).get("model_name", "-")
        if self.schema == "ocr":
            head = "| Model | Benchmark | N | Avg Sim. (%↑) | Tani@1.0 (%↑) |\n|---|---|---|---|---|\n"
            row = (
                f"| {model} | {self.benchmark_name} | {self.n_records} | "
                f"{format_pct(self.avg_similarity_pct)} | {format_pct(self.tanimoto_at_1_pct)} |\n"
            )
        else:
            head = "| Model | Benchmark | N | Score (%↑) |\n|---|---|---|---|\n"
            row = (
                f"| {model} | {self.benchmark_name} | {self.n_records} | "
                f"{format_pct(self.total_score_pct)} |\n"
            )
        lines = [f"# {self.benchmark_name}\n\n", head, row]
        if self.warnings:
            lines.append(f"\n## Warnings ({len(self.warnings)})\n\n")
            lines.extend(f"- {w}\n" for w in self.warnings)
        return "".join(lines)
