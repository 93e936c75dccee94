"""
End-to-end evaluation runs: load benchmark, query model, extract, score, report.

Output directory layout:

    predictions.jsonl   raw model responses and extracted answers, one per record
    report.json         aggregates plus per-record verdicts (deterministic)
    report.md           the same aggregates as a Markdown table
    manifest.json       config snapshot, timestamps, latencies, warnings

Predictions are kept apart from scores so a scoring change never needs new
model calls; ``score_*_predictions`` rebuilds a report from them offline.
Re-running into an existing output directory skips records that already
have a successful prediction.
"""

from __future__ import annotations

import json
import logging
import random
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .clients import (
    ChatClient,
    ClientError,
    EndpointConfigError,
    JudgeClient,
    JudgeUnavailable,
    ModelEndpoint,
    get_client,
    user_request,
)
from .datasets import (
    ExamRecord,
    OcrRecord,
    QaTemplate,
    iter_jsonl,
    load_benchmark,
    load_templates,
)
from .extraction import (
    ExtractedAnswer,
    Judge,
    extract_choices,
    extract_smiles_heuristic,
    extract_smiles_judge,
    judge_blanks,
)
from .fingerprint import DEFAULT_PARAMS, FingerprintParams, GoldInvalid, similarity_of_smiles
from .metrics import EvalReport, ExamVerdict, OcrVerdict, score_blanks, score_choice

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "run_exam_eval",
    "run_ocr_eval",
    "score_exam_predictions",
    "score_ocr_predictions",
    "write_report",
]

log = logging.getLogger(__name__)

EXTRACTION_MODES = ("heuristic", "judge", "judge_with_fallback")
PREDICTIONS = "predictions.jsonl"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    benchmark_path: Path
    schema: str
    model: ModelEndpoint
    output_dir: Path
    judge: ModelEndpoint | None = None
    fingerprint: FingerprintParams = DEFAULT_PARAMS
    extraction_mode: str = "heuristic"
    seed: int = 0
    benchmark_name: str | None = None
    templates_path: Path | None = None
    system_prompt: str | None = None

    def __post_init__(self) -> None:
        if self.schema not in ("ocr", "exam"):
            raise ConfigError(f"schema must be 'ocr' or 'exam', got {self.schema!r}")
        if self.extraction_mode not in EXTRACTION_MODES:
            raise ConfigError(f"extraction_mode must be one of {EXTRACTION_MODES}")
        if self.extraction_mode != "heuristic" and self.judge is None:
            raise EndpointConfigError(
                f"extraction_mode {self.extraction_mode!r} needs a [judge] endpoint"
            )

    @property
    def name(self) -> str:
        return self.benchmark_name or Path(self.benchmark_path).stem

    def snapshot(self) -> dict[str, Any]:
        return {
            "benchmark_path": str(self.benchmark_path),
            "benchmark_name": self.name,
            "schema": self.schema,
            "model": self.model.public_dict(),
            "judge": None if self.judge is None else self.judge.public_dict(),
            "fingerprint": {"radius": self.fingerprint.radius, "width": self.fingerprint.width},
            "extraction_mode": self.extraction_mode,
            "seed": self.seed,
            "templates_path": None if self.templates_path is None else str(self.templates_path),
        }


def _endpoint(section: dict[str, Any], label: str) -> ModelEndpoint:
    allowed = set(ModelEndpoint.__dataclass_fields__)
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"[{label}] has unknown keys {sorted(unknown)}")
    try:
        return ModelEndpoint(**section)
    except TypeError as exc:
        raise EndpointConfigError(f"[{label}] {exc}") from exc


def load_config(path: Path | str, schema: str | None = None) -> RunConfig:
    """Read a TOML run config; relative paths resolve against its directory."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    base = path.parent

    def resolve(p: str | None) -> Path | None:
        if p is None:
            return None
        q = Path(p)
        return q if q.is_absolute() else base / q

    bench = data.get("benchmark", {})
    run = data.get("run", {})
    if "path" not in bench:
        raise ConfigError("[benchmark] path is required")
    file_schema = bench.get("schema")
    if schema and file_schema and schema != file_schema:
        raise ConfigError(f"config schema {file_schema!r} does not match {schema!r}")
    if "model" not in data:
        raise EndpointConfigError("[model] section is required")
    fp = data.get("fingerprint", {})
    try:
        params = FingerprintParams(**fp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[fingerprint] {exc}") from exc
    return RunConfig(
        benchmark_path=resolve(bench["path"]),
        schema=schema or file_schema or "ocr",
        model=_endpoint(data["model"], "model"),
        judge=_endpoint(data["judge"], "judge") if "judge" in data else None,
        output_dir=resolve(run.get("output_dir", "runs")),
        fingerprint=params,
        extraction_mode=run.get("extraction_mode", "heuristic"),
        seed=int(run.get("seed", 0)),
        benchmark_name=bench.get("name"),
        templates_path=resolve(run.get("templates")),
        system_prompt=run.get("system_prompt"),
    )


# ---------------------------------------------------------------------------
# shared run machinery
# ---------------------------------------------------------------------------


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _pick_prompt(
    record: OcrRecord | ExamRecord, templates: Sequence[QaTemplate], seed: int
) -> str:
    pool = sorted(
        (t for t in templates if t.task == record.task and t.lang == record.lang),
        key=lambda t: t.id,
    )
    if record.task == "exam":
        if not pool:
            return record.prompt_text()
        tpl = random.Random(f"{seed}:{record.id}").choice(pool)
        return tpl.human.replace("{Question}", record.prompt_text())
    if not pool:
        raise ConfigError(f"no {record.task} template for language {record.lang!r}")
    return random.Random(f"{seed}:{record.id}").choice(pool).human


def _read_predictions(path: Path) -> dict[str, dict[str, Any]]:
    done: dict[str, dict[str, Any]] = {}
    if not path.exists():
        return done
    for _, row in iter_jsonl(path):
        if isinstance(row, dict) and "id" in row:
            done[row["id"]] = row
    return done


@dataclass
class _Run:
    cfg: RunConfig
    records: list
    client: ChatClient
    judge: Judge | None
    templates: list[QaTemplate]
    base_dir: Path
    warnings: list[str] = field(default_factory=list)

    def execute(self, work: Callable[[Any], dict[str, Any]]) -> dict[str, dict[str, Any]]:
        out_dir = Path(self.cfg.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        pred_path = out_dir / PREDICTIONS
        previous = _read_predictions(pred_path)
        ids = {r.id for r in self.records}
        predictions = {
            rid: row for rid, row in previous.items() if rid in ids and row.get("error") is None
        }
        todo = [r for r in self.records if r.id not in predictions]
        manifest: dict[str, Any] = {
            "tool_version": __version__,
            "config": self.cfg.snapshot(),
            "started_at": _utcnow(),
            "finished_at": None,
            "status": "running",
            "resumed_ids": sorted(predictions),
        }
        status = "failed"
        try:
            # rewrite so retried failures do not leave stale lines behind
            with open(pred_path, "w", encoding="utf-8") as fh:
                for r in self.records:
                    if r.id in predictions:
                        fh.write(json.dumps(predictions[r.id], ensure_ascii=False, sort_keys=True) + "\n")
                fh.flush()
                workers = max(1, self.client.endpoint.max_concurrency)
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    futures = {pool.submit(work, r): r for r in todo}
                    for fut in as_completed(futures):
                        row = fut.result()
                        predictions[row["id"]] = row
                        fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
                        fh.flush()
            status = "completed"
        finally:
            manifest["finished_at"] = _utcnow()
            manifest["status"] = status
            manifest["records"] = [
                {
                    "id": r.id,
                    "latency": predictions[r.id].get("latency"),
                    "retries": predictions[r.id].get("retries"),
                    "error": predictions[r.id].get("error"),
                }
                for r in self.records
                if r.id in predictions
            ]
            manifest["warnings"] = [
                predictions[r.id]["warning"]
                for r in self.records
                if r.id in predictions and predictions[r.id].get("warning")
            ]
            (out_dir / "manifest.json").write_text(
                json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
        return predictions

    def ask(self, record: OcrRecord | ExamRecord, images: Sequence) -> dict[str, Any]:
        """Query the model once; failures become an ``error`` field, never an exception."""
        prompt = _pick_prompt(record, self.templates, self.cfg.seed)
        row: dict[str, Any] = {"id": record.id, "response": None, "error": None}
        try:
            parts = [im.to_part(self.base_dir) for im in images]
            resp = self.client.chat(user_request(prompt, parts, self.cfg.system_prompt))
        except (ClientError, OSError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            row["warning"] = f"{record.id}: model request failed ({row['error']})"
            row["latency"] = None
            row["retries"] = getattr(exc, "attempts", None)
            return row
        row.update(response=resp.text, latency=round(resp.latency, 6), retries=resp.retries)
        return row


def _setup(cfg: RunConfig, client: ChatClient | None, judge: Judge | None, schema: str) -> _Run:
    if cfg.schema != schema:
        raise ConfigError(f"config is for {cfg.schema!r}, not {schema!r}")
    records = load_benchmark(cfg.benchmark_path, schema)
    cfg.model.api_key()
    if cfg.judge is not None:
        cfg.judge.api_key()
    if judge is None and cfg.judge is not None:
        judge = JudgeClient.for_endpoint(cfg.judge)
    templates = load_templates(cfg.templates_path)
    if schema == "ocr":
        for rec in records:
            if not any(t.task == "ocr" and t.lang == rec.lang for t in templates):
                raise ConfigError(f"no ocr template for language {rec.lang!r}")
    return _Run(
        cfg=cfg,
        records=records,
        client=client or get_client(cfg.model),
        judge=judge,
        templates=templates,
        base_dir=Path(cfg.benchmark_path).parent,
    )


def _settings(cfg: RunConfig) -> dict[str, Any]:
    snap = cfg.snapshot()
    snap.pop("benchmark_path")
    snap.pop("templates_path")
    snap["tool_version"] = __version__
    return snap


def write_report(report: EvalReport, out_dir: Path | str) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.md").write_text(report.to_markdown(), encoding="utf-8")


# ---------------------------------------------------------------------------
# OCR
# ---------------------------------------------------------------------------


def _extract_ocr(run: _Run, record: OcrRecord, response: str) -> tuple[ExtractedAnswer, str | None]:
    mode = run.cfg.extraction_mode
    if mode == "heuristic":
        return extract_smiles_heuristic(response), None
    assert run.judge is not None
    try:
        return extract_smiles_judge(response, run.judge, record.lang), None
    except JudgeUnavailable as exc:
        if mode == "judge_with_fallback":
            return (
                extract_smiles_heuristic(response),
                f"{record.id}: judge unavailable, used heuristic extraction ({exc})",
            )
        return ExtractedAnswer.nothing(response, "judge"), f"{record.id}: judge unavailable ({exc})"


def run_ocr_eval(
    cfg: RunConfig, *, client: ChatClient | None = None, judge: Judge | None = None
) -> EvalReport:
    """Evaluate a model on an OCR benchmark and write all run files."""
    run = _setup(cfg, client, judge, "ocr")

    def work(record: OcrRecord) -> dict[str, Any]:
        row = run.ask(record, [record.image])
        if row["error"] is None:
            extracted, warning = _extract_ocr(run, record, row["response"])
            row["extracted"] = extracted.to_dict()
            row["smiles"] = extracted.smiles
            if warning:
                row["warning"] = warning
        else:
            row["extracted"] = None
            row["smiles"] = None
        return row

    predictions = run.execute(work)
    report = _score_ocr_rows(cfg.name, run.records, predictions, cfg.fingerprint, _settings(cfg))
    write_report(report, cfg.output_dir)
    return report


def _score_ocr_rows(
    name: str,
    records: Sequence[OcrRecord],
    rows: dict[str, dict[str, Any]],
    params: FingerprintParams,
    settings: dict[str, Any],
) -> EvalReport:
    verdicts = []
    warnings = []
    for rec in records:
        row = rows.get(rec.id)
        warning = None
        extracted = None
        if row is None:
            pred = None
            warning = f"{rec.id}: no prediction"
        else:
            warning = row.get("warning")
            if "smiles" in row:
                pred = row["smiles"]
            elif row.get("response") is not None:
                extracted = extract_smiles_heuristic(row["response"])
                pred = extracted.smiles
            else:
                pred = None
            if row.get("extracted"):
                extracted = ExtractedAnswer.from_dict(row["extracted"], row.get("response") or "")
        try:
            sim = similarity_of_smiles(pred, rec.gold_smiles, params)
        except GoldInvalid as exc:
            raise GoldInvalid(rec.gold_smiles, exc.reason, record_id=rec.id) from exc
        if warning:
            warnings.append(warning)
        verdicts.append(OcrVerdict(rec.id, sim, rec.gold_smiles, pred, extracted, warning))
    return EvalReport.from_verdicts(name, "ocr", verdicts, warnings, settings)


def score_ocr_predictions(
    pred_path: Path | str,
    gold_path: Path | str,
    params: FingerprintParams = DEFAULT_PARAMS,
    name: str | None = None,
) -> EvalReport:
    """Rescore saved predictions (``{"id", "smiles"}`` or ``{"id", "response"}``) offline."""
    records = load_benchmark(gold_path, "ocr")
    rows = _read_predictions(Path(pred_path))
    settings = {
        "fingerprint": {"radius": params.radius, "width": params.width},
        "mode": "offline",
        "tool_version": __version__,
    }
    return _score_ocr_rows(name or Path(gold_path).stem, records, rows, params, settings)


# ---------------------------------------------------------------------------
# exams
# ---------------------------------------------------------------------------


def run_exam_eval(
    cfg: RunConfig, *, client: ChatClient | None = None, judge: Judge | None = None
) -> EvalReport:
    """Evaluate a model on an exam benchmark and write all run files."""
    run = _setup(cfg, client, judge, "exam")
    needs_judge = [r.id for r in run.records if r.qtype in ("fill_blank", "short_answer")]
    if needs_judge and run.judge is None:
        raise EndpointConfigError(
            f"{len(needs_judge)} blank/short-answer questions need a [judge] endpoint"
        )

    def work(record: ExamRecord) -> dict[str, Any]:
        row = run.ask(record, record.images)
        row["extracted"] = None
        row["blanks"] = None
        if row["error"] is not None:
            return row
        response = row["response"]
        if record.qtype in ("single_choice", "multi_choice"):
            row["extracted"] = extract_choices(response).to_dict()
            return row
        assert run.judge is not None
        try:
            judgement = judge_blanks(
                record.question, record.gold_blanks, response, run.judge, record.lang
            )
        except JudgeUnavailable as exc:
            row["warning"] = f"{record.id}: judge unavailable, scored 0 ({exc})"
            return row
        row["blanks"] = list(judgement.marks)
        if judgement.malformed:
            row["warning"] = f"{record.id}: malformed judge reply {judgement.reply[:60]!r}"
        return row

    predictions = run.execute(work)
    report = _score_exam_rows(cfg.name, run.records, predictions, _settings(cfg))
    write_report(report, cfg.output_dir)
    return report


def _score_exam_rows(
    name: str,
    records: Sequence[ExamRecord],
    rows: dict[str, dict[str, Any]],
    settings: dict[str, Any],
) -> EvalReport:
    verdicts = []
    warnings = []
    for rec in records:
        row = rows.get(rec.id)
        warning = None if row is None else row.get("warning")
        points = 0
        detail: Any = None
        if row is None:
            warning = f"{rec.id}: no prediction"
        elif rec.qtype in ("single_choice", "multi_choice"):
            if row.get("extracted"):
                answer = ExtractedAnswer.from_dict(row["extracted"])
            elif row.get("response") is not None:
                answer = extract_choices(row["response"])
            else:
                answer = None
            points = score_choice(rec.gold, answer)
            detail = sorted(answer.payload) if answer is not None and answer.kind == "choices" else []
        else:
            marks = row.get("blanks")
            if marks is not None and len(marks) == len(rec.gold_blanks):
                points = score_blanks([bool(m) for m in marks])
                detail = [bool(m) for m in marks]
            elif warning is None:
                warning = f"{rec.id}: no blank judgement"
        if warning:
            warnings.append(warning)
        verdicts.append(ExamVerdict(rec.id, points, rec.qtype, detail, warning))
    return EvalReport.from_verdicts(name, "exam", verdicts, warnings, settings)


def score_exam_predictions(
    pred_path: Path | str, gold_path: Path | str, name: str | None = None
) -> EvalReport:
    """Rescore saved exam predictions offline.

    Choice questions are re-extracted when only ``response`` is stored;
    blank questions need the stored ``blanks`` judgement.
    """
    records = load_benchmark(gold_path, "exam")
    rows = _read_predictions(Path(pred_path))
    settings = {"mode": "offline", "tool_version": __version__}
    return _score_exam_rows(name or Path(gold_path).stem, records, rows, settings)
