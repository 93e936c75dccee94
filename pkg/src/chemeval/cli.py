"""Command-line entry point: ``chemeval <command> ...``.

Exit codes: 0 success, 1 usage error, 2 benchmark/schema/SMILES error,
3 endpoint configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .clients import EndpointConfigError
from .datasets import (
    MissingBinding,
    NoTemplateForTask,
    QaItem,
    SchemaError,
    build_qa_pairs,
    iter_jsonl,
    load_templates,
)
from .fingerprint import FingerprintParams, GoldInvalid, InvalidParameter, similarity_of_smiles
from .metrics import EmptyBenchmark, EvalReport, format_pct
from .runner import (
    ConfigError,
    load_config,
    run_exam_eval,
    run_ocr_eval,
    score_exam_predictions,
    score_ocr_predictions,
    write_report,
)
from .smiles import InvalidSmiles, canonicalize, validate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ENDPOINT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        raise UsageError(f"{self.prog}: {message}")


def _fp_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--radius", type=int, default=2, help="fingerprint radius (default 2)")
    p.add_argument("--bits", type=int, default=2048, help="fingerprint width (default 2048)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chemeval", description=__doc__.splitlines()[0])
    parser.add_argument("--json", action="store_true", help="machine-readable errors on stderr")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check SMILES strings")
    p.add_argument("smiles", nargs="+")

    p = sub.add_parser("canon", help="print canonical SMILES")
    p.add_argument("smiles", nargs="+")

    p = sub.add_parser("sim", help="Tanimoto similarity of a prediction against a reference")
    p.add_argument("pred")
    p.add_argument("gold")
    _fp_args(p)

    p = sub.add_parser("eval", help="run a model over a benchmark")
    p.add_argument("schema", choices=["ocr", "exam"])
    p.add_argument("--config", required=True, type=Path)

    p = sub.add_parser("score", help="rescore saved predictions without model calls")
    p.add_argument("schema", choices=["ocr", "exam"])
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--gold", required=True, type=Path)
    p.add_argument("--out", type=Path, help="write report.json and report.md here")
    p.add_argument("--name", help="benchmark name in the report")
    _fp_args(p)

    p = sub.add_parser("templates", help="QA template tools")
    tsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    t = tsub.add_parser("expand", help="expand templates into QA pairs (JSONL)")
    t.add_argument("--templates", type=Path, help="template JSONL (default: bundled set)")
    t.add_argument("--bindings", required=True, type=Path)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", type=Path)
    return parser


def _summary(report: EvalReport) -> str:
    if report.schema == "ocr":
        return (
            f"{report.benchmark_name}: n={report.n_records} "
            f"avg_sim={format_pct(report.avg_similarity_pct)} "
            f"tani@1.0={format_pct(report.tanimoto_at_1_pct)} "
            f"warnings={len(report.warnings)}"
        )
    return (
        f"{report.benchmark_name}: n={report.n_records} "
        f"score={format_pct(report.total_score_pct)} warnings={len(report.warnings)}"
    )


def _cmd_validate(args: argparse.Namespace) -> int:
    status = EXIT_OK
    for s in args.smiles:
        verdict = validate(s)
        if verdict:
            print(f"ok\t{s}")
        else:
            print(f"error\t{s}\t{verdict.reason} (position {verdict.position})")
            status = EXIT_DATA
    return status


def _cmd_canon(args: argparse.Namespace) -> int:
    for s in args.smiles:
        print(canonicalize(s))
    return EXIT_OK


def _cmd_sim(args: argparse.Namespace) -> int:
    params = FingerprintParams(args.radius, args.bits)
    print(f"{similarity_of_smiles(args.pred, args.gold, params):.4f}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.schema)
    run = run_ocr_eval if args.schema == "ocr" else run_exam_eval
    report = run(cfg)
    print(_summary(report))
    print(f"wrote {cfg.output_dir}")
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    if args.schema == "ocr":
        params = FingerprintParams(args.radius, args.bits)
        report = score_ocr_predictions(args.pred, args.gold, params, args.name)
    else:
        report = score_exam_predictions(args.pred, args.gold, args.name)
    if args.out:
        write_report(report, args.out)
        print(_summary(report))
    else:
        sys.stdout.write(report.to_json())
    return EXIT_OK


def _cmd_templates(args: argparse.Namespace) -> int:
    templates = load_templates(args.templates)
    items = [QaItem.from_json(obj, line) for line, obj in iter_jsonl(args.bindings)]
    pairs = build_qa_pairs(items, templates, args.seed)
    lines = [
        json.dumps({"id": item.id, "human": h, "assistant": a}, ensure_ascii=False) + "\n"
        for item, (h, a) in zip(items, pairs)
    ]
    if args.out:
        args.out.write_text("".join(lines), encoding="utf-8")
    else:
        sys.stdout.writelines(lines)
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "canon": _cmd_canon,
    "sim": _cmd_sim,
    "eval": _cmd_eval,
    "score": _cmd_score,
    "templates": _cmd_templates,
}

# most specific first
_ERROR_CODES: list[tuple[type[BaseException], int]] = [
    (UsageError, EXIT_USAGE),
    (EndpointConfigError, EXIT_ENDPOINT),
    (ConfigError, EXIT_USAGE),
    (InvalidParameter, EXIT_USAGE),
    (SchemaError, EXIT_DATA),
    (GoldInvalid, EXIT_DATA),
    (InvalidSmiles, EXIT_DATA),
    (EmptyBenchmark, EXIT_DATA),
    (MissingBinding, EXIT_DATA),
    (NoTemplateForTask, EXIT_DATA),
    (FileNotFoundError, EXIT_DATA),
]


def _report_error(exc: BaseException, code: int, as_json: bool) -> None:
    if as_json:
        payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        for attr in ("line", "field", "position", "record_id"):
            if getattr(exc, attr, None) is not None:
                payload[attr] = getattr(exc, attr)
        sys.stderr.write(json.dumps(payload, ensure_ascii=False) + "\n")
    else:
        sys.stderr.write(f"error: {exc}\n")


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json" in argv
    argv = [a for a in argv if a != "--json"]
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.ERROR,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return _COMMANDS[args.command](args)
    except tuple(e for e, _ in _ERROR_CODES) as exc:
        code = next(c for e, c in _ERROR_CODES if isinstance(exc, e))
        _report_error(exc, code, as_json)
        return code


if __name__ == "__main__":
    sys.exit(main())
