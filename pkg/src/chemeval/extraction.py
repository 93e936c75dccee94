"""
Pull the answer out of a free-text model response.

Heuristic extractors are pure and offline. Judge-backed extractors send
one prompt to a text model and parse its reply.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Literal, Protocol, Sequence

from .clients import JudgeUnavailable, Unavailable
from .smiles import BondOrder, InvalidSmiles, parse, validate

__all__ = [
    "BlankJudgement",
    "ExtractedAnswer",
    "Judge",
    "extract_choices",
    "extract_smiles_heuristic",
    "extract_smiles_judge",
    "fill_template",
    "judge_blanks",
    "load_prompt",
    "parse_blank_reply",
]

log = logging.getLogger(__name__)

Kind = Literal["smiles", "choices", "blanks", "free_text", "none"]
Method = Literal["heuristic", "judge"]
CHOICE_LETTERS = "ABCDEFGH"


class Judge(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class ExtractedAnswer:
    kind: Kind
    payload: Any
    method: Method
    raw: str

    def __post_init__(self) -> None:
        if self.kind == "smiles" and not validate(self.payload):
            raise ValueError(f"payload {self.payload!r} is not a valid SMILES")
        if self.kind == "choices":
            if not self.payload or not set(self.payload) <= set(CHOICE_LETTERS):
                raise ValueError(f"bad choice set {self.payload!r}")
            object.__setattr__(self, "payload", frozenset(self.payload))
        if self.kind == "none" and self.payload not in (None, "", ()):
            raise ValueError("kind 'none' carries no payload")

    @classmethod
    def nothing(cls, raw: str, method: Method = "heuristic") -> "ExtractedAnswer":
        return cls("none", None, method, raw)

    @property
    def smiles(self) -> str | None:
        return self.payload if self.kind == "smiles" else None

    def to_dict(self) -> dict[str, Any]:
        payload = self.payload
        if self.kind == "choices":
            payload = sorted(payload)
        elif self.kind == "blanks":
            payload = list(payload)
        return {"kind": self.kind, "payload": payload, "method": self.method}

    @classmethod
    def from_dict(cls, data: dict[str, Any], raw: str = "") -> "ExtractedAnswer":
        payload = data.get("payload")
        if data["kind"] == "blanks":
            payload = tuple(payload)
        return cls(data["kind"], payload, data.get("method", "heuristic"), raw)


# ---------------------------------------------------------------------------
# prompt templates
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    """Read a bundled prompt template, e.g. ``smiles_extract_en``."""
    return resources.files("chemeval").joinpath("data", f"{name}.txt").read_text("utf-8")


_NAMED = re.compile(r"\{([A-Za-z_][A-Za-z_ ]*)?\}")


def fill_template(template: str, *positional: str, **named: Any) -> str:
    """Single-pass substitution; inserted text is never re-scanned."""
    args = iter(positional)

    def sub(m: re.Match) -> str:
        key = m.group(1)
        if key is None:
            return str(next(args))
        return str(named[key]) if key in named else m.group(0)

    return _NAMED.sub(sub, template)


# ---------------------------------------------------------------------------
# SMILES
# ---------------------------------------------------------------------------

_SMILES_RUN = re.compile(r"[A-Za-z0-9\[\]()=#+\-%/\\.@*:]+")
_EDGE_PUNCT = ".,;:!?"


def _trim(candidate: str) -> str:
    prev = None
    while candidate and candidate != prev:
        prev = candidate
        candidate = candidate.strip(_EDGE_PUNCT)
        # markdown bold; a single "*" is a wildcard atom and stays
        if len(candidate) > 4 and candidate.startswith("**") and candidate.endswith("**"):
            candidate = candidate[2:-2]
        if candidate.startswith("(") and candidate.count("(") > candidate.count(")"):
            candidate = candidate[1:]
        if candidate.endswith(")") and candidate.count(")") > candidate.count("("):
            candidate = candidate[:-1]
        if _wrapped(candidate):
            candidate = candidate[1:-1]
    return candidate


def _wrapped(candidate: str) -> bool:
    """True for "(...)" where the first paren closes at the very end."""
    if not (candidate.startswith("(") and candidate.endswith(")")):
        return False
    depth = 0
    for k, ch in enumerate(candidate):
        depth += ch == "("
        depth -= ch == ")"
        if depth == 0:
            return k == len(candidate) - 1
    return False


def _looks_like_prose(candidate: str) -> bool:
    # "I", "C", "O" as bare words are almost always prose, and words like
    # "No" or "Co" parse only as an aromatic atom outside any ring
    try:
        mol = parse(candidate)
    except InvalidSmiles:
        return True
    if len(mol) == 1 and "[" not in candidate:
        return True
    for i, atom in enumerate(mol.atoms):
        if atom.aromatic:
            arom = sum(o is BondOrder.AROMATIC for _, o in mol.adjacency[i])
            if arom < 2:
                return True
    return False


def smiles_candidates(text: str) -> list[str]:
    """Valid SMILES substrings of ``text`` in order of appearance."""
    found = []
    for m in _SMILES_RUN.finditer(text):
        cand = _trim(m.group(0))
        if cand and not _looks_like_prose(cand):
            found.append(cand)
    return found


def extract_smiles_heuristic(response: str) -> ExtractedAnswer:
    """Longest valid SMILES-alphabet run in ``response``; ties go to the last one.

    A response that is nothing but one SMILES is taken as is. Otherwise lone
    unbracketed atoms and aromatic atoms outside a ring are skipped.
    """
    whole = _trim(response.strip().strip("`'\""))
    if whole and _SMILES_RUN.fullmatch(whole) and validate(whole):
        return ExtractedAnswer("smiles", whole, "heuristic", response)
    best: str | None = None
    for cand in smiles_candidates(response):
        if best is None or len(cand) >= len(best):
            best = cand
    if best is None:
        return ExtractedAnswer.nothing(response)
    return ExtractedAnswer("smiles", best, "heuristic", response)


def _clean_judge_reply(reply: str) -> str:
    lines = [ln.strip() for ln in reply.strip().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("```")]
    if not lines:
        return ""
    text = lines[0]
    text = text.strip("`'\" ")
    if text.lower().startswith("smiles:"):
        text = text[7:].strip()
    return text.rstrip(".")


def extract_smiles_judge(response: str, judge: Judge, lang: str = "en") -> ExtractedAnswer:
    """Ask ``judge`` to extract the SMILES; fall back to the heuristic on a bad reply.

    Raises :class:`JudgeUnavailable` when the judge cannot be reached.
    """
    if lang not in ("en", "zh"):
        raise ValueError(f"unsupported language {lang!r}")
    prompt = fill_template(load_prompt(f"smiles_extract_{lang}"), response)
    try:
        reply = judge.complete(prompt)
    except JudgeUnavailable:
        raise
    except Unavailable as exc:
        raise JudgeUnavailable(str(exc), exc.attempts) from exc
    candidate = _clean_judge_reply(reply)
    if candidate and validate(candidate):
        return ExtractedAnswer("smiles", candidate, "judge", response)
    log.debug("judge reply %r is not a SMILES; using heuristic", reply)
    return extract_smiles_heuristic(response)


# ---------------------------------------------------------------------------
# choices
# ---------------------------------------------------------------------------

# a run of choice letters not glued to other ASCII letters or digits
_CHOICE_RUN = re.compile(r"(?<![A-Za-z0-9])([A-H]+)(?![A-Za-z0-9])")
_ARTICLE = re.compile(r"\s+[a-z]")


def _choice_letters(line: str) -> set[str]:
    letters: set[str] = set()
    for m in _CHOICE_RUN.finditer(line):
        run = m.group(1)
        if run == "A" and _ARTICLE.match(line, m.end()):
            continue  # English article: "A good answer ..."
        if len(set(run)) != len(run):
            continue  # repeated letters ("ABBA") are not a choice set
        letters.update(run)
    return letters


def extract_choices(response: str) -> ExtractedAnswer:
    """Choice letters A-H from the last line that mentions any of them."""
    for line in reversed(response.splitlines()):
        letters = _choice_letters(line)
        if letters:
            return ExtractedAnswer("choices", frozenset(letters), "heuristic", response)
    return ExtractedAnswer.nothing(response)


# ---------------------------------------------------------------------------
# fill-in-the-blank scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlankJudgement:
    marks: tuple[bool, ...]
    malformed: bool = False
    reply: str = ""

    @property
    def all_correct(self) -> bool:
        return bool(self.marks) and all(self.marks)


_BLANK_LINE = re.compile(r"^\s*[01](\s*[,，]\s*[01])*\s*$")


def parse_blank_reply(reply: str, n_blanks: int) -> BlankJudgement:
    """Parse a ``1,0,1`` style reply; anything else marks every blank wrong."""
    for line in reversed(reply.strip().splitlines()):
        if _BLANK_LINE.match(line):
            marks = tuple(tok.strip() == "1" for tok in re.split(r"[,，]", line))
            if len(marks) == n_blanks:
                return BlankJudgement(marks, False, reply)
            break
    log.warning("malformed blank-scoring reply %r for %d blanks", reply[:80], n_blanks)
    return BlankJudgement((False,) * n_blanks, True, reply)


def judge_blanks(
    question: str,
    gold_blanks: Sequence[str],
    response: str,
    judge: Judge,
    lang: str = "en",
) -> BlankJudgement:
    """One judge call deciding each blank of ``response`` right or wrong."""
    if not gold_blanks:
        raise ValueError("gold_blanks must not be empty")
    if lang not in ("en", "zh"):
        raise ValueError(f"unsupported language {lang!r}")
    gold = "\n".join(f"({k}) {g}" for k, g in enumerate(gold_blanks, start=1))
    prompt = fill_template(
        load_prompt(f"blank_score_{lang}"),
        question=question,
        gold=gold,
        response=response,
        n=len(gold_blanks),
    )
    try:
        reply = judge.complete(prompt)
    except JudgeUnavailable:
        raise
    except Unavailable as exc:
        raise JudgeUnavailable(str(exc), exc.attempts) from exc
    return parse_blank_reply(reply, len(gold_blanks))
