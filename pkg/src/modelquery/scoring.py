"""Score run answers against references.

Three mechanisms: a binary LLM judge for per-answer accuracy, claim-level
precision/recall/F1 (decompose both texts into atomic claims, cross-verify
support, count TP/FP/FN), and an LLM-free structural scorer that compares
the fenced JSON fact block the prompts request against the oracle facts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .agent import default_template, render_template
from .ecore import FieldFact, strip_type_ref
from .errors import ModelQueryError
from .llm import ChatMessage, system, user


class ScoringError(ModelQueryError):
    pass


class UnparseableVerdict(ScoringError):
    """Judge output was not a bare 0/1 even after one re-ask."""


class MalformedFactBlock(ScoringError):
    """The answer's fenced JSON block does not hold a list of fact objects."""


@dataclass(frozen=True)
class FactualScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FactualScore":
        return cls(
            tp=int(d["tp"]), fp=int(d["fp"]), fn=int(d["fn"]),
            precision=float(d["precision"]), recall=float(d["recall"]),
            f1=float(d["f1"]),
        )


ZERO_SCORE = FactualScore(tp=0, fp=0, fn=0, precision=0.0, recall=0.0, f1=0.0)


@dataclass(frozen=True)
class JudgeVerdict:
    score: int  # 0 or 1
    rationale: str | None = None

    def __post_init__(self):
        if self.score not in (0, 1):
            raise ValueError(f"verdict score must be 0 or 1, got {self.score}")


def _score_from(tp: int, fp: int, fn: int) -> FactualScore:
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return FactualScore(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)


def factual_scores(answer_claims_verified: list[bool],
                   reference_claims_verified: list[bool]) -> FactualScore:
    """TP/FP from the answer side, FN from the reference side.

    TP: answer claims supported by the reference. FP: answer claims the
    reference does not support. FN: reference claims the answer does not
    support. All 0/0 ratios resolve to 0.
    """
    tp = sum(1 for v in answer_claims_verified if v)
    fp = len(answer_claims_verified) - tp
    fn = sum(1 for v in reference_claims_verified if not v)
    return _score_from(tp, fp, fn)


def _parse_verdict_text(text: str) -> int | None:
    candidate = text.strip()
    if candidate in ("0", "1"):
        return int(candidate)
    try:
        obj = json.loads(candidate)
    except json.JSONDecodeError:
        return None
    if isinstance(obj, int) and obj in (0, 1):
        return obj
    if isinstance(obj, dict) and obj.get("score") in (0, 1):
        return obj["score"]
    return None


def judge_binary(question: str, reference_text: str, answer: str,
                 judge_backend, template: str | None = None) -> JudgeVerdict:
    """Binary correct/incorrect judgment, strict integer output.

    One re-ask is allowed when the first reply is not parseable; after
    that the run is reported as unscored via UnparseableVerdict.
    """
    for name, value in (("question", question), ("reference", reference_text),
                        ("answer", answer)):
        if not value or not value.strip():
            raise ValueError(f"{name} must be non-empty")
    template = template or default_template("judge")
    prompt = render_template(template, {
        "question": question, "reference": reference_text, "answer": answer,
    })
    messages: list[ChatMessage] = [
        system("You are a strict evaluator. Follow the output format exactly."),
        user(prompt),
    ]
    reply, _ = judge_backend.complete(messages, tools=None)
    score = _parse_verdict_text(reply.content)
    if score is None:
        messages.append(reply)
        messages.append(user("Respond with a single integer only: 0 or 1."))
        reply, _ = judge_backend.complete(messages, tools=None)
        score = _parse_verdict_text(reply.content)
    if score is None:
        raise UnparseableVerdict(f"judge replied: {reply.content[:200]!r}")
    return JudgeVerdict(score=score)


_CLAIM_PREFIX = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def decompose_claims(text: str, backend, template: str | None = None) -> list[str]:
    """One atomic claim per output line; empty input short-circuits to []."""
    if not text or not text.strip():
        return []
    template = template or default_template("decompose")
    prompt = render_template(template, {"text": text})
    messages = [
        system("You decompose text into atomic factual claims."),
        user(prompt),
    ]
    reply, _ = backend.complete(messages, tools=None)
    claims = []
    for line in reply.content.splitlines():
        claim = _CLAIM_PREFIX.sub("", line).strip()
        if claim:
            claims.append(claim)
    return claims


def verify_claims(claims: list[str], against_text: str, backend,
                  template: str | None = None) -> list[bool]:
    """One support verdict per claim, order preserved."""
    if not claims:
        return []
    template = template or default_template("verify")
    numbered = "\n".join(f"{i}. {c}" for i, c in enumerate(claims, start=1))
    prompt = render_template(template, {
        "premise": against_text, "claims": numbered,
    })
    messages = [
        system("You check whether claims are supported by a premise."),
        user(prompt),
    ]
    reply, _ = backend.complete(messages, tools=None)
    verdicts: list[bool] = []
    for line in reply.content.splitlines():
        line = line.strip()
        if not line:
            continue
        m = re.search(r"([01])\s*$", line)
        if m is None:
            raise ScoringError(f"unparseable verification line: {line!r}")
        verdicts.append(m.group(1) == "1")
    if len(verdicts) != len(claims):
        raise ScoringError(
            f"expected {len(claims)} verdicts, got {len(verdicts)}"
        )
    return verdicts


def claim_level_score(answer: str, reference_text: str, backend,
                      decompose_template: str | None = None,
                      verify_template: str | None = None) -> FactualScore:
    """Full claim pipeline: decompose both texts, cross-verify, score.

    Claims are deduplicated by normalized text so rephrasings are not
    counted twice. Backend calls happen in a fixed order (decompose answer,
    verify answer claims, decompose reference, verify reference claims) so
    scripted backends can follow along.
    """
    def dedup(claims: list[str]) -> list[str]:
        seen = set()
        out = []
        for c in claims:
            key = " ".join(c.lower().split())
            if key not in seen:
                seen.add(key)
                out.append(c)
        return out

    answer_claims = dedup(decompose_claims(answer, backend, decompose_template))
    answer_verified = verify_claims(answer_claims, reference_text, backend,
                                    verify_template)
    reference_claims = dedup(decompose_claims(reference_text, backend,
                                              decompose_template))
    reference_verified = verify_claims(reference_claims, answer, backend,
                                       verify_template)
    return factual_scores(answer_verified, reference_verified)


_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def extract_fact_block(text: str) -> list[dict] | None:
    """Pull the last fenced JSON fact list out of an answer.

    Returns None when no fenced block is present (the record is then
    ineligible for structural scoring); raises MalformedFactBlock when a
    block exists but is not a JSON array of objects.
    """
    blocks = _FENCE.findall(text or "")
    if not blocks:
        return None
    raw = blocks[-1].strip()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedFactBlock(f"fact block is not valid JSON: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(x, dict) for x in data):
        raise MalformedFactBlock("fact block must be a JSON array of objects")
    return data


def _fact_key(name: str, type_name: str) -> tuple[str, str]:
    # Names compare case-insensitively; types are namespace-stripped.
    return (name.strip().lower(), strip_type_ref(type_name.strip()))


def _keys_from_dicts(facts: list[dict]) -> set[tuple[str, str]]:
    keys = set()
    for f in facts:
        name = str(f.get("name", ""))
        type_name = str(f.get("type") or f.get("type_name") or "")
        if not name:
            raise MalformedFactBlock(f"fact without a name: {f!r}")
        keys.add(_fact_key(name, type_name))
    return keys


def structural_match(answer_facts: list[dict] | list[FieldFact],
                     reference_facts: list[dict] | list[FieldFact]) -> FactualScore:
    """Deterministic set match on (name, type); multiplicity is ignored."""
    def keys_of(facts) -> set[tuple[str, str]]:
        if facts and isinstance(facts[0], FieldFact):
            return {_fact_key(f.name, f.type_name) for f in facts}
        return _keys_from_dicts(list(facts))

    answer_keys = keys_of(answer_facts)
    reference_keys = keys_of(reference_facts)
    tp = len(answer_keys & reference_keys)
    fp = len(answer_keys - reference_keys)
    fn = len(reference_keys - answer_keys)
    return _score_from(tp, fp, fn)
