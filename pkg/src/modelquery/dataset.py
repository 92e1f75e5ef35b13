"""Question/reference-answer datasets over a parsed metamodel.

Structural questions (three categories: own fields, fields along a single
inheritance chain, fields across multiple chains) are generated from the
semantic index, so every reference answer is oracle-derived and can be
re-checked at any time. Semantic questions cannot be generated and are
loaded from a hand-authored file. Datasets are JSON-Lines with a header
line carrying the model file's SHA-256 to detect drift.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from enum import Enum

from . import ecore
from .ecore import ChainKind, FieldFact, Metamodel
from .errors import ModelQueryError


class DatasetError(ModelQueryError):
    pass


class DuplicateId(DatasetError):
    pass


class InsufficientEligibleClasses(DatasetError):
    def __init__(self, category: "Category", found: int, requested: int):
        self.category = category
        self.found = found
        self.requested = requested
        super().__init__(
            f"{category.value}: requested {requested} questions "
            f"but only {found} eligible classes"
        )


class Category(str, Enum):
    DIRECT = "DirectClassInspection"
    SINGLE_CHAIN = "SingleInheritanceChain"
    MULTI_CHAIN = "MultipleInheritanceChains"
    SEMANTIC = "SemanticQuery"


STRUCTURAL_CATEGORIES = (Category.DIRECT, Category.SINGLE_CHAIN, Category.MULTI_CHAIN)

_QUESTION_TEMPLATES = {
    Category.DIRECT: (
        "What are the fields of {cls} class? Provide names and data types "
        "of only this class, don't list fields of base classes."
    ),
    Category.SINGLE_CHAIN: (
        "What are all the fields of {cls} class, including fields inherited "
        "from its base classes? Provide names and data types, and say which "
        "class each field comes from."
    ),
    Category.MULTI_CHAIN: (
        "What are all the fields of {cls} class, aggregated across all of "
        "its inheritance chains? Provide names and data types, and say "
        "which class each field comes from."
    ),
}

_ID_PREFIX = {
    Category.DIRECT: "direct",
    Category.SINGLE_CHAIN: "single",
    Category.MULTI_CHAIN: "multi",
    Category.SEMANTIC: "semantic",
}


@dataclass(frozen=True)
class QuestionRecord:
    id: str
    category: Category
    question: str
    target_classes: tuple[str, ...] = ()
    reference_text: str = ""
    reference_facts: tuple[FieldFact, ...] = ()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category.value,
            "question": self.question,
            "target_classes": list(self.target_classes),
            "reference_text": self.reference_text,
            "reference_facts": [f.to_dict() for f in self.reference_facts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionRecord":
        return cls(
            id=d["id"],
            category=Category(d["category"]),
            question=d["question"],
            target_classes=tuple(d.get("target_classes", [])),
            reference_text=d.get("reference_text", ""),
            reference_facts=tuple(
                FieldFact.from_dict(f) for f in d.get("reference_facts", [])
            ),
        )


def render_reference_text(mm: Metamodel, class_name: str,
                          facts: list[FieldFact], inherited: bool) -> str:
    """Reference answer in the numbered name/data-type layout."""
    if inherited:
        head = (
            f"The {class_name} class has the following fields, including "
            "fields inherited from its base classes:"
        )
    else:
        head = f"The {class_name} class has the following fields defined directly:"
    parts = [head, ""]
    for i, f in enumerate(facts, start=1):
        gloss = ecore.type_gloss(mm, f.type_name)
        shown_type = f"{f.type_name} ({gloss})" if gloss else f.type_name
        parts.append(f"{i}. name: {f.name}")
        parts.append(f"   - data type: {shown_type}")
        parts.append(f"   - lowerBound: {f.lower}")
        if f.upper != 1:
            parts.append(f"   - upperBound: {f.upper}")
        if f.default_literal is not None:
            parts.append(f"   - defaultValueLiteral: {f.default_literal}")
        if f.origin_class != f.owner_class:
            parts.append(f"   - defined in: {f.origin_class}")
        parts.append("")
    return "\n".join(parts).rstrip() + "\n"


def eligible_classes(mm: Metamodel, category: Category) -> list[str]:
    """Eligibility per category, sorted by class name.

    Direct inspection needs at least one declared field; single-chain needs
    a SingleChain shape of depth >= 1 plus at least one inherited field;
    multi-chain needs a MultiChain shape.
    """
    names = []
    for c in mm.classifiers:
        if c.kind is not ecore.ClassifierKind.CLASS:
            continue
        shape = ecore.inheritance_shape(mm, c.name)
        if category is Category.DIRECT:
            if len(c.features) >= 1:
                names.append(c.name)
        elif category is Category.SINGLE_CHAIN:
            if shape.variant is ChainKind.SINGLE_CHAIN and shape.depth >= 1:
                inherited = [
                    f for f in ecore.all_fields(mm, c.name)
                    if f.origin_class != c.name
                ]
                if inherited:
                    names.append(c.name)
        elif category is Category.MULTI_CHAIN:
            if shape.variant is ChainKind.MULTI_CHAIN:
                names.append(c.name)
        else:
            raise ValueError("semantic questions are not generated")
    return sorted(names)


def generate_structural_questions(mm: Metamodel, category: Category,
                                  n: int, seed: int) -> list[QuestionRecord]:
    """Deterministically sample n eligible classes and build their records.

    The eligible list is sorted by name, permuted by a seeded PRNG, and the
    first n entries are taken, so identical (model, category, n, seed)
    always yields identical records.
    """
    if category is Category.SEMANTIC:
        raise ValueError("semantic questions are hand-authored, not generated")
    pool = eligible_classes(mm, category)
    if len(pool) < n:
        raise InsufficientEligibleClasses(category, len(pool), n)
    rng = random.Random(seed)
    permuted = list(pool)
    rng.shuffle(permuted)
    selected = permuted[:n]
    records = []
    for i, cls_name in enumerate(selected, start=1):
        if category is Category.DIRECT:
            facts = ecore.own_fields(mm, cls_name)
            inherited = False
        else:
            facts = ecore.all_fields(mm, cls_name)
            inherited = True
        records.append(QuestionRecord(
            id=f"{_ID_PREFIX[category]}-{i:02d}",
            category=category,
            question=_QUESTION_TEMPLATES[category].format(cls=cls_name),
            target_classes=(cls_name,),
            reference_text=render_reference_text(mm, cls_name, facts, inherited),
            reference_facts=tuple(facts),
        ))
    return records


def load_semantic_questions(path) -> list[QuestionRecord]:
    """Hand-authored semantic questions: JSONL of {id, question, reference_text}."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("id", "question", "reference_text"):
                if key not in d:
                    raise DatasetError(f"{path}:{lineno}: missing key {key!r}")
            records.append(QuestionRecord(
                id=d["id"],
                category=Category.SEMANTIC,
                question=d["question"],
                target_classes=tuple(d.get("target_classes", [])),
                reference_text=d["reference_text"],
            ))
    return records


def _check_unique_ids(records: list[QuestionRecord], source: str = "dataset"):
    seen: set[str] = set()
    for r in records:
        if r.id in seen:
            raise DuplicateId(f"{source}: duplicate question id {r.id!r}")
        seen.add(r.id)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_dataset(records: list[QuestionRecord], path, *,
                 model_path: str = "", model_sha256: str = "",
                 created: str | None = None) -> None:
    """Write header line + one record per line.

    `created` stays null unless the caller supplies a timestamp, keeping
    generated datasets byte-identical across reruns.
    """
    _check_unique_ids(records)
    header = {
        "model_path": model_path,
        "model_sha256": model_sha256,
        "created": created,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def dataset_header(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first:
        return {}
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}:1: invalid header line: {exc}") from exc
    if "id" in header:  # headerless file written by hand
        return {}
    return header


def load_dataset(path) -> list[QuestionRecord]:
    """Read records back; the header line is validated and skipped."""
    records: list[QuestionRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if lineno == 1 and "id" not in d:
                continue  # header
            try:
                records.append(QuestionRecord.from_dict(d))
            except (KeyError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: bad record: {exc}") from exc
    _check_unique_ids(records, source=str(path))
    return records


def verify_against_oracle(records: list[QuestionRecord], mm: Metamodel) -> list[str]:
    """Re-derive structural reference facts; return human-readable drift notes."""
    problems = []
    for r in records:
        if r.category is Category.SEMANTIC or not r.target_classes:
            continue
        cls_name = r.target_classes[0]
        if r.category is Category.DIRECT:
            expected = tuple(ecore.own_fields(mm, cls_name))
        else:
            expected = tuple(ecore.all_fields(mm, cls_name))
        if expected != r.reference_facts:
            problems.append(f"{r.id}: reference facts no longer match the model")
    return problems
