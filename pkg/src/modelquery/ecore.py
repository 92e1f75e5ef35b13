"""Parse single-file Ecore (XMI) metamodels into a queryable semantic index.

The index answers the structural questions the rest of the package relies on:
declared fields of a class, inherited fields across the supertype closure,
and the shape of a class's inheritance (none / single chain / multiple
chains). It is the ground-truth oracle for dataset generation and scoring.
"""

from __future__ import annotations

import difflib
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum

from .errors import ModelQueryError

ECORE_NS_URI = "http://www.eclipse.org/emf/2002/Ecore"

# Human-readable glosses for the Ecore built-in data types that show up in
# reference answers, e.g. "EDouble (double)".
PRIMITIVE_GLOSS = {
    "EString": "string",
    "EInt": "int",
    "EInteger": "int",
    "EBoolean": "boolean",
    "EDouble": "double",
    "EFloat": "float",
    "ELong": "long",
    "EShort": "short",
    "EChar": "char",
    "EByte": "byte",
    "EDate": "date",
    "EBigDecimal": "decimal",
    "EBigInteger": "integer",
}


class MalformedXml(ModelQueryError):
    """Input is not well-formed XML or lacks a single root package."""


class EmptyModel(ModelQueryError):
    """The package defines no classifiers at all."""


class NotFound(ModelQueryError):
    """No classifier with the requested name exists in the package."""

    def __init__(self, name: str, suggestions: list[str] | None = None):
        self.name = name
        self.suggestions = suggestions or []
        msg = f"no classifier named {name!r}"
        if self.suggestions:
            msg += " (did you mean: " + ", ".join(self.suggestions) + "?)"
        super().__init__(msg)


class CyclicInheritance(ModelQueryError):
    """The supertype graph contains a cycle."""


class ClassifierKind(str, Enum):
    CLASS = "Class"
    ENUM = "Enum"
    DATATYPE = "DataType"


class FeatureKind(str, Enum):
    ATTRIBUTE = "Attribute"
    REFERENCE = "Reference"


class ChainKind(str, Enum):
    NO_SUPERTYPES = "NoSupertypes"
    SINGLE_CHAIN = "SingleChain"
    MULTI_CHAIN = "MultiChain"


@dataclass(frozen=True)
class InheritanceShape:
    variant: ChainKind
    depth: int = 0  # strict-ancestor count, SingleChain only


@dataclass(frozen=True)
class Feature:
    kind: FeatureKind
    name: str
    type_name: str
    lower_bound: int = 0
    upper_bound: int = 1  # -1 means unbounded
    default_literal: str | None = None
    containment: bool = False
    documentation: str | None = None
    type_unresolved: bool = False  # eType points at a non-Ecore external resource


@dataclass(frozen=True)
class Classifier:
    kind: ClassifierKind
    name: str
    abstract: bool = False
    supertypes: tuple[str, ...] = ()
    features: tuple[Feature, ...] = ()
    literals: tuple[str, ...] = ()
    documentation: str | None = None


@dataclass(frozen=True)
class FieldFact:
    """One field as it appears in a reference answer.

    owner_class is the class the question was asked about; origin_class is
    the class that actually declares the feature (they differ for inherited
    fields).
    """

    owner_class: str
    origin_class: str
    name: str
    type_name: str
    lower: int
    upper: int
    default_literal: str | None = None

    def to_dict(self) -> dict:
        return {
            "owner_class": self.owner_class,
            "origin_class": self.origin_class,
            "name": self.name,
            "type_name": self.type_name,
            "lower": self.lower,
            "upper": self.upper,
            "default_literal": self.default_literal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FieldFact":
        return cls(
            owner_class=d["owner_class"],
            origin_class=d["origin_class"],
            name=d["name"],
            type_name=d["type_name"],
            lower=int(d["lower"]),
            upper=int(d["upper"]),
            default_literal=d.get("default_literal"),
        )


@dataclass(frozen=True)
class Metamodel:
    """Immutable after parsing; safe to share across concurrent readers."""

    package_name: str
    classifiers: tuple[Classifier, ...]
    source_path: str
    line_count: int
    warnings: tuple[str, ...] = ()
    _by_name: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_by_name", {c.name: c for c in self.classifiers}
        )

    def names(self) -> list[str]:
        return [c.name for c in self.classifiers]


def _local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _xsi_type(elem: ET.Element) -> str:
    for key, value in elem.attrib.items():
        if _local_name(key) == "type":
            return value.rsplit(":", 1)[-1]
    return ""


def strip_type_ref(ref: str) -> str:
    """Reduce an eType/eSuperTypes reference to its bare classifier name.

    Handles both local fragments ("#//FrequencyUnit") and full URIs with a
    type discriminator ("ecore:EDataType http://...Ecore#//EDouble").
    """
    ref = ref.strip().split()[-1] if ref.strip() else ""
    if "//" in ref:
        ref = ref.rsplit("//", 1)[-1]
    return ref.lstrip("#")


def _is_external_ref(ref: str) -> bool:
    # Local fragments start with "#//"; anything carrying a URI body is a
    # cross-file reference.
    token = ref.strip().split()[-1] if ref.strip() else ""
    return bool(token) and not token.startswith("#")


def _is_ecore_builtin_ref(ref: str) -> bool:
    return ECORE_NS_URI in ref


def _documentation(elem: ET.Element) -> str | None:
    for ann in elem:
        if _local_name(ann.tag) != "eAnnotations":
            continue
        for detail in ann:
            if _local_name(detail.tag) != "details":
                continue
            if detail.get("key") == "documentation":
                return detail.get("value")
    return None


def _type_ref_of(elem: ET.Element) -> str:
    """eType attribute, eType child href, or eGenericType classifier ref."""
    ref = elem.get("eType")
    if ref:
        return ref
    for child in elem:
        local = _local_name(child.tag)
        if local == "eType":
            href = child.get("href")
            if href:
                return href
        elif local == "eGenericType":
            # Type arguments of generics are ignored; only the classifier
            # reference matters here.
            eclassifier = child.get("eClassifier")
            if eclassifier:
                return eclassifier
            grand = child.find("*[@href]")
            if grand is not None:
                return grand.get("href", "")
    return ""


def _parse_feature(elem: ET.Element, warnings: list[str],
                   owner: str, local_names: set[str]) -> Feature | None:
    xsi = _xsi_type(elem)
    if xsi == "EAttribute":
        kind = FeatureKind.ATTRIBUTE
    elif xsi == "EReference":
        kind = FeatureKind.REFERENCE
    else:
        warnings.append(f"{owner}: skipping structural feature of type {xsi or '?'}")
        return None
    name = elem.get("name", "")
    if not name:
        warnings.append(f"{owner}: structural feature without a name skipped")
        return None
    raw_ref = _type_ref_of(elem)
    type_name = strip_type_ref(raw_ref)
    unresolved = (
        _is_external_ref(raw_ref)
        and not _is_ecore_builtin_ref(raw_ref)
        and type_name not in local_names
    )
    lower = int(elem.get("lowerBound", "0"))
    upper = int(elem.get("upperBound", "1"))
    if upper != -1 and upper < lower:
        warnings.append(
            f"{owner}.{name}: upperBound {upper} below lowerBound {lower}"
        )
    return Feature(
        kind=kind,
        name=name,
        type_name=type_name,
        lower_bound=lower,
        upper_bound=upper,
        default_literal=elem.get("defaultValueLiteral"),
        containment=(elem.get("containment") == "true") if kind is FeatureKind.REFERENCE else False,
        documentation=_documentation(elem),
        type_unresolved=unresolved,
    )


def _supertype_refs(elem: ET.Element) -> list[str]:
    refs: list[str] = []
    attr = elem.get("eSuperTypes")
    if attr:
        refs.extend(attr.split())
    for child in elem:
        if _local_name(child.tag) == "eSuperTypes":
            href = child.get("href")
            if href:
                refs.append(href)
    return refs


def parse_metamodel(text: str, source_path: str = "<memory>") -> Metamodel:
    """Parse the full contents of an .ecore file into a Metamodel.

    Raises MalformedXml for unparseable input and EmptyModel when the
    package contains no classifiers. Everything non-fatal (unresolved
    supertypes, bound violations, duplicate names) lands in
    Metamodel.warnings.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedXml(f"{source_path}: {exc}") from exc
    if _local_name(root.tag) != "EPackage":
        raise MalformedXml(
            f"{source_path}: root element is {_local_name(root.tag)!r}, expected EPackage"
        )

    warnings: list[str] = []
    classifier_elems = [
        e for e in root if _local_name(e.tag) == "eClassifiers"
    ]
    local_names = {e.get("name", "") for e in classifier_elems}

    classifiers: list[Classifier] = []
    seen: set[str] = set()
    for elem in classifier_elems:
        name = elem.get("name", "")
        if not name:
            warnings.append("classifier without a name skipped")
            continue
        if name in seen:
            warnings.append(f"duplicate classifier name {name!r}; later one skipped")
            continue
        seen.add(name)
        xsi = _xsi_type(elem)
        doc = _documentation(elem)
        if xsi == "EClass":
            supers: list[str] = []
            for ref in _supertype_refs(elem):
                sname = strip_type_ref(ref)
                if sname not in local_names:
                    warnings.append(
                        f"{name}: unresolved supertype reference {ref!r}"
                    )
                supers.append(sname)
            features = []
            feat_names: set[str] = set()
            for child in elem:
                if _local_name(child.tag) != "eStructuralFeatures":
                    continue
                feat = _parse_feature(child, warnings, name, local_names)
                if feat is None:
                    continue
                if feat.name in feat_names:
                    warnings.append(f"{name}: duplicate feature name {feat.name!r}")
                feat_names.add(feat.name)
                features.append(feat)
            classifiers.append(Classifier(
                kind=ClassifierKind.CLASS,
                name=name,
                abstract=(elem.get("abstract") == "true"),
                supertypes=tuple(supers),
                features=tuple(features),
                documentation=doc,
            ))
        elif xsi == "EEnum":
            literals = tuple(
                lit.get("name", "")
                for lit in elem
                if _local_name(lit.tag) == "eLiterals"
            )
            classifiers.append(Classifier(
                kind=ClassifierKind.ENUM, name=name,
                literals=literals, documentation=doc,
            ))
        elif xsi == "EDataType":
            classifiers.append(Classifier(
                kind=ClassifierKind.DATATYPE, name=name, documentation=doc,
            ))
        else:
            warnings.append(f"{name}: unknown classifier type {xsi or '?'} skipped")

    if not classifiers:
        raise EmptyModel(f"{source_path}: package defines no classifiers")

    return Metamodel(
        package_name=root.get("name", ""),
        classifiers=tuple(classifiers),
        source_path=source_path,
        line_count=len(text.splitlines()),
        warnings=tuple(warnings),
    )


def load_metamodel(path) -> Metamodel:
    with open(path, encoding="utf-8") as fh:
        return parse_metamodel(fh.read(), source_path=str(path))


def class_by_name(mm: Metamodel, name: str) -> Classifier:
    """Look up any classifier by exact name; NotFound carries suggestions."""
    found = mm._by_name.get(name)
    if found is not None:
        return found
    lowered = name.lower()
    suggestions = [n for n in mm.names() if n.lower() == lowered]
    if not suggestions:
        suggestions = difflib.get_close_matches(name, mm.names(), n=3)
    raise NotFound(name, suggestions)


def _require_class(mm: Metamodel, name: str) -> Classifier:
    c = class_by_name(mm, name)
    return c


def own_fields(mm: Metamodel, class_name: str) -> list[FieldFact]:
    """Declared fields only, in declaration order; inheritance ignored."""
    c = _require_class(mm, class_name)
    return [
        FieldFact(
            owner_class=class_name,
            origin_class=class_name,
            name=f.name,
            type_name=f.type_name,
            lower=f.lower_bound,
            upper=f.upper_bound,
            default_literal=f.default_literal,
        )
        for f in c.features
    ]


def supertype_closure(mm: Metamodel, class_name: str) -> list[str]:
    """Depth-first pre-order over declared supertypes, self first.

    Duplicates keep the first visit; a diamond D -> (B, C), B -> A, C -> A
    therefore yields [D, B, A, C]. Raises CyclicInheritance on cycles.
    """
    _require_class(mm, class_name)
    order: list[str] = []
    visited: set[str] = set()

    def visit(name: str, path: tuple[str, ...]):
        if name in path:
            cycle = " -> ".join(path[path.index(name):] + (name,))
            raise CyclicInheritance(f"inheritance cycle: {cycle}")
        if name in visited:
            return
        visited.add(name)
        order.append(name)
        c = mm._by_name.get(name)
        if c is None:
            return
        for sup in c.supertypes:
            if sup in mm._by_name:
                visit(sup, path + (name,))

    visit(class_name, ())
    return order


def all_fields(mm: Metamodel, class_name: str) -> list[FieldFact]:
    """Own plus inherited fields, in supertype-closure traversal order.

    Each closure member contributes its declared features with origin_class
    set to the declaring class. When two inheritance paths contribute the
    same feature name, the first occurrence in traversal order wins.
    """
    facts: list[FieldFact] = []
    seen_names: set[str] = set()
    for origin in supertype_closure(mm, class_name):
        c = mm._by_name.get(origin)
        if c is None or c.kind is not ClassifierKind.CLASS:
            continue
        for f in c.features:
            if f.name in seen_names:
                continue
            seen_names.add(f.name)
            facts.append(FieldFact(
                owner_class=class_name,
                origin_class=origin,
                name=f.name,
                type_name=f.type_name,
                lower=f.lower_bound,
                upper=f.upper_bound,
                default_literal=f.default_literal,
            ))
    return facts


def inheritance_shape(mm: Metamodel, class_name: str) -> InheritanceShape:
    closure = supertype_closure(mm, class_name)
    if len(closure) == 1:
        return InheritanceShape(ChainKind.NO_SUPERTYPES)
    for name in closure:
        c = mm._by_name.get(name)
        if c is not None and len(c.supertypes) >= 2:
            return InheritanceShape(ChainKind.MULTI_CHAIN)
    return InheritanceShape(ChainKind.SINGLE_CHAIN, depth=len(closure) - 1)


def model_stats(mm: Metamodel) -> dict:
    counts = {kind: 0 for kind in ClassifierKind}
    for c in mm.classifiers:
        counts[c.kind] += 1
    return {
        "class_count": counts[ClassifierKind.CLASS],
        "enum_count": counts[ClassifierKind.ENUM],
        "datatype_count": counts[ClassifierKind.DATATYPE],
        "line_count": mm.line_count,
    }


def type_gloss(mm: Metamodel, type_name: str) -> str | None:
    """Parenthetical gloss for a type, e.g. "double" or "enumeration"."""
    if type_name in PRIMITIVE_GLOSS:
        return PRIMITIVE_GLOSS[type_name]
    c = mm._by_name.get(type_name)
    if c is None:
        return None
    if c.kind is ClassifierKind.ENUM:
        return "enumeration"
    if c.kind is ClassifierKind.CLASS:
        return "class"
    return None
