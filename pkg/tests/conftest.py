from __future__ import annotations

import random
from pathlib import Path

import pytest

from modelquery import ecore

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURE_ECORE = REPO_ROOT / "fixture.ecore"
SEMANTIC_QUESTIONS = REPO_ROOT / "semantic_questions.jsonl"


@pytest.fixture(scope="session")
def fixture_path() -> Path:
    return FIXTURE_ECORE


@pytest.fixture(scope="session")
def fixture_model() -> ecore.Metamodel:
    return ecore.load_metamodel(FIXTURE_ECORE)


def synthetic_model_lines(total: int = 13572) -> list[str]:
    """A deterministic XML-ish file of `total` lines.

    Exactly 8 lines contain the token "Frequency"; line 2830 is
    'name="Frequency">' so windowing and search behave like they do on a
    real large model.
    """
    lines = [f"  <element index=\"{i}\"/>" for i in range(1, total + 1)]
    lines[0] = "<model>"
    lines[-1] = "</model>"
    placements = {
        2828: "  <eClassifiers",
        2829: '      xsi:type="ecore:EClass"',
        2830: '      name="Frequency">',
        2832: '    <eStructuralFeatures name="value" eType="#//FrequencyUnit"/>',
        2840: "  <!-- Frequency block ends -->",
        5120: '      name="FrequencyUnit">',
        7333: '    <ref target="Frequency"/>',
        9004: '    <ref target="FrequencyUnit"/>',
        11750: '    <note text="frequency of Frequency updates"/>',
        12999: '    <ref target="Frequency"/>',
    }
    for lineno, content in placements.items():
        lines[lineno - 1] = content
    assert sum(1 for line in lines if "Frequency" in line) == 8
    return lines


@pytest.fixture()
def large_workspace(tmp_path: Path) -> Path:
    """Workspace directory holding a synthetic 13,572-line root.ecore."""
    (tmp_path / "root.ecore").write_text(
        "\n".join(synthetic_model_lines()) + "\n", encoding="utf-8"
    )
    return tmp_path


def bfs_all_fields(mm: ecore.Metamodel, class_name: str) -> set[tuple]:
    """Independent oracle: breadth-first dedup traversal of the supertype
    graph, collecting (origin, name, type, lower, upper, default) tuples.

    Kept deliberately separate from the production depth-first traversal.
    """
    index = {c.name: c for c in mm.classifiers}
    queue = [class_name]
    visited = set()
    seen_names = set()
    facts = set()
    while queue:
        current = queue.pop(0)
        if current in visited or current not in index:
            continue
        visited.add(current)
        c = index[current]
        for f in c.features:
            if f.name in seen_names:
                continue
            seen_names.add(f.name)
            facts.add((
                current, f.name, f.type_name,
                f.lower_bound, f.upper_bound, f.default_literal,
            ))
        queue.extend(index[current].supertypes)
    return facts


def random_flat_model(rng: random.Random, n_classes: int = 12) -> str:
    """Random inheritance DAG rendered as Ecore XML.

    Feature names are unique per declaring class so depth-first and
    breadth-first dedup traversals agree on the fact set.
    """
    names = [f"C{i}" for i in range(n_classes)]
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<ecore:EPackage xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"',
        '    xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore" name="gen">',
    ]
    for i, name in enumerate(names):
        # Supertypes point strictly backwards, so the graph is acyclic.
        pool = names[:i]
        supers = rng.sample(pool, k=min(len(pool), rng.choice([0, 0, 1, 1, 2])))
        attr = f' eSuperTypes="{" ".join("#//" + s for s in supers)}"' if supers else ""
        parts.append(f'  <eClassifiers xsi:type="ecore:EClass" name="{name}"{attr}>')
        for j in range(rng.randint(0, 3)):
            parts.append(
                f'    <eStructuralFeatures xsi:type="ecore:EAttribute" '
                f'name="{name.lower()}_f{j}" '
                f'eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EInt"/>'
            )
        parts.append("  </eClassifiers>")
    parts.append("</ecore:EPackage>")
    return "\n".join(parts)
