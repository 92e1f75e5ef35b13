"""Aggregate scored runs into per-(architecture, model) report tables.

Emits four views of the same aggregate: an aligned plain-text report, a
machine-readable JSON document, a CSV with one row per group, and a pair
of PNG charts (accuracy, token usage) rendered next to them.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .llm import Usage
from .scoring import FactualScore

SETUP_LABELS = {
    "direct": "Direct Full-Context Prompting",
    "agent": "Agent with File Tools",
}


@dataclass(frozen=True)
class ScoredRun:
    question_id: str
    setup: str
    model_name: str
    verdict: int | None  # 1 correct, 0 incorrect, None unscored
    factual: FactualScore | None
    usage: Usage
    error_kind: str | None = None


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float  # population standard deviation

    def fmt(self, digits: int = 2) -> str:
        return f"{self.mean:.{digits}f} ± {self.std:.{digits}f}"


def _stat(values: list[float]) -> Stat:
    if not values:
        return Stat(0.0, 0.0)
    mean = sum(values) / len(values)
    variance = sum((v - mean) ** 2 for v in values) / len(values)
    return Stat(mean, math.sqrt(variance))


@dataclass(frozen=True)
class GroupReport:
    setup: str
    model_name: str
    run_count: int
    correct: int
    incorrect: int
    unscored: int
    accuracy_percent: float
    precision: Stat
    recall: Stat
    f1: Stat
    prompt_tokens: Stat
    completion_tokens: Stat
    reasoning_tokens: Stat
    total_tokens: Stat

    def to_dict(self) -> dict:
        return {
            "setup": self.setup,
            "architecture": SETUP_LABELS.get(self.setup, self.setup),
            "model_name": self.model_name,
            "run_count": self.run_count,
            "correct": self.correct,
            "incorrect": self.incorrect,
            "unscored": self.unscored,
            "accuracy_percent": self.accuracy_percent,
            "precision": {"mean": self.precision.mean, "std": self.precision.std},
            "recall": {"mean": self.recall.mean, "std": self.recall.std},
            "f1": {"mean": self.f1.mean, "std": self.f1.std},
            "tokens": {
                "prompt": {"mean": self.prompt_tokens.mean, "std": self.prompt_tokens.std},
                "completion": {"mean": self.completion_tokens.mean, "std": self.completion_tokens.std},
                "reasoning": {"mean": self.reasoning_tokens.mean, "std": self.reasoning_tokens.std},
                "total": {"mean": self.total_tokens.mean, "std": self.total_tokens.std},
            },
        }


@dataclass(frozen=True)
class AggregateReport:
    groups: tuple[GroupReport, ...]

    def to_dict(self) -> dict:
        return {"groups": [g.to_dict() for g in self.groups]}


def aggregate(scored_runs: list[ScoredRun]) -> AggregateReport:
    """Group by (setup, model); errored runs arrive pre-scored as 0/zeros."""
    if not scored_runs:
        raise ValueError("need at least one scored run")
    keys = sorted({(r.setup, r.model_name) for r in scored_runs})
    groups = []
    for setup, model_name in keys:
        runs = [r for r in scored_runs if (r.setup, r.model_name) == (setup, model_name)]
        correct = sum(1 for r in runs if r.verdict == 1)
        incorrect = sum(1 for r in runs if r.verdict == 0)
        unscored = sum(1 for r in runs if r.verdict is None)
        judged = correct + incorrect
        accuracy = 100.0 * correct / judged if judged else 0.0
        factuals = [r.factual for r in runs if r.factual is not None]
        groups.append(GroupReport(
            setup=setup,
            model_name=model_name,
            run_count=len(runs),
            correct=correct,
            incorrect=incorrect,
            unscored=unscored,
            accuracy_percent=accuracy,
            precision=_stat([f.precision for f in factuals]),
            recall=_stat([f.recall for f in factuals]),
            f1=_stat([f.f1 for f in factuals]),
            prompt_tokens=_stat([float(r.usage.prompt_tokens) for r in runs]),
            completion_tokens=_stat([float(r.usage.completion_tokens) for r in runs]),
            reasoning_tokens=_stat([float(r.usage.reasoning_tokens) for r in runs]),
            total_tokens=_stat([float(r.usage.total_tokens) for r in runs]),
        ))
    return AggregateReport(groups=tuple(groups))


def _render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), sep] + [line(r) for r in rows])


def render_text(report: AggregateReport) -> str:
    correctness_rows = []
    token_rows = []
    for g in report.groups:
        arch = SETUP_LABELS.get(g.setup, g.setup)
        correctness_rows.append([
            arch, g.model_name, str(g.correct), str(g.incorrect),
            f"{g.accuracy_percent:.1f}",
            g.precision.fmt(), g.recall.fmt(), g.f1.fmt(),
        ])
        token_rows.append([
            arch, g.model_name,
            g.prompt_tokens.fmt(1), g.completion_tokens.fmt(1),
            g.reasoning_tokens.fmt(1), g.total_tokens.fmt(1),
        ])
    parts = [
        "Answer correctness",
        "",
        _render_table(
            ["Architecture", "LLM Model", "Correct", "Incorrect",
             "Accuracy (%)", "Precision (±SD)", "Recall (±SD)",
             "F1 score (±SD)"],
            correctness_rows,
        ),
    ]
    unscored_total = sum(g.unscored for g in report.groups)
    if unscored_total:
        parts += ["", f"Unscored runs (excluded from accuracy): {unscored_total}"]
    parts += [
        "",
        "Token usage",
        "",
        _render_table(
            ["Architecture", "LLM Model", "Prompt Tokens (±SD)",
             "Completion Tokens (±SD)", "Reasoning Tokens (±SD)",
             "Total Tokens (±SD)"],
            token_rows,
        ),
    ]
    return "\n".join(parts) + "\n"


def write_csv(report: AggregateReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "architecture", "model", "runs", "correct", "incorrect", "unscored",
            "accuracy_percent",
            "precision_mean", "precision_std",
            "recall_mean", "recall_std",
            "f1_mean", "f1_std",
            "prompt_tokens_mean", "prompt_tokens_std",
            "completion_tokens_mean", "completion_tokens_std",
            "reasoning_tokens_mean", "reasoning_tokens_std",
            "total_tokens_mean", "total_tokens_std",
        ])
        for g in report.groups:
            writer.writerow([
                SETUP_LABELS.get(g.setup, g.setup), g.model_name, g.run_count,
                g.correct, g.incorrect, g.unscored,
                f"{g.accuracy_percent:.4f}",
                f"{g.precision.mean:.6f}", f"{g.precision.std:.6f}",
                f"{g.recall.mean:.6f}", f"{g.recall.std:.6f}",
                f"{g.f1.mean:.6f}", f"{g.f1.std:.6f}",
                f"{g.prompt_tokens.mean:.2f}", f"{g.prompt_tokens.std:.2f}",
                f"{g.completion_tokens.mean:.2f}", f"{g.completion_tokens.std:.2f}",
                f"{g.reasoning_tokens.mean:.2f}", f"{g.reasoning_tokens.std:.2f}",
                f"{g.total_tokens.mean:.2f}", f"{g.total_tokens.std:.2f}",
            ])


def write_figures(report: AggregateReport, out_dir) -> list[Path]:
    """Render accuracy and token-usage charts as PNG files."""
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    setups = sorted({g.setup for g in report.groups})
    models = sorted({g.model_name for g in report.groups})
    by_key = {(g.setup, g.model_name): g for g in report.groups}
    x = range(len(models))
    width = 0.8 / max(1, len(setups))
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    for i, setup in enumerate(setups):
        values = [
            by_key[(setup, m)].accuracy_percent if (setup, m) in by_key else 0.0
            for m in models
        ]
        ax.bar([xi + i * width for xi in x], values, width,
               label=SETUP_LABELS.get(setup, setup))
    ax.set_xticks([xi + width * (len(setups) - 1) / 2 for xi in x])
    ax.set_xticklabels(models, rotation=15, ha="right")
    ax.set_ylabel("Accuracy (%)")
    ax.set_ylim(0, 100)
    ax.set_title("Answer accuracy by architecture and model")
    ax.legend()
    fig.tight_layout()
    accuracy_path = out_dir / "accuracy.png"
    fig.savefig(accuracy_path, dpi=120)
    plt.close(fig)
    written.append(accuracy_path)

    fig, ax = plt.subplots(figsize=(7, 4))
    for i, setup in enumerate(setups):
        values = [
            max(by_key[(setup, m)].total_tokens.mean, 0.1) if (setup, m) in by_key else 0.1
            for m in models
        ]
        ax.bar([xi + i * width for xi in x], values, width,
               label=SETUP_LABELS.get(setup, setup))
    ax.set_xticks([xi + width * (len(setups) - 1) / 2 for xi in x])
    ax.set_xticklabels(models, rotation=15, ha="right")
    ax.set_ylabel("Mean total tokens per run")
    ax.set_yscale("log")
    ax.set_title("Token usage by architecture and model")
    ax.legend()
    fig.tight_layout()
    tokens_path = out_dir / "tokens.png"
    fig.savefig(tokens_path, dpi=120)
    plt.close(fig)
    written.append(tokens_path)
    return written


def write_report(report: AggregateReport, out_dir, figures: bool = True) -> dict:
    """Write report.txt / report.json / report.csv (+ charts); return paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = render_text(report)
    paths = {
        "text": out_dir / "report.txt",
        "json": out_dir / "report.json",
        "csv": out_dir / "report.csv",
    }
    paths["text"].write_text(text, encoding="utf-8")
    paths["json"].write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    write_csv(report, paths["csv"])
    if figures:
        for p in write_figures(report, out_dir):
            paths[p.stem] = p
    return paths
