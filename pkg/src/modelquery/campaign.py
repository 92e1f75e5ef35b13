"""Evaluation campaigns: every question x setup x backend cell, resumably.

A cell whose RunRecord file already exists is skipped, so an interrupted
campaign picks up where it left off. Cells run independently (optionally in
parallel); failures are collected and summarized instead of aborting the
remaining cells. A second pass scores finished runs and a third aggregates
scores into the report.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import scoring
from .agent import (
    AgentConfig,
    RunRecord,
    load_run_record,
    run_agent,
    run_direct,
    run_record_filename,
    save_run_record,
)
from .configfile import load_config
from .dataset import QuestionRecord, dataset_header, file_sha256, load_dataset
from .errors import ModelQueryError
from .filetools import ViewerConfig
from .llm import BackendConfig, make_backend
from .report import AggregateReport, ScoredRun, aggregate
from .scoring import FactualScore, MalformedFactBlock, UnparseableVerdict, ZERO_SCORE

SETUPS = ("direct", "agent")
SCORERS = ("llm", "structural", "both")


class CampaignError(ModelQueryError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    model_file: Path
    dataset: Path
    output_dir: Path
    setups: tuple[str, ...]
    backends: tuple[BackendConfig, ...]
    agent: AgentConfig = field(default_factory=AgentConfig)
    judge: BackendConfig | None = None
    scorer: str = "structural"
    parallel: int = 1
    # Optional template-text overrides for the scoring prompts; empty means
    # the packaged defaults.
    judge_template: str = ""
    decompose_template: str = ""
    verify_template: str = ""

    def __post_init__(self):
        if not self.setups:
            raise CampaignError("campaign needs at least one setup")
        for s in self.setups:
            if s not in SETUPS:
                raise CampaignError(f"unknown setup {s!r}")
        if not self.backends:
            raise CampaignError("campaign needs at least one backend")
        if self.scorer not in SCORERS:
            raise CampaignError(f"unknown scorer {self.scorer!r}")
        if self.scorer in ("llm", "both") and self.judge is None:
            raise CampaignError(f"scorer {self.scorer!r} requires a [judge] backend")
        if self.parallel < 1:
            raise CampaignError("parallel must be >= 1")


def _backend_from_dict(d: dict, base: Path, where: str) -> BackendConfig:
    kind = d.get("kind")
    if kind not in ("remote", "replay"):
        raise CampaignError(f"{where}: backend kind must be remote or replay")
    replay_path = d.get("replay_path", "")
    if replay_path:
        replay_path = str((base / replay_path).resolve())
    if kind == "replay" and not replay_path:
        raise CampaignError(f"{where}: replay backend needs replay_path")
    if kind == "remote" and not d.get("endpoint_url"):
        raise CampaignError(f"{where}: remote backend needs endpoint_url")
    model_name = d.get("model_name") or (
        Path(replay_path).stem if replay_path else ""
    )
    if not model_name:
        raise CampaignError(f"{where}: backend needs model_name")
    return BackendConfig(
        kind=kind,
        model_name=model_name,
        endpoint_url=d.get("endpoint_url", ""),
        temperature=float(d.get("temperature", 0.0)),
        temperature_fixed=bool(d.get("temperature_fixed", False)),
        api_key_env=d.get("api_key_env", ""),
        replay_path=replay_path,
        timeout_seconds=float(d.get("timeout_seconds", 120.0)),
        transport_retries=int(d.get("transport_retries", 0)),
    )


def _agent_from_dict(d: dict, base: Path) -> AgentConfig:
    viewer = ViewerConfig(
        window_size=int(d.get("window_size", 50)),
        scroll_overlap=int(d.get("scroll_overlap", 2)),
        max_rendered_matches=int(d.get("max_rendered_matches", 100)),
    )
    def template(key: str) -> str:
        rel = d.get(key, "")
        if not rel:
            return ""
        return (base / rel).read_text(encoding="utf-8")
    return AgentConfig(
        max_iterations=int(d.get("max_iterations", 100)),
        viewer=viewer,
        direct_system_template=template("direct_system_template"),
        agent_system_template=template("agent_system_template"),
    )


def load_campaign_config(path) -> CampaignConfig:
    path = Path(path)
    data = load_config(path)
    base = path.parent
    for key in ("model_file", "dataset", "output_dir"):
        if key not in data:
            raise CampaignError(f"{path}: missing required key {key!r}")
    backends = tuple(
        _backend_from_dict(b, base, f"{path}: backends[{i}]")
        for i, b in enumerate(data.get("backends", []))
    )
    judge = None
    if "judge" in data:
        judge = _backend_from_dict(data["judge"], base, f"{path}: judge")
    scoring_templates = data.get("scoring", {})

    def template(key: str) -> str:
        rel = scoring_templates.get(key, "")
        return (base / rel).read_text(encoding="utf-8") if rel else ""

    return CampaignConfig(
        model_file=(base / data["model_file"]).resolve(),
        dataset=(base / data["dataset"]).resolve(),
        output_dir=(base / data["output_dir"]).resolve(),
        setups=tuple(data.get("setups", ["direct", "agent"])),
        backends=backends,
        agent=_agent_from_dict(data.get("agent", {}), base),
        judge=judge,
        scorer=data.get("scorer", "structural"),
        parallel=int(data.get("parallel", 1)),
        judge_template=template("judge_template"),
        decompose_template=template("decompose_template"),
        verify_template=template("verify_template"),
    )


@dataclass
class CampaignResult:
    completed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed


@dataclass(frozen=True)
class _Cell:
    question: QuestionRecord
    setup: str
    backend: BackendConfig

    @property
    def name(self) -> str:
        return f"{self.question.id}.{self.setup}.{self.backend.model_name}"


def _execute_cell(cell: _Cell, model_text: str, model_file: Path,
                  agent_config: AgentConfig, runs_dir: Path) -> RunRecord:
    if cell.setup == "direct":
        record = run_direct(
            model_text, cell.question.question, cell.backend, agent_config,
            question_id=cell.question.id, model_name=cell.backend.model_name,
            model_path=model_file.name,
        )
    else:
        record = run_agent(
            model_file.parent, cell.question.question, cell.backend, agent_config,
            question_id=cell.question.id, model_name=cell.backend.model_name,
        )
    save_run_record(record, runs_dir)
    return record


def run_campaign(config: CampaignConfig) -> CampaignResult:
    """Execute all pending cells, then score whatever has not been scored."""
    if not config.model_file.is_file():
        raise CampaignError(f"model file not found: {config.model_file}")
    model_text = config.model_file.read_text(encoding="utf-8")
    header = dataset_header(config.dataset)
    if header.get("model_sha256"):
        actual = file_sha256(config.model_file)
        if actual != header["model_sha256"]:
            raise CampaignError(
                "dataset was generated from a different model file "
                f"(dataset {header['model_sha256'][:12]}, file {actual[:12]}); "
                "regenerate the dataset"
            )
    questions = load_dataset(config.dataset)
    if not questions:
        raise CampaignError(f"dataset is empty: {config.dataset}")
    runs_dir = config.output_dir / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)

    cells = [
        _Cell(q, setup, backend)
        for q in questions
        for setup in config.setups
        for backend in config.backends
    ]
    result = CampaignResult()
    pending = []
    for cell in cells:
        path = runs_dir / run_record_filename(
            cell.question.id, cell.setup, cell.backend.model_name
        )
        if path.exists():
            result.skipped.append(cell.name)
        else:
            pending.append(cell)

    def work(cell: _Cell):
        return _execute_cell(cell, model_text, config.model_file, config.agent, runs_dir)

    if config.parallel > 1 and len(pending) > 1:
        with ThreadPoolExecutor(max_workers=config.parallel) as pool:
            futures = {pool.submit(work, cell): cell for cell in pending}
            for future, cell in futures.items():
                try:
                    future.result()
                    result.completed.append(cell.name)
                except Exception as exc:
                    result.failed.append((cell.name, str(exc)))
    else:
        for cell in pending:
            try:
                work(cell)
                result.completed.append(cell.name)
            except Exception as exc:
                result.failed.append((cell.name, str(exc)))

    score_campaign(config, questions)
    return result


def _score_payload(record: RunRecord, question: QuestionRecord,
                   scorer: str, judge_config: BackendConfig | None,
                   judge_template: str = "", decompose_template: str = "",
                   verify_template: str = "") -> dict:
    """Score one run; never raises, failures land in unscored_reason."""
    payload: dict = {
        "question_id": record.question_id,
        "setup": record.setup,
        "model_name": record.model_name,
        "scorer": scorer,
        "verdict": None,
        "factual": None,
        "factual_structural": None,
        "unscored_reason": None,
        "error_kind": record.error.kind if record.error else None,
    }
    if record.error is not None:
        # Failed runs are incorrect by definition and contribute all-zero
        # claim scores.
        payload["verdict"] = 0
        payload["factual"] = ZERO_SCORE.to_dict()
        return payload

    answer = record.answer or ""
    if scorer in ("structural", "both"):
        try:
            block = scoring.extract_fact_block(answer)
        except MalformedFactBlock as exc:
            block = None
            payload["unscored_reason"] = str(exc)
        if block is None:
            if payload["unscored_reason"] is None:
                payload["unscored_reason"] = "answer carries no fact block"
        elif not question.reference_facts:
            payload["unscored_reason"] = "question has no reference facts"
        else:
            structural = scoring.structural_match(
                block, list(question.reference_facts)
            )
            payload["factual_structural"] = structural.to_dict()
            if scorer == "structural":
                payload["factual"] = structural.to_dict()
                payload["verdict"] = 1 if structural.f1 == 1.0 else 0
                payload["unscored_reason"] = None

    if scorer in ("llm", "both"):
        judge = make_backend(judge_config)
        try:
            verdict = scoring.judge_binary(
                question.question, question.reference_text, answer, judge,
                template=judge_template or None,
            )
            payload["verdict"] = verdict.score
            factual = scoring.claim_level_score(
                answer, question.reference_text, judge,
                decompose_template=decompose_template or None,
                verify_template=verify_template or None,
            )
            payload["factual"] = factual.to_dict()
            payload["unscored_reason"] = None
        except (UnparseableVerdict, scoring.ScoringError, ModelQueryError, ValueError) as exc:
            payload["unscored_reason"] = str(exc)
    return payload


def score_campaign(config: CampaignConfig, questions: list[QuestionRecord]) -> int:
    """Score every run file that has no score file yet; returns count scored."""
    runs_dir = config.output_dir / "runs"
    scores_dir = config.output_dir / "scores"
    scores_dir.mkdir(parents=True, exist_ok=True)
    by_id = {q.id: q for q in questions}
    scored = 0
    for run_path in sorted(runs_dir.glob("*.json")):
        score_path = scores_dir / run_path.name
        if score_path.exists():
            continue
        record = load_run_record(run_path)
        question = by_id.get(record.question_id)
        if question is None:
            continue  # run from another dataset; leave unscored
        payload = _score_payload(
            record, question, config.scorer, config.judge,
            judge_template=config.judge_template,
            decompose_template=config.decompose_template,
            verify_template=config.verify_template,
        )
        score_path.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        scored += 1
    return scored


def collect_scored_runs(output_dir) -> list[ScoredRun]:
    """Join runs/ and scores/ by filename into report rows."""
    output_dir = Path(output_dir)
    runs_dir = output_dir / "runs"
    scores_dir = output_dir / "scores"
    rows: list[ScoredRun] = []
    for run_path in sorted(runs_dir.glob("*.json")):
        record = load_run_record(run_path)
        score_path = scores_dir / run_path.name
        verdict = None
        factual = None
        error_kind = record.error.kind if record.error else None
        if score_path.exists():
            payload = json.loads(score_path.read_text(encoding="utf-8"))
            verdict = payload.get("verdict")
            if payload.get("factual") is not None:
                factual = FactualScore.from_dict(payload["factual"])
        rows.append(ScoredRun(
            question_id=record.question_id,
            setup=record.setup,
            model_name=record.model_name,
            verdict=verdict,
            factual=factual,
            usage=record.usage_total,
            error_kind=error_kind,
        ))
    return rows


def report_from_output_dir(output_dir) -> AggregateReport:
    rows = collect_scored_runs(output_dir)
    if not rows:
        raise CampaignError(f"no runs found under {output_dir}")
    return aggregate(rows)
