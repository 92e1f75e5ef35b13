import json
import shutil

import pytest

from modelquery import ecore
from modelquery.campaign import (
    CampaignConfig,
    CampaignError,
    collect_scored_runs,
    load_campaign_config,
    report_from_output_dir,
    run_campaign,
)
from modelquery.dataset import (
    Category,
    file_sha256,
    generate_structural_questions,
    save_dataset,
)
from modelquery.llm import BackendConfig

from conftest import FIXTURE_ECORE


def fact_block_answer(facts) -> str:
    listing = "\n".join(f"- {f.name}: {f.type_name}" for f in facts)
    block = json.dumps([{"name": f.name, "type": f.type_name} for f in facts])
    return f"The class has these fields:\n{listing}\n\n```json\n{block}\n```\n"


@pytest.fixture()
def campaign_dir(tmp_path):
    """Self-contained campaign directory: model, dataset, replay script."""
    shutil.copy(FIXTURE_ECORE, tmp_path / "model.ecore")
    mm = ecore.load_metamodel(tmp_path / "model.ecore")
    questions = generate_structural_questions(mm, Category.DIRECT, 2, seed=0)
    save_dataset(
        questions, tmp_path / "dataset.jsonl",
        model_path="model.ecore",
        model_sha256=file_sha256(tmp_path / "model.ecore"),
    )
    # The scripted answer always matches the FIRST question's facts, so one
    # question scores perfect and the other imperfect.
    answer = fact_block_answer(questions[0].reference_facts)
    (tmp_path / "script.replay.json").write_text(json.dumps([
        {"assistant": {"content": answer},
         "usage": {"prompt": 118776, "completion": 210, "reasoning": 0}},
    ]), encoding="utf-8")
    return tmp_path, questions


def make_config(base, **overrides) -> CampaignConfig:
    defaults = dict(
        model_file=base / "model.ecore",
        dataset=base / "dataset.jsonl",
        output_dir=base / "out",
        setups=("direct", "agent"),
        backends=(BackendConfig(
            kind="replay", model_name="scripted",
            replay_path=str(base / "script.replay.json"),
        ),),
        scorer="structural",
    )
    defaults.update(overrides)
    return CampaignConfig(**defaults)


class TestRunCampaign:
    def test_all_cells_executed_and_scored(self, campaign_dir):
        base, questions = campaign_dir
        config = make_config(base)
        result = run_campaign(config)
        assert result.ok
        assert len(result.completed) == 4  # 2 questions x 2 setups x 1 backend
        runs = sorted(p.name for p in (base / "out" / "runs").glob("*.json"))
        assert runs == sorted(
            f"{q.id}.{setup}.scripted.json"
            for q in questions for setup in ("direct", "agent")
        )
        scores = sorted(p.name for p in (base / "out" / "scores").glob("*.json"))
        assert scores == runs

    def test_direct_prompt_embeds_model_file(self, campaign_dir):
        base, questions = campaign_dir
        run_campaign(make_config(base, setups=("direct",)))
        from modelquery.agent import load_run_record
        record = load_run_record(
            base / "out" / "runs" / f"{questions[0].id}.direct.scripted.json"
        )
        sys_text = record.transcript[0].content
        assert "model.ecore" in sys_text
        assert (base / "model.ecore").read_text(encoding="utf-8") in sys_text

    def test_structural_scoring_splits_verdicts(self, campaign_dir):
        base, questions = campaign_dir
        run_campaign(make_config(base))
        rows = collect_scored_runs(base / "out")
        by_question = {}
        for row in rows:
            by_question.setdefault(row.question_id, set()).add(row.verdict)
        assert by_question[questions[0].id] == {1}
        assert by_question[questions[1].id] == {0}

    def test_resume_skips_existing(self, campaign_dir):
        base, _ = campaign_dir
        config = make_config(base)
        first = run_campaign(config)
        assert len(first.completed) == 4
        second = run_campaign(config)
        assert second.completed == []
        assert len(second.skipped) == 4

    def test_resume_completes_missing_cell(self, campaign_dir):
        base, _ = campaign_dir
        config = make_config(base)
        run_campaign(config)
        victim = next(iter((base / "out" / "runs").glob("*.json")))
        victim.unlink()
        (base / "out" / "scores" / victim.name).unlink()
        result = run_campaign(config)
        assert len(result.completed) == 1
        assert len(result.skipped) == 3
        assert victim.exists()

    def test_byte_reproducible(self, campaign_dir):
        base, _ = campaign_dir
        config = make_config(base)
        run_campaign(config)
        snapshot = {
            p.name: p.read_bytes()
            for p in (base / "out").rglob("*.json")
        }
        shutil.rmtree(base / "out")
        run_campaign(config)
        again = {
            p.name: p.read_bytes()
            for p in (base / "out").rglob("*.json")
        }
        assert snapshot == again

    def test_parallel_matches_serial(self, campaign_dir):
        base, _ = campaign_dir
        serial = make_config(base, output_dir=base / "serial")
        parallel = make_config(base, output_dir=base / "parallel", parallel=4)
        run_campaign(serial)
        run_campaign(parallel)
        for p in (base / "serial").rglob("*.json"):
            twin = base / "parallel" / p.relative_to(base / "serial")
            assert twin.read_bytes() == p.read_bytes()

    def test_failed_cell_does_not_stop_campaign(self, campaign_dir, monkeypatch):
        base, questions = campaign_dir
        config = make_config(base)
        import modelquery.campaign as campaign_module
        original = campaign_module.run_direct
        calls = {"n": 0}

        def flaky(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 1:
                raise RuntimeError("synthetic failure")
            return original(*args, **kwargs)

        monkeypatch.setattr(campaign_module, "run_direct", flaky)
        result = run_campaign(config)
        assert len(result.failed) == 1
        assert len(result.completed) == 3
        assert "synthetic failure" in result.failed[0][1]

    def test_sha_mismatch_rejected(self, campaign_dir):
        base, _ = campaign_dir
        model = base / "model.ecore"
        model.write_text(model.read_text(encoding="utf-8") + "<!-- drift -->\n",
                         encoding="utf-8")
        with pytest.raises(CampaignError) as excinfo:
            run_campaign(make_config(base))
        assert "different model file" in str(excinfo.value)

    def test_missing_model_file(self, campaign_dir):
        base, _ = campaign_dir
        config = make_config(base, model_file=base / "gone.ecore")
        with pytest.raises(CampaignError):
            run_campaign(config)

    def test_semantic_question_unscored_by_structural(self, campaign_dir):
        base, _ = campaign_dir
        from modelquery.dataset import QuestionRecord, load_dataset
        questions = load_dataset(base / "dataset.jsonl")
        questions.append(QuestionRecord(
            id="semantic-x", category=Category.SEMANTIC,
            question="Why?", reference_text="Because.",
        ))
        save_dataset(questions, base / "dataset.jsonl",
                     model_path="model.ecore",
                     model_sha256=file_sha256(base / "model.ecore"))
        run_campaign(make_config(base, setups=("direct",)))
        rows = collect_scored_runs(base / "out")
        semantic = [r for r in rows if r.question_id == "semantic-x"]
        assert semantic and all(r.verdict is None for r in semantic)


class TestLlmScorer:
    def test_judge_and_claims(self, campaign_dir):
        base, questions = campaign_dir
        # Judge script per run: verdict, decompose answer, verify, decompose
        # reference, verify. Runs are scored in filename order.
        judge_steps = [
            {"assistant": {"content": "1"}},
            {"assistant": {"content": "claim one\nclaim two"}},
            {"assistant": {"content": "1: 1\n2: 1"}},
            {"assistant": {"content": "ref one\nref two"}},
            {"assistant": {"content": "1: 1\n2: 0"}},
        ]
        (base / "judge.replay.json").write_text(json.dumps(judge_steps),
                                                encoding="utf-8")
        judge = BackendConfig(kind="replay", model_name="judge",
                              replay_path=str(base / "judge.replay.json"))
        config = make_config(base, setups=("direct",), scorer="llm", judge=judge)
        result = run_campaign(config)
        assert result.ok
        rows = collect_scored_runs(base / "out")
        assert all(r.verdict == 1 for r in rows)
        assert all(r.factual is not None for r in rows)
        assert rows[0].factual.tp == 2
        assert rows[0].factual.fn == 1

    def test_llm_scorer_requires_judge(self, campaign_dir):
        base, _ = campaign_dir
        with pytest.raises(CampaignError):
            make_config(base, scorer="llm")

    def test_scoring_template_overrides_loaded(self, campaign_dir):
        base, _ = campaign_dir
        (base / "judge_alt.txt").write_text(
            "Q {question} R {reference} A {answer}. Integer only.",
            encoding="utf-8")
        (base / "judge.replay.json").write_text(
            json.dumps([{"assistant": {"content": "1"}}] * 5), encoding="utf-8")
        (base / "campaign.cfg").write_text(
            '''
model_file = "model.ecore"
dataset = "dataset.jsonl"
output_dir = "out"
setups = ["direct"]
scorer = "llm"

[judge]
kind = "replay"
model_name = "judge"
replay_path = "judge.replay.json"

[scoring]
judge_template = "judge_alt.txt"

[[backends]]
kind = "replay"
model_name = "scripted"
replay_path = "script.replay.json"
''', encoding="utf-8")
        config = load_campaign_config(base / "campaign.cfg")
        assert config.judge_template.startswith("Q {question}")
        assert config.decompose_template == ""


class TestErroredRunScoring:
    def test_recursion_limit_scored_zero(self, campaign_dir):
        base, _ = campaign_dir
        # a script that never answers: one scroll_down per step
        steps = [{"assistant": {"tool_calls": [
            {"tool_name": "scroll_down", "arguments": {}}]},
            "usage": {"prompt": 640, "completion": 10, "reasoning": 0}}
            for _ in range(150)]
        (base / "script.replay.json").write_text(json.dumps(steps), encoding="utf-8")
        config = make_config(base, setups=("agent",))
        result = run_campaign(config)
        assert result.ok
        rows = collect_scored_runs(base / "out")
        assert all(r.error_kind == "RecursionLimit" for r in rows)
        assert all(r.verdict == 0 for r in rows)
        assert all(r.factual.precision == 0.0 for r in rows)
        assert all(r.factual.recall == 0.0 for r in rows)
        assert all(r.factual.f1 == 0.0 for r in rows)
        # usage still accounted: 100 calls of 650 total tokens each
        assert all(r.usage.total_tokens == 65000 for r in rows)


class TestLoadConfigFile:
    def test_full_file(self, campaign_dir, monkeypatch):
        base, _ = campaign_dir
        monkeypatch.setenv("MQ_TEST_MODEL", "scripted")
        (base / "campaign.cfg").write_text(
            '''
model_file = "model.ecore"
dataset = "dataset.jsonl"
output_dir = "out"
setups = ["direct", "agent"]
scorer = "structural"
parallel = 2

[agent]
max_iterations = 60
window_size = 40
scroll_overlap = 4

[[backends]]
kind = "replay"
model_name = "${MQ_TEST_MODEL}"
replay_path = "script.replay.json"
''', encoding="utf-8")
        config = load_campaign_config(base / "campaign.cfg")
        assert config.model_file == (base / "model.ecore").resolve()
        assert config.setups == ("direct", "agent")
        assert config.parallel == 2
        assert config.agent.max_iterations == 60
        assert config.agent.viewer.window_size == 40
        assert config.backends[0].model_name == "scripted"
        assert config.backends[0].replay_path.endswith("script.replay.json")
        result = run_campaign(config)
        assert result.ok

    def test_missing_required_key(self, tmp_path):
        (tmp_path / "bad.cfg").write_text('dataset = "d.jsonl"\n', encoding="utf-8")
        with pytest.raises(CampaignError):
            load_campaign_config(tmp_path / "bad.cfg")

    def test_backend_validation(self, tmp_path):
        (tmp_path / "bad.cfg").write_text(
            'model_file = "m"\ndataset = "d"\noutput_dir = "o"\n'
            '[[backends]]\nkind = "remote"\nmodel_name = "m"\n',
            encoding="utf-8")
        with pytest.raises(CampaignError) as excinfo:
            load_campaign_config(tmp_path / "bad.cfg")
        assert "endpoint_url" in str(excinfo.value)

    def test_no_backends(self, campaign_dir):
        base, _ = campaign_dir
        (base / "c.cfg").write_text(
            'model_file = "model.ecore"\ndataset = "dataset.jsonl"\noutput_dir = "o"\n',
            encoding="utf-8")
        with pytest.raises(CampaignError):
            load_campaign_config(base / "c.cfg")


class TestReportFromOutput:
    def test_aggregates_scored_runs(self, campaign_dir):
        base, _ = campaign_dir
        run_campaign(make_config(base))
        report = report_from_output_dir(base / "out")
        assert len(report.groups) == 2  # direct + agent for one model
        direct = next(g for g in report.groups if g.setup == "direct")
        assert direct.correct + direct.incorrect == 2
        assert direct.prompt_tokens.mean == pytest.approx(118776.0)

    def test_empty_output_dir(self, tmp_path):
        (tmp_path / "runs").mkdir()
        with pytest.raises(CampaignError):
            report_from_output_dir(tmp_path)
