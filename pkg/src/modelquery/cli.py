"""Command-line entry point.

Subcommands: inspect (model statistics and field listings), ask (one
question under either setup), gen-dataset (build a question dataset),
evaluate (run a campaign from a config file), report (aggregate scores
into tables and charts). Exit codes: 0 success, 1 campaign/runtime errors,
2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dataset as dataset_mod
from . import ecore
from .agent import AgentConfig, run_agent, run_direct
from .campaign import (
    CampaignError,
    _backend_from_dict,
    load_campaign_config,
    report_from_output_dir,
    run_campaign,
)
from .errors import ModelQueryError
from .report import render_text, write_report


def _fmt_upper(upper: int) -> str:
    return "*" if upper == -1 else str(upper)


def _print_fields(facts, show_origin: bool):
    for f in facts:
        line = f"{f.name}: {f.type_name} [{f.lower}..{_fmt_upper(f.upper)}]"
        if f.default_literal is not None:
            line += f" default={f.default_literal}"
        if show_origin:
            line += f" (from {f.origin_class})"
        print(line)


def cmd_inspect(args) -> int:
    mm = ecore.load_metamodel(args.model)
    if args.class_name:
        if args.inherited:
            facts = ecore.all_fields(mm, args.class_name)
            print(f"Fields of {args.class_name} (including inherited):")
        else:
            facts = ecore.own_fields(mm, args.class_name)
            print(f"Fields of {args.class_name}:")
        _print_fields(facts, show_origin=args.inherited)
        return 0
    stats = ecore.model_stats(mm)
    print(f"Package: {mm.package_name}")
    print(f"Classes: {stats['class_count']}")
    print(f"Enums: {stats['enum_count']}")
    print(f"Data types: {stats['datatype_count']}")
    print(f"Lines: {stats['line_count']}")
    if mm.warnings:
        print(f"Parse warnings: {len(mm.warnings)}")
        for w in mm.warnings:
            print(f"  - {w}")
    return 0


def _load_backend_config(path: str):
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CampaignError(f"cannot read backend config {path}: {exc}") from exc
    return _backend_from_dict(data, p.parent, str(p))


def cmd_ask(args) -> int:
    backend = _load_backend_config(args.backend)
    model_path = Path(args.model)
    config = AgentConfig(max_iterations=args.max_iterations)
    if args.setup == "direct":
        record = run_direct(
            model_path.read_text(encoding="utf-8"), args.question, backend,
            config, question_id="adhoc", model_path=model_path.name,
        )
    else:
        record = run_agent(
            model_path.resolve().parent, args.question, backend, config,
            question_id="adhoc",
        )
    if args.save_run:
        out = Path(args.save_run)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(record.to_json(), encoding="utf-8")
    if record.error is not None:
        print(f"run failed ({record.error.kind}): {record.error.detail}", file=sys.stderr)
        return 1
    print(record.answer)
    u = record.usage_total
    print(
        f"[tokens: prompt={u.prompt_tokens} completion={u.completion_tokens} "
        f"reasoning={u.reasoning_tokens} total={u.total_tokens}; "
        f"tool iterations: {record.tool_invocations}]",
        file=sys.stderr,
    )
    return 0


def cmd_gen_dataset(args) -> int:
    mm = ecore.load_metamodel(args.model)
    records = []
    for offset, category in enumerate(dataset_mod.STRUCTURAL_CATEGORIES):
        records.extend(dataset_mod.generate_structural_questions(
            mm, category, args.per_category, args.seed + offset
        ))
    if args.semantic:
        records.extend(dataset_mod.load_semantic_questions(args.semantic))
    created = None
    if args.stamp:
        import datetime
        created = datetime.datetime.now(datetime.timezone.utc).isoformat()
    dataset_mod.save_dataset(
        records, args.output,
        model_path=str(args.model),
        model_sha256=dataset_mod.file_sha256(args.model),
        created=created,
    )
    counts = {}
    for r in records:
        counts[r.category.value] = counts.get(r.category.value, 0) + 1
    print(f"wrote {len(records)} questions to {args.output}")
    for name, count in sorted(counts.items()):
        print(f"  {name}: {count}")
    return 0


def cmd_evaluate(args) -> int:
    config = load_campaign_config(args.config)
    result = run_campaign(config)
    print(
        f"campaign: {len(result.completed)} completed, "
        f"{len(result.skipped)} skipped (already present), "
        f"{len(result.failed)} failed"
    )
    for name, message in result.failed:
        print(f"  FAILED {name}: {message}", file=sys.stderr)
    print(f"runs: {config.output_dir / 'runs'}")
    print(f"scores: {config.output_dir / 'scores'}")
    return 0 if result.ok else 1


def cmd_report(args) -> int:
    report = report_from_output_dir(args.output_dir)
    print(render_text(report), end="")
    paths = write_report(report, args.output_dir, figures=not args.no_figures)
    for name in sorted(paths):
        print(f"wrote {paths[name]}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modelquery",
        description="Question answering over Ecore software models, "
                    "with dataset generation and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="print model statistics or class fields")
    p.add_argument("model", help="path to the .ecore file")
    p.add_argument("--class", dest="class_name", help="class to list fields of")
    p.add_argument("--inherited", action="store_true",
                   help="include fields inherited from base classes")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("ask", help="ask one question about a model")
    p.add_argument("model", help="path to the .ecore file")
    p.add_argument("question")
    p.add_argument("--setup", choices=("direct", "agent"), required=True)
    p.add_argument("--backend", required=True,
                   help="path to a backend config JSON file")
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--save-run", help="write the full run record to this file")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("gen-dataset", help="generate a question dataset")
    p.add_argument("model", help="path to the .ecore file")
    p.add_argument("--per-category", type=int, default=5,
                   help="structural questions per category (default 5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--semantic", help="JSONL file of hand-authored semantic questions")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--stamp", action="store_true",
                   help="record the wall-clock creation time in the header "
                        "(off by default so output is reproducible)")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("evaluate", help="run an evaluation campaign")
    p.add_argument("--config", required=True, help="campaign config file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate scores into tables and charts")
    p.add_argument("output_dir", help="campaign output directory")
    p.add_argument("--no-figures", action="store_true",
                   help="skip writing PNG charts")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelQueryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
