"""Command-line entry point.

Subcommands mirror the pipeline stages (stats, run, ensemble, eval,
breakdown, dump-prompts); every stage reads and writes plain line-delimited
files so any step can be replayed without re-running inference.

Exit codes: 0 success, 1 partial failures recorded, 2 input/config error,
3 transport exhaustion.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import answers, ensemble, metrics, orchestrator, prompts
from .backend import BackendError, ResponseCache, load_registry, probe
from .dataset import DatasetError, compute_stats, load_split
from .tables import format_table

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INPUT = 2
EXIT_TRANSPORT = 3


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _ensure_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_stats(args) -> int:
    try:
        records = load_split(args.dataset, gold=False)
        stats = compute_stats(records)
    except DatasetError as exc:
        return _fail(str(exc), EXIT_INPUT)
    print(f"records: {stats.total}")
    if args.by in (None, "figure_type"):
        rows = [
            [label, str(count), f"{count / stats.total:.3f}"]
            for label, count in stats.by_figure_type.items()
        ]
        print("\nby figure type:")
        print(format_table(["figure_type", "n", "fraction"], rows))
    if args.by in (None, "qa_flags"):
        rows = [
            [label, str(count), f"{count / stats.total:.3f}"]
            for label, count in stats.by_qa_flags.items()
        ]
        print("\nby qa type:")
        print(format_table(["qa_type", "n", "fraction"], rows))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        records = load_split(args.dataset, gold=False)
        registry = load_registry(args.registry)
        config = registry.get(args.backend)
    except (DatasetError, OSError, ValueError, KeyError) as exc:
        return _fail(str(exc), EXIT_INPUT)

    out = _ensure_out(args.out)
    cache = ResponseCache(Path(args.cache_dir) if args.cache_dir else out / "cache")
    if not args.offline and not probe(config):
        return _fail(f"backend {config.name} not reachable at {config.base_url}", EXIT_TRANSPORT)

    base = f"{config.name}-{args.mode}"
    raw_path = out / f"{base}.raw.jsonl"
    existing: list[orchestrator.RawItem] = []
    to_run = records
    if args.resume and raw_path.exists():
        existing = orchestrator.read_raw_items(raw_path)
        to_run = orchestrator.pending_records(records, existing)
        print(f"resume: {len(existing)} done, {len(to_run)} to run")

    try:
        if to_run:
            if args.mode == "cot":
                outcome = orchestrator.run_cot(
                    to_run, config, cache, parallelism=args.parallelism,
                    offline=args.offline, run_id=base,
                )
            else:
                outcome = orchestrator.run_single(
                    to_run, config, args.mode, cache, parallelism=args.parallelism,
                    offline=args.offline, run_id=base,
                )
            items = orchestrator.merge_items(records, existing, outcome.items)
            failures = outcome.failures
            manifest = outcome.manifest
            manifest.record_count = len(items)
        else:
            items, failures = existing, []
            manifest = None
    except orchestrator.OrchestratorError as exc:
        return _fail(str(exc), EXIT_TRANSPORT)

    orchestrator.write_raw_items(items, raw_path)
    failures_path = out / f"{base}.failures.jsonl"
    if failures:
        orchestrator.write_failures(failures, failures_path)
    elif failures_path.exists():
        failures_path.unlink()
    if manifest is not None:
        orchestrator.write_manifest(manifest, out / f"{base}.manifest.json")

    by_id = {r.instance_id: r for r in records}
    predictions = [
        answers.process_raw(item.raw_text, by_id[item.instance_id], backend_name=item.backend_name)
        for item in items
    ]
    answers.write_predictions(predictions, out / f"{base}.pred.jsonl")

    print(f"{len(items)} predictions, {len(failures)} failures -> {out / (base + '.pred.jsonl')}")
    return EXIT_PARTIAL if failures else EXIT_OK


def _parse_metric_toggles(spec_text: str, embed_url: str | None) -> metrics.MetricOptions:
    names = {name.strip() for name in spec_text.split(",") if name.strip()}
    unknown = names - {"rouge", "bertscore", "exact"}
    if unknown:
        raise MetricsToggleError(f"unknown metrics: {sorted(unknown)}")
    options = metrics.MetricOptions(
        rouge="rouge" in names,
        bertscore="bertscore" in names,
        exact="exact" in names,
    )
    if options.bertscore:
        if not embed_url:
            raise MetricsToggleError("bertscore requires --embed-url")
        options.embedder = metrics.HttpEmbedder(embed_url)
    return options


class MetricsToggleError(ValueError):
    pass


def cmd_eval(args) -> int:
    try:
        predictions = answers.read_predictions(args.predictions)
        gold = load_split(args.gold, gold=True)
        options = _parse_metric_toggles(args.metrics, args.embed_url)
    except (DatasetError, MetricsToggleError, OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    try:
        report = metrics.evaluate(predictions, gold, options)
    except metrics.EmbedderTransportError as exc:
        return _fail(str(exc), EXIT_TRANSPORT)
    except metrics.MetricsError as exc:
        return _fail(str(exc), EXIT_INPUT)

    out = _ensure_out(args.out)
    (out / "metrics.txt").write_text(metrics.render_report(report), encoding="utf-8")
    metrics.write_report_csv(report, out / "metrics.csv")
    metrics.write_per_instance_csv(report, out / "per_instance.csv")
    print(metrics.render_report(report), end="")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    if bool(args.routing) == bool(args.vote):
        return _fail("need exactly one of --routing or --vote", EXIT_INPUT)
    try:
        records = load_split(args.dataset, gold=False)
        per_backend: dict[str, dict[str, str]] = {}
        priority: list[str] = []
        for item in args.pred:
            if "=" not in item:
                return _fail(f"--pred wants name=path, got {item!r}", EXIT_INPUT)
            name, path = item.split("=", 1)
            per_backend[name] = answers.read_predictions(path)
            priority.append(name)
        if args.routing:
            table = ensemble.load_routing(args.routing)
            ensemble.validate_routing(table, set(per_backend))
            combined = ensemble.ensemble_predictions(per_backend, records, table)
        else:
            combined = ensemble.majority_vote(per_backend, records, priority=priority)
        if args.gold:
            gold = load_split(args.gold, gold=True)
            cells = ensemble.exact_match_table(per_backend, gold)
            out_base = Path(args.out)
            table_txt = out_base.with_suffix(".exact_match.txt")
            table_csv = out_base.with_suffix(".exact_match.csv")
            table_txt.write_text(ensemble.render_exact_match_table(cells), encoding="utf-8")
            ensemble.write_exact_match_csv(cells, table_csv)
            print(f"per-type exact-match table -> {table_txt}")
    except (DatasetError, ensemble.EnsembleError, metrics.MetricsError, OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    answers.write_predictions(combined, args.out)
    print(f"{len(combined)} combined predictions -> {args.out}")
    return EXIT_OK


def cmd_breakdown(args) -> int:
    try:
        predictions = answers.read_predictions(args.predictions)
        gold = load_split(args.gold, gold=True)
        report = metrics.evaluate(
            predictions, gold, metrics.MetricOptions(rouge=False, bertscore=False, exact=True)
        )
    except (DatasetError, metrics.MetricsError, OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)

    out = _ensure_out(args.out)
    text = metrics.render_report(report)
    (out / "breakdown.txt").write_text(text, encoding="utf-8")

    by_id = {r.instance_id: r for r in gold}
    mismatches = [
        {
            "instance_id": row["instance_id"],
            "figure_type": by_id[row["instance_id"]].figure_type,
            "gold": by_id[row["instance_id"]].gold_answer,
            "predicted": predictions[row["instance_id"]],
            "category": "",
        }
        for row in report.per_instance
        if row["exact"] < 1.0
    ]
    mismatches.sort(key=lambda m: (m["figure_type"], m["instance_id"]))
    with (out / "mismatches.jsonl").open("w", encoding="utf-8") as fh:
        for entry in mismatches:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    print(text, end="")
    print(f"\n{len(mismatches)} mismatches -> {out / 'mismatches.jsonl'}")
    return EXIT_OK


def cmd_dump_prompts(args) -> int:
    text = prompts.dump_templates()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figvqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="summarize a dataset split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--by", choices=["figure_type", "qa_flags"])
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("run", help="run one prompting mode against one backend")
    p.add_argument("--dataset", required=True)
    p.add_argument("--backend", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--mode", required=True, choices=list(orchestrator.ALL_MODES))
    p.add_argument("--out", required=True)
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--offline", action="store_true", help="serve everything from cache")
    p.add_argument("--cache-dir", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ensemble", help="combine per-backend prediction files")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pred", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--routing", help="figure-type routing file")
    p.add_argument("--vote", action="store_true", help="majority vote instead of routing")
    p.add_argument("--gold", help="gold split; also emit the per-type exact-match table")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("eval", help="score predictions against gold answers")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--metrics", default="rouge,exact")
    p.add_argument("--embed-url", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("breakdown", help="per-type tables plus mismatch list for triage")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_breakdown)

    p = sub.add_parser("dump-prompts", help="emit all prompt templates for auditing")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dump_prompts)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BackendError as exc:
        return _fail(str(exc), EXIT_TRANSPORT)


if __name__ == "__main__":
    sys.exit(main())
