"""Command-line entry point binding all modules.

Exit codes: 0 success (for validate: no errors), 1 failed checks or
validation errors, 2 I/O or schema failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, dataset, metrics, phovit, reports, scenegen
from .textproc import tokenize


def _load_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _rules_from_flag(args) -> analysis.KeywordRules:
    config = _config_obj(args)
    if config and "categories" in config:
        return analysis.KeywordRules.from_config(config)
    return analysis.KeywordRules.default()


def _config_obj(args) -> dict:
    path = getattr(args, "config", None) or os.environ.get("VICLEVR_CONFIG")
    if not path:
        return {}
    return _load_json(path)


def _emit(doc: reports.ReportDocument, args) -> None:
    fmt = args.format
    if args.out:
        reports.emit_report(doc, args.out, fmt)
    else:
        sys.stdout.write(doc.render(fmt))


def cmd_validate(args) -> int:
    d = dataset.load_dataset(args.data)
    config = _config_obj(args)
    report = dataset.validate(d, yes_no_patterns=config.get("yes_no_patterns"))
    for rule_id, subject, message in report.errors:
        print(f"error [{rule_id}] {message}", file=sys.stderr)
    for rule_id, subject, message in report.warnings:
        print(f"warning [{rule_id}] {message}", file=sys.stderr)
    for rule_id, message in report.notices:
        print(f"notice [{rule_id}] {message}", file=sys.stderr)
    print(
        f"validate: {len(report.errors)} errors, {len(report.warnings)} warnings"
    )
    return 0 if report.ok else 1


def cmd_analyze(args) -> int:
    d = dataset.load_dataset(args.data)
    rules = _rules_from_flag(args)
    doc = reports.ReportDocument()

    stats = dataset.overlap_stats(d)
    doc.add_table(
        "Split statistics",
        ["Split", "Questions", "Unique Questions", "Overlap with train"],
        [
            [
                split,
                stats[split]["questions"],
                stats[split]["unique_questions"],
                stats[split].get("overlap_with_train", "-"),
            ]
            for split in dataset.SPLITS
        ],
    )

    comp = analysis.complexity_stats(d)
    doc.add_table(
        "Linguistic complexity",
        ["Field", "min", "mean", "max"],
        [
            ["word", *comp.word],
            ["dependency", *comp.dependency],
            ["height", *comp.height],
        ],
    )

    quartiles = analysis.length_quartiles(d)
    doc.add_key_values(
        "Length quartiles", {"Q1": quartiles[0], "Q2": quartiles[1], "Q3": quartiles[2]}
    )

    lengths: dict[int, int] = {}
    for q in d.questions:
        n = len(tokenize(q.question))
        lengths[n] = lengths.get(n, 0) + 1
    doc.add_table(
        "Question length histogram",
        ["Length", "Count"],
        [[n, lengths[n]] for n in sorted(lengths)],
    )

    profiles = analysis.profile_dataset(d, rules=rules, quartiles=quartiles)
    for dim, title in (
        ("category", "Category distribution"),
        ("linguistic_type", "Linguistic type distribution"),
        ("length_group", "Length group distribution"),
        ("lls_level", "Linguistic level distribution"),
    ):
        counts: dict[str, int] = {}
        for p in profiles:
            key = getattr(p, dim)
            counts[key] = counts.get(key, 0) + 1
        doc.add_table(
            title, ["Group", "Count"], [[k, counts[k]] for k in sorted(counts)]
        )

    _emit(doc, args)
    return 0


def _metric_configs(config: dict) -> metrics.EvalConfigs:
    cfgs = metrics.EvalConfigs()
    if "bleu" in config:
        cfgs.bleu = metrics.BleuConfig(**config["bleu"])
    if "rouge" in config:
        cfgs.rouge = metrics.RougeConfig(**config["rouge"])
    if "meteor" in config:
        cfgs.meteor = metrics.MeteorConfig(**config["meteor"])
    return cfgs


def cmd_evaluate(args) -> int:
    gold = dataset.load_dataset(args.gold)
    preds = dataset.load_predictions(args.pred, gold)
    config = _config_obj(args)
    corpus, scores = metrics.evaluate_all(preds, gold, _metric_configs(config))

    doc = reports.ReportDocument()
    row = corpus.as_row()
    doc.add_table(
        "Metrics",
        list(metrics.REPORT_COLUMNS),
        [[row[c] for c in metrics.REPORT_COLUMNS]],
    )
    rules = _rules_from_flag(args)
    profiles = analysis.profile_dataset(gold, rules=rules)
    for dim, title in (
        ("category", "Accuracy by category"),
        ("linguistic_type", "Accuracy by linguistic type"),
        ("length_group", "Accuracy by length group"),
    ):
        rows = analysis.breakdown(scores, profiles, dim)
        doc.add_table(
            title,
            ["Group", "n", "Accuracy", "F1"],
            [[r["group"], r["n"], r["accuracy"], r["f1_mean"]] for r in rows],
        )
    _emit(doc, args)
    return 0


def _parse_mix(text: str) -> dict:
    mix = {}
    for part in text.split(","):
        label, _, weight = part.partition("=")
        mix[label.strip()] = float(weight) if weight else 1.0
    return mix


def cmd_generate(args) -> int:
    cfg = scenegen.GenConfig(
        n_scenes=args.scenes,
        questions_per_scene=args.qps,
        seed=args.seed,
        image_size=args.image_size,
        category_mix=_parse_mix(args.mix) if args.mix else {c: 1.0 for c in scenegen.CATEGORIES},
    )
    generated = scenegen.generate_dataset(cfg)
    os.makedirs(args.out, exist_ok=True)
    dataset.save_dataset(generated.dataset, os.path.join(args.out, "dataset.json"))
    with open(os.path.join(args.out, "programs.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(scenegen.programs_to_jsonl(generated.programs))
    if args.embed_images:
        arrays = {
            str(image_id): img.pixels.tolist()
            for image_id, img in generated.images.items()
        }
        with open(os.path.join(args.out, "images.json"), "w", encoding="utf-8") as fh:
            json.dump(arrays, fh, sort_keys=True, separators=(",", ":"))
    else:
        img_dir = os.path.join(args.out, "images")
        os.makedirs(img_dir, exist_ok=True)
        for image_id, img in sorted(generated.images.items()):
            scenegen.write_ppm(
                img, os.path.join(img_dir, f"scene_{image_id:06d}.ppm")
            )
    print(
        f"generate: {len(generated.dataset.images)} images, "
        f"{len(generated.dataset.questions)} questions -> {args.out}"
    )
    return 0


def cmd_model_check(args) -> int:
    checks: dict[str, bool] = {}
    report: dict = {}

    cfg = phovit.PhoVitConfig(seed=args.seed)
    model, batch = phovit.make_training_batch(cfg, seed=2024)
    img, question, _ = batch[0]

    # Shape and invariant suite.
    try:
        probs, answer = model.forward(img, question)
        checks["shapes"] = probs.shape == (cfg.n_answers,)
        checks["sigmoid_range"] = bool(np.all((probs > 0) & (probs < 1)))
        probs2, _ = model.forward(img, question)
        checks["deterministic"] = bool(np.array_equal(probs, probs2))
        long_question = " ".join(["vật"] * 50)
        idx = model.embedding.indices(tokenize(long_question), cfg.max_len)
        checks["truncation"] = len(idx) == cfg.max_len
    except Exception as exc:  # pragma: no cover - diagnostic path
        print(f"model-check: shape suite failed: {exc}", file=sys.stderr)
        checks["shapes"] = False

    if not args.skip_grad_check:
        grad_report = phovit.grad_check_model(seed=args.seed)
        checks["grad_check"] = grad_report["passed"]
        report["grad_check"] = {
            group: entry for group, entry in grad_report["groups"].items()
        }

    if not args.skip_probe:
        probe = phovit.training_probe(cfg, steps=args.probe_steps)
        checks["training_probe"] = probe["final_loss"] <= args.probe_factor * probe[
            "initial_loss"
        ]
        report["training_probe"] = {
            "initial_loss": probe["initial_loss"],
            "final_loss": probe["final_loss"],
        }

    report["checks"] = checks
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=1, default=float)
    for name, ok in sorted(checks.items()):
        print(f"model-check: {name}: {'pass' if ok else 'FAIL'}")
    return 0 if all(checks.values()) else 1


def cmd_report(args) -> int:
    merged = reports.ReportDocument()
    for path in args.inputs:
        doc = reports.ReportDocument.from_obj(_load_json(path))
        merged.sections.extend(doc.sections)
    if args.out:
        reports.emit_report(merged, args.out, "markdown")
    else:
        sys.stdout.write(merged.render("markdown"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viclevr",
        description="Validate, analyze, evaluate and generate CLEVR-style "
        "Vietnamese VQA datasets; verify the toy fusion model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check annotation protocols")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("analyze", help="corpus statistics and distributions")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--format", choices=reports.FORMATS, default="markdown")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("evaluate", help="score predictions against gold answers")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--format", choices=reports.FORMATS, default="markdown")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("generate", help="synthesize a desk-scale dataset")
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--qps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--embed-images", action="store_true")
    p.add_argument("--mix", help="e.g. count=2,color=1")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("model-check", help="shape suite, gradient check, training probe")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--probe-steps", type=int, default=300)
    p.add_argument("--probe-factor", type=float, default=0.5)
    p.add_argument("--skip-grad-check", action="store_true")
    p.add_argument("--skip-probe", action="store_true")
    p.set_defaults(fn=cmd_model_check)

    p = sub.add_parser("report", help="merge JSON reports into one Markdown document")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (dataset.DatasetError, scenegen.ProgramError, scenegen.PlacementError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
