"""Command-line entry points: synth, train-mlm, run, transfer, report.

Every subcommand accepts a JSON config file plus flag overrides; flags
win over the file, and --seed is always defaulted so runs are
reproducible without ceremony. Contract violations exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import AdapterQAError, ConfigError
from .experiments import (
    ExperimentConfig,
    mlm_train_language_adapter,
    pretrain_backbone,
    run_experiment,
    transfer,
)
from .reporting import load_manifests, render_tables
from .synth import SynthSpec, generate_corpus, write_corpus

SETUP_FLAGS = {"A": "A", "B": "B", "C-lang": "C_lang", "C-stack": "C_stack",
               "D": "D"}


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return doc


def _merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    merged.setdefault("seed", 0)
    return merged


def _experiment_config(args, extra_overrides: dict | None = None) -> ExperimentConfig:
    base = _load_config_file(args.config)
    overrides = {
        "seed": args.seed,
        "output_dir": getattr(args, "output_dir", None),
        "language": getattr(args, "language", None),
        "epochs": getattr(args, "epochs", None),
        "lr": getattr(args, "lr", None),
        "batch_size": getattr(args, "batch_size", None),
        "max_steps": getattr(args, "max_steps", None),
        "scheme": getattr(args, "scheme", None),
        "backbone_path": getattr(args, "backbone", None),
        "backbone_out": getattr(args, "backbone_out", None),
        "adapter_out": getattr(args, "adapter_out", None),
        "lang_adapter_path": getattr(args, "lang_adapter", None),
        "model_out": getattr(args, "model_out", None),
    }
    if extra_overrides:
        overrides.update(extra_overrides)
    files = {}
    for key in ("train_file", "test_file"):
        values = getattr(args, key, None)
        if values:
            files[key.replace("_file", "")] = values
    for key in ("xquad_test", "mlqa_test", "mlqa_dev"):
        value = getattr(args, key, None)
        if value:
            files[key] = [value]
    if files:
        overrides["data_files"] = files
    return ExperimentConfig.from_dict(_merge(base, overrides))


def _print_report_line(manifest) -> None:
    r = manifest.report
    print(f"[{manifest.setup}] {r['language']}: "
          f"F1 {r['f1']:.2f}  EM {r['em']:.2f}  "
          f"Jaccard {r['jaccard']:.2f}  WER {r['wer']:.2f}  "
          f"({r['n_examples']} examples, {manifest.steps} steps)")


def cmd_synth(args) -> int:
    base = _load_config_file(args.config)
    overrides = {
        "seed": args.seed,
        "n_train": args.n_train,
        "n_test": args.n_test,
        "n_unlabeled": args.n_unlabeled,
        "languages": args.languages.split(",") if args.languages else None,
    }
    spec = SynthSpec.from_dict(_merge(base, overrides))
    corpora = generate_corpus(spec)
    written = write_corpus(corpora, args.out, spec)
    for path in written:
        print(path)
    return 0


def cmd_train_mlm(args) -> int:
    config = _experiment_config(args, {
        "mlm_epochs": args.mlm_epochs,
        "mlm_lr": args.mlm_lr,
        "pretrain_epochs": args.pretrain_epochs,
    })
    if args.pretrain_backbone:
        result = pretrain_backbone(config)
    else:
        result = mlm_train_language_adapter(config)
    history = result["history"]
    if "held_out_before" in history:
        print(f"held-out MLM loss: {history['held_out_before']:.4f} -> "
              f"{history['held_out_after']:.4f}")
    print(f"steps: {history['steps']}")
    for key in ("adapter_path", "backbone_path"):
        if key in result:
            print(f"{key.replace('_', ' ')}: {result[key]}")
    if config.output_dir:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "train-mlm.json").write_text(
            json.dumps(result, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_run(args) -> int:
    config = _experiment_config(args, {"setup": SETUP_FLAGS[args.setup]})
    manifest = run_experiment(config)
    _print_report_line(manifest)
    if config.output_dir:
        print(f"artifacts written to {config.output_dir}")
    return 0


def cmd_transfer(args) -> int:
    config = _experiment_config(args, {
        "model_path": args.model,
        "target_adapter_path": args.target_adapter,
        "target_language": args.target_language,
    })
    manifest = transfer(config)
    _print_report_line(manifest)
    return 0


def cmd_report(args) -> int:
    manifests = load_manifests(args.manifests)
    text = render_tables(manifests)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adapterqa",
        description="Adapter-based cross-lingual transfer for extractive QA "
                    "at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_train=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (default 0)")
        if with_train:
            p.add_argument("--output-dir")
            p.add_argument("--language")
            p.add_argument("--epochs", type=int, default=None)
            p.add_argument("--lr", type=float, default=None)
            p.add_argument("--batch-size", type=int, default=None)
            p.add_argument("--max-steps", type=int, default=None)
            p.add_argument("--scheme", choices=["houlsby", "pfeiffer"])
            p.add_argument("--backbone", help="saved backbone model file")
            p.add_argument("--backbone-out")
            p.add_argument("--adapter-out")

    p_synth = sub.add_parser("synth", help="generate synthetic bilingual corpora")
    p_synth.add_argument("--config", help="JSON spec file")
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--languages", help="comma-separated language names")
    p_synth.add_argument("--n-train", type=int, default=None)
    p_synth.add_argument("--n-test", type=int, default=None)
    p_synth.add_argument("--n-unlabeled", type=int, default=None)
    p_synth.set_defaults(func=cmd_synth)

    p_mlm = sub.add_parser("train-mlm",
                           help="masked-LM training of a language adapter "
                                "(or, with --pretrain-backbone, the backbone)")
    common(p_mlm)
    p_mlm.add_argument("--pretrain-backbone", action="store_true",
                       help="train the whole backbone instead of an adapter")
    p_mlm.add_argument("--mlm-epochs", type=int, default=None)
    p_mlm.add_argument("--mlm-lr", type=float, default=None)
    p_mlm.add_argument("--pretrain-epochs", type=int, default=None)
    p_mlm.set_defaults(func=cmd_train_mlm)

    p_run = sub.add_parser("run", help="run one experimental setup")
    p_run.add_argument("--setup", required=True, choices=list(SETUP_FLAGS))
    common(p_run)
    p_run.add_argument("--lang-adapter", help="language adapter file (Setup C)")
    p_run.add_argument("--model-out", help="save the trained stack")
    p_run.add_argument("--train-file", action="append")
    p_run.add_argument("--test-file", action="append")
    p_run.add_argument("--xquad-test")
    p_run.add_argument("--mlqa-test")
    p_run.add_argument("--mlqa-dev")
    p_run.set_defaults(func=cmd_run)

    p_tr = sub.add_parser("transfer",
                          help="swap the language adapter of a saved stack "
                               "and evaluate zero-shot")
    common(p_tr)
    p_tr.add_argument("--model", required=True, help="saved stack file")
    p_tr.add_argument("--target-adapter", required=True)
    p_tr.add_argument("--target-language", required=True)
    p_tr.add_argument("--test-file", action="append")
    p_tr.set_defaults(func=cmd_transfer)

    p_rep = sub.add_parser("report", help="render result tables from manifests")
    p_rep.add_argument("manifests", nargs="+",
                       help="manifest.json files or run directories")
    p_rep.add_argument("--out", help="also write the tables to this file")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AdapterQAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
