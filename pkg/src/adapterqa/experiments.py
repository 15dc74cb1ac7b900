"""Drivers for the four experimental setups and zero-shot transfer.

Setup A trains the full backbone plus QA head. Setup B trains only a
task adapter (plus head) on a frozen backbone. Setup C stacks a trained
language adapter, either alone (C_lang) or under a task adapter
(C_stack). Setup D is the swap procedure: train a task adapter over the
source language adapter, replace the language adapter with the target
one, and evaluate with zero further updates.

Every driver hash-verifies its frozen entries after training and fails
the run on any change. Manifests carry enough (config, seed, input
hashes) to reproduce the evaluation byte-for-byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .adapters import (
    AdapterStackSpec,
    FreezePolicy,
    LanguageAdapter,
    PlacementConfig,
    TaskAdapter,
    adapter_manifest,
    apply_freeze,
    attach,
    load_adapter,
    save_adapter,
    swap_language_adapter,
)
from .data import (
    DatasetSplit,
    Vocab,
    build_split,
    compare_split_sizes,
    featurize,
    parse_squad_json,
)
from .encoder import EncoderConfig, EncoderModel
from .errors import ConfigError, ContractError
from .modelio import load_model, save_model
from .params import file_sha256, hash_entries
from .qa import init_qa_head
from .rng import Rng
from .synth import SynthSpec, generate_corpus
from .train import TrainConfig, evaluate_qa, train_mlm, train_qa
from .tensor import no_grad

SETUP_CHOICES = ("A", "B", "C_lang", "C_stack", "D")


@dataclass
class ExperimentConfig:
    """One run's worth of knobs; JSON-friendly, flat by design.

    encoder holds EncoderConfig overrides (hidden_dim, num_blocks, ...);
    vocab_size there is ignored because the built vocabulary decides it.
    """

    setup: str = "A"
    seed: int = 0
    output_dir: str | None = None
    # model shape
    encoder: dict = field(default_factory=dict)
    scheme: str = "pfeiffer"
    bottleneck_dim: int | None = None
    vocab_size: int = 2000
    max_seq_len: int = 256
    # data: synthetic spec or real files
    synth: dict | None = None
    language: str | None = None
    data_files: dict | None = None
    unlabeled_files: list | None = None
    # QA optimization
    lr: float = 3e-4
    epochs: int = 5
    batch_size: int = 8
    max_steps: int | None = None
    # masked-LM optimization
    mlm_lr: float = 1e-3
    mlm_epochs: int = 5
    mask_rate: float = 0.15
    pretrain_epochs: int = 3
    # artifact paths
    backbone_path: str | None = None
    backbone_out: str | None = None
    adapter_out: str | None = None
    lang_adapter_path: str | None = None
    model_out: str | None = None
    model_path: str | None = None
    target_adapter_path: str | None = None
    # Setup D
    source_language: str | None = None
    target_language: str | None = None
    source_lang_adapter: str | None = None
    target_lang_adapter: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        valid = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - valid)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, epochs=self.epochs,
                           batch_size=self.batch_size, seed=self.seed,
                           max_steps=self.max_steps)

    def mlm_config(self) -> TrainConfig:
        return TrainConfig(lr=self.mlm_lr, epochs=self.mlm_epochs,
                           batch_size=self.batch_size, seed=self.seed,
                           max_steps=self.max_steps)


@dataclass
class RunManifest:
    setup: str
    seed: int
    config: dict
    input_hashes: dict
    backbone_source: str
    loss_curve: list
    steps: int
    freeze_verification: dict
    adapters: dict
    occupied_slots: int
    param_counts: dict
    report: dict
    extra: dict
    wall_clock_seconds: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        valid = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in valid})


def _read_examples(paths, language: str, hashes: dict) -> list:
    examples = []
    for p in paths if isinstance(paths, (list, tuple)) else [paths]:
        p = Path(p)
        if not p.exists():
            raise ConfigError(f"data file not found: {p}")
        hashes[str(p)] = file_sha256(p)
        examples.extend(parse_squad_json(p.read_bytes(), language))
    return examples


def _spec_hash(spec: SynthSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def resolve_data(config: ExperimentConfig, train_language: str,
                 test_language: str | None = None):
    """Produce the training/evaluation split plus input content hashes.

    Synthetic mode regenerates the corpus from its spec (hashed in place
    of file hashes); file mode accepts either the three-source split
    construction or plain train/test file lists.
    """
    test_language = test_language or train_language
    hashes: dict[str, str] = {}
    if config.synth is not None:
        spec = SynthSpec.from_dict(config.synth)
        corpora = generate_corpus(spec)
        for lang in (train_language, test_language):
            if lang not in corpora:
                raise ConfigError(
                    f"language {lang!r} not in synthetic spec languages {spec.languages}"
                )
        hashes["synth-spec"] = _spec_hash(spec)
        split = DatasetSplit(
            train=corpora[train_language].train,
            test=corpora[test_language].test,
            provenance=[{"source": f"synth:{train_language}:train",
                         "count": len(corpora[train_language].train)},
                        {"source": f"synth:{test_language}:test",
                         "count": len(corpora[test_language].test)}],
        )
        return split, hashes, corpora
    if config.data_files is None:
        raise ConfigError("no data: provide either synth or data_files")
    files = config.data_files
    if {"xquad_test", "mlqa_test", "mlqa_dev"} <= set(files):
        if train_language != test_language:
            raise ConfigError("three-source split construction is single-language")
        split = build_split(
            _read_examples(files["xquad_test"], train_language, hashes),
            _read_examples(files["mlqa_test"], train_language, hashes),
            _read_examples(files["mlqa_dev"], train_language, hashes),
        )
        return split, hashes, None
    if {"train", "test"} <= set(files):
        train = _read_examples(files["train"], train_language, hashes)
        test = _read_examples(files["test"], test_language, hashes)
        provenance = [{"source": "train-files", "count": len(train)},
                      {"source": "test-files", "count": len(test)}]
        return DatasetSplit(train, test, provenance), hashes, None
    raise ConfigError(
        "data_files must contain either {xquad_test, mlqa_test, mlqa_dev} "
        "or {train, test}"
    )


def _vocab_texts(config: ExperimentConfig, corpora, split: DatasetSplit,
                 hashes: dict) -> list[str]:
    """Vocabulary sources: every synthetic language's text (multilingual
    coverage for transfer), or the split's training text plus any
    unlabeled files."""
    if corpora is not None:
        spec_langs = list(corpora)
        texts = []
        for lang in spec_langs:
            for ex in corpora[lang].train:
                texts.append(ex.question)
                texts.append(ex.context)
            texts.extend(corpora[lang].unlabeled)
        return texts
    texts = []
    for ex in split.train:
        texts.append(ex.question)
        texts.append(ex.context)
    for p in config.unlabeled_files or []:
        p = Path(p)
        hashes[str(p)] = file_sha256(p)
        texts.extend(p.read_text(encoding="utf-8").splitlines())
    return texts


def _acquire_model(config: ExperimentConfig, vocab_texts, hashes: dict):
    """Load the backbone from disk or build a fresh one (flagged)."""
    if config.backbone_path:
        p = Path(config.backbone_path)
        if not p.exists():
            raise ConfigError(f"backbone file not found: {p}")
        hashes[str(p)] = file_sha256(p)
        model, vocab = load_model(p)
        if vocab is None:
            raise ConfigError(f"backbone {p} was saved without a vocabulary")
        return model, vocab, str(p)
    vocab = Vocab.build(vocab_texts, config.vocab_size)
    enc_kwargs = dict(config.encoder)
    enc_kwargs.pop("vocab_size", None)
    enc_kwargs.setdefault("max_seq_len", config.max_seq_len)
    enc_kwargs.setdefault("seed", config.seed)
    enc = EncoderConfig(vocab_size=len(vocab), **enc_kwargs)
    model = EncoderModel(enc, Rng(config.seed).child("encoder-init"))
    return model, vocab, "fresh"


def _featurize_split(split: DatasetSplit, vocab: Vocab, max_seq_len: int):
    train = [featurize(ex, vocab, max_seq_len) for ex in split.train]
    test = [featurize(ex, vocab, max_seq_len) for ex in split.test]
    return train, test


def _verify_frozen(store, frozen_names, pre_hashes) -> dict:
    post = hash_entries(store, frozen_names)
    violations = sorted(n for n in frozen_names if pre_hashes[n] != post[n])
    if violations:
        raise ContractError(
            f"freeze violation: {len(violations)} frozen entries changed, "
            f"e.g. {violations[:5]}"
        )
    return {"frozen_entries": len(frozen_names), "verified": True}


def _verify_slot_order(model, token_ids) -> dict:
    """Instrumented forward: in every slot holding both kinds, the
    language unit must run before the task unit."""
    trace: list = []
    with no_grad():
        model.encode(token_ids, trace=trace)
    by_loc: dict[str, list[str]] = {}
    for loc, kind, _ in trace:
        by_loc.setdefault(loc, []).append(kind)
    for loc, kinds in by_loc.items():
        if "language" in kinds and "task" in kinds:
            if kinds.index("language") > kinds.index("task"):
                raise ContractError(f"slot {loc}: task unit ran before language unit")
    return {"order_ok": True, "events": [list(t) for t in trace]}


def _param_counts(model) -> dict:
    backbone = model.params.total_size(model.backbone_names())
    trainable = model.params.total_size(sorted(model.params.trainable_mask))
    return {"backbone": backbone, "trainable": trainable,
            "trainable_over_backbone": trainable / backbone if backbone else 0.0}


def _emit_run(output_dir, manifest: RunManifest, predictions: dict) -> None:
    if output_dir is None:
        return
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "report.json").write_text(
        json.dumps(manifest.report, indent=2, sort_keys=True) + "\n")
    (out / "predictions.json").write_text(
        json.dumps(predictions, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


def _require(config: ExperimentConfig, *fields_needed: str) -> None:
    missing = [f for f in fields_needed if getattr(config, f) in (None, "")]
    if missing:
        raise ConfigError(
            f"setup {config.setup} requires config fields: {missing}"
        )


def _finish(config, setup, hashes, backbone_source, history, freeze_info,
            model, report, predictions, extra, t0,
            adapters_info=None) -> RunManifest:
    manifest = RunManifest(
        setup=setup,
        seed=config.seed,
        config=config.to_dict(),
        input_hashes=hashes,
        backbone_source=backbone_source,
        loss_curve=history.get("epoch_loss", []),
        steps=history.get("steps", 0),
        freeze_verification=freeze_info,
        adapters=adapters_info or {},
        occupied_slots=model.occupied_slot_count(),
        param_counts=_param_counts(model),
        report=report.to_dict(),
        extra=extra,
        wall_clock_seconds=round(time.monotonic() - t0, 3),
    )
    _emit_run(config.output_dir, manifest, predictions)
    return manifest


def _provenance(config: ExperimentConfig, setup: str, language: str,
                adapters_info: dict) -> dict:
    return {"setup": setup, "seed": config.seed, "language": language,
            "adapters": {role: m.get("name") for role, m in adapters_info.items()
                         if m}}


def run_setup_a(config: ExperimentConfig) -> RunManifest:
    """Full fine-tune: every parameter trains."""
    t0 = time.monotonic()
    _require(config, "language")
    split, hashes, corpora = resolve_data(config, config.language)
    model, vocab, backbone_source = _acquire_model(
        config, _vocab_texts(config, corpora, split, hashes), hashes)
    if "qa_head.w" not in model.params:
        init_qa_head(model.params, model.config.hidden_dim,
                     Rng(config.seed).child("qa-head"))
    train_feats, test_feats = _featurize_split(split, vocab,
                                               model.config.max_seq_len)
    policy = FreezePolicy("A")
    history = train_qa(model, train_feats, policy, config.train_config())
    freeze_info = {"policy": "A", "frozen_entries": 0, "verified": True}
    report, predictions = evaluate_qa(
        model, test_feats, config.language,
        _provenance(config, "A", config.language, {}))
    extra = {"split_size_check": compare_split_sizes(split, config.language),
             "data_provenance": split.provenance}
    if config.model_out:
        save_model(config.model_out, model, vocab,
                   {"setup": "A", "seed": config.seed})
    return _finish(config, "A", hashes, backbone_source, history, freeze_info,
                   model, report, predictions, extra, t0)


def run_setup_b(config: ExperimentConfig) -> RunManifest:
    """Task adapter on a frozen backbone."""
    t0 = time.monotonic()
    _require(config, "language")
    split, hashes, corpora = resolve_data(config, config.language)
    model, vocab, backbone_source = _acquire_model(
        config, _vocab_texts(config, corpora, split, hashes), hashes)
    placement = PlacementConfig(config.scheme)
    task = TaskAdapter(f"qa-{config.language}", model.config.hidden_dim,
                       model.config.num_blocks, placement,
                       config.bottleneck_dim,
                       Rng(config.seed).child("task-adapter"))
    attach(model, AdapterStackSpec(task_adapter=task), placement)
    if "qa_head.w" not in model.params:
        init_qa_head(model.params, model.config.hidden_dim,
                     Rng(config.seed).child("qa-head"))
    train_feats, test_feats = _featurize_split(split, vocab,
                                               model.config.max_seq_len)
    policy = FreezePolicy("B")
    frozen = policy.frozen_names(model.params)
    pre = hash_entries(model.params, frozen)
    history = train_qa(model, train_feats, policy, config.train_config())
    freeze_info = {"policy": "B", **_verify_frozen(model.params, frozen, pre)}
    adapters_info = {"task": adapter_manifest(task)}
    report, predictions = evaluate_qa(
        model, test_feats, config.language,
        _provenance(config, "B", config.language, adapters_info))
    extra = {"split_size_check": compare_split_sizes(split, config.language),
             "data_provenance": split.provenance}
    if config.adapter_out:
        task.provenance = {"trained_on": f"qa:{config.language}",
                           "seed": config.seed}
        save_adapter(config.adapter_out, task)
    if config.model_out:
        save_model(config.model_out, model, vocab,
                   {"setup": "B", "seed": config.seed})
    return _finish(config, "B", hashes, backbone_source, history, freeze_info,
                   model, report, predictions, extra, t0, adapters_info)


def _load_language_adapter(path, model, expect_language: str | None,
                           hashes: dict) -> LanguageAdapter:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"language adapter file not found: {p}")
    hashes[str(p)] = file_sha256(p)
    adapter = load_adapter(p)
    if adapter.kind != "language":
        raise ConfigError(
            f"{p} holds a {adapter.kind} adapter; a language adapter is required"
        )
    source = adapter.provenance.get("source_language")
    if expect_language and source and source != expect_language:
        raise ConfigError(
            f"language adapter {p} was trained for {source!r}, "
            f"data language is {expect_language!r}"
        )
    if (adapter.hidden_dim != model.config.hidden_dim
            or adapter.num_blocks != model.config.num_blocks):
        raise ConfigError(
            f"adapter/backbone mismatch\nadapter manifest: {adapter_manifest(adapter)}\n"
            f"backbone config: {model.config.to_dict()}"
        )
    return adapter


def run_setup_c(config: ExperimentConfig) -> RunManifest:
    """Language adapter alone (C_lang) or under a task adapter (C_stack)."""
    t0 = time.monotonic()
    if config.setup not in ("C_lang", "C_stack"):
        raise ConfigError(f"run_setup_c got setup {config.setup!r}")
    _require(config, "language", "lang_adapter_path", "backbone_path")
    split, hashes, corpora = resolve_data(config, config.language)
    model, vocab, backbone_source = _acquire_model(
        config, _vocab_texts(config, corpora, split, hashes), hashes)
    lang = _load_language_adapter(config.lang_adapter_path, model,
                                  config.language, hashes)
    stack = AdapterStackSpec(language_adapter=lang)
    adapters_info = {"language": adapter_manifest(lang)}
    if config.setup == "C_stack":
        task = TaskAdapter(f"qa-{config.language}", model.config.hidden_dim,
                           model.config.num_blocks, lang.placement,
                           config.bottleneck_dim,
                           Rng(config.seed).child("task-adapter"))
        stack.task_adapter = task
        adapters_info["task"] = adapter_manifest(task)
    attach(model, stack)
    if "qa_head.w" not in model.params:
        init_qa_head(model.params, model.config.hidden_dim,
                     Rng(config.seed).child("qa-head"))
    train_feats, test_feats = _featurize_split(split, vocab,
                                               model.config.max_seq_len)
    extra = {"split_size_check": compare_split_sizes(split, config.language),
             "data_provenance": split.provenance}
    if config.setup == "C_stack":
        extra["slot_order"] = _verify_slot_order(model, test_feats[0].token_ids)
    policy = FreezePolicy(config.setup)
    frozen = policy.frozen_names(model.params)
    pre = hash_entries(model.params, frozen)
    history = train_qa(model, train_feats, policy, config.train_config())
    freeze_info = {"policy": config.setup,
                   **_verify_frozen(model.params, frozen, pre)}
    report, predictions = evaluate_qa(
        model, test_feats, config.language,
        _provenance(config, config.setup, config.language, adapters_info))
    if config.model_out:
        save_model(config.model_out, model, vocab,
                   {"setup": config.setup, "seed": config.seed})
    return _finish(config, config.setup, hashes, backbone_source, history,
                   freeze_info, model, report, predictions, extra, t0,
                   adapters_info)


def _evaluate_after_swap(model, test_feats, language, provenance):
    """Swap-side evaluation with proof that no parameter moved."""
    apply_freeze(model.params, FreezePolicy("D_transfer"))
    all_names = model.params.names()
    before = hash_entries(model.params, all_names)
    report, predictions = evaluate_qa(model, test_feats, language, provenance)
    after = hash_entries(model.params, all_names)
    changed = sorted(n for n in all_names if before[n] != after[n])
    if changed:
        raise ContractError(
            f"evaluation after swap modified parameters: {changed[:5]}"
        )
    return report, predictions


def run_setup_d(config: ExperimentConfig) -> RunManifest:
    """Train task adapter over the source language adapter, hot-swap the
    target language adapter, and evaluate zero-shot."""
    t0 = time.monotonic()
    if config.setup != "D":
        raise ConfigError(f"run_setup_d got setup {config.setup!r}")
    _require(config, "source_language", "target_language",
             "source_lang_adapter", "target_lang_adapter", "backbone_path")
    hashes: dict[str, str] = {}
    split, data_hashes, corpora = resolve_data(config, config.source_language,
                                               config.target_language)
    hashes.update(data_hashes)
    model, vocab, backbone_source = _acquire_model(config, None, hashes)
    if model.attached["language"] or model.attached["task"]:
        raise ConfigError("Setup D expects a bare backbone (no attached adapters)")
    source = _load_language_adapter(config.source_lang_adapter, model,
                                    config.source_language, hashes)
    target = _load_language_adapter(config.target_lang_adapter, model,
                                    config.target_language, hashes)
    task = TaskAdapter(f"qa-{config.source_language}", model.config.hidden_dim,
                       model.config.num_blocks, source.placement,
                       config.bottleneck_dim,
                       Rng(config.seed).child("task-adapter"))
    attach(model, AdapterStackSpec(language_adapter=source, task_adapter=task))
    if "qa_head.w" not in model.params:
        init_qa_head(model.params, model.config.hidden_dim,
                     Rng(config.seed).child("qa-head"))
    train_feats, test_feats = _featurize_split(split, vocab,
                                               model.config.max_seq_len)
    extra: dict = {"slot_order": _verify_slot_order(model, test_feats[0].token_ids)}
    policy = FreezePolicy("D_train")
    frozen = policy.frozen_names(model.params)
    pre = hash_entries(model.params, frozen)
    history = train_qa(model, train_feats, policy, config.train_config())
    freeze_info = {"policy": "D_train",
                   **_verify_frozen(model.params, frozen, pre)}
    if config.model_out:
        save_model(config.model_out, model, vocab,
                   {"setup": "D", "stage": "pre-swap", "seed": config.seed})
    keep_names = [n for n in model.params.names()
                  if not n.startswith("lang_adapter.")]
    pre_swap = hash_entries(model.params, keep_names)
    swap_language_adapter(model, target)
    post_swap = hash_entries(model.params, keep_names)
    swapped_changed = sorted(n for n in keep_names
                             if pre_swap[n] != post_swap[n])
    if swapped_changed:
        raise ContractError(
            f"swap touched non-language entries: {swapped_changed[:5]}"
        )
    extra["swap"] = {
        "source": adapter_manifest(source),
        "target": adapter_manifest(target),
        "isolation_verified": True,
        "task_and_backbone_hashes": pre_swap,
        "steps_before_swap": history.get("steps", 0),
        "steps_after_swap": 0,
    }
    adapters_info = {"language": adapter_manifest(target),
                     "task": adapter_manifest(task)}
    report, predictions = _evaluate_after_swap(
        model, test_feats, config.target_language,
        _provenance(config, "D", config.target_language, adapters_info))
    return _finish(config, "D", hashes, backbone_source, history, freeze_info,
                   model, report, predictions, extra, t0, adapters_info)


def transfer(config: ExperimentConfig) -> RunManifest:
    """Swap + evaluate only, starting from a saved trained stack."""
    t0 = time.monotonic()
    _require(config, "model_path", "target_adapter_path", "target_language")
    hashes: dict[str, str] = {}
    p = Path(config.model_path)
    if not p.exists():
        raise ConfigError(f"model file not found: {p}")
    hashes[str(p)] = file_sha256(p)
    model, vocab = load_model(p)
    if vocab is None:
        raise ConfigError(f"stack {p} was saved without a vocabulary")
    if model.attached["language"] is None:
        raise ConfigError(f"stack {p} has no language adapter to swap")
    target = _load_language_adapter(config.target_adapter_path, model,
                                    config.target_language, hashes)
    split, data_hashes, _ = resolve_data(config, config.target_language)
    hashes.update(data_hashes)
    test_feats = [featurize(ex, vocab, model.config.max_seq_len)
                  for ex in split.test]
    keep_names = [n for n in model.params.names()
                  if not n.startswith("lang_adapter.")]
    pre_swap = hash_entries(model.params, keep_names)
    swap_language_adapter(model, target)
    post_swap = hash_entries(model.params, keep_names)
    if pre_swap != post_swap:
        raise ContractError("swap touched non-language entries")
    adapters_info = {"language": adapter_manifest(target)}
    if model.attached["task"] is not None:
        adapters_info["task"] = adapter_manifest(model.attached["task"])
    report, predictions = _evaluate_after_swap(
        model, test_feats, config.target_language,
        _provenance(config, "D", config.target_language, adapters_info))
    history = {"epoch_loss": [], "steps": 0}
    freeze_info = {"policy": "D_transfer", "frozen_entries": len(model.params),
                   "verified": True}
    extra = {"swap": {"target": adapter_manifest(target),
                      "isolation_verified": True, "steps_after_swap": 0}}
    return _finish(config, "D", hashes, str(p), history, freeze_info, model,
                   report, predictions, extra, t0, adapters_info)


def pretrain_backbone(config: ExperimentConfig) -> dict:
    """Masked-LM pretraining of the whole backbone on every language's
    unlabeled text; the desk-scale stand-in for a multilingual
    pretrained encoder."""
    t0 = time.monotonic()
    hashes: dict[str, str] = {}
    lines, corpora = _unlabeled_lines(config, None, hashes)
    vocab_texts = None
    if corpora is not None:
        split = DatasetSplit([], [], [])
        vocab_texts = _vocab_texts(config, corpora, split, hashes)
    else:
        vocab_texts = list(lines)
    model, vocab, backbone_source = _acquire_model(config, vocab_texts, hashes)
    history = train_mlm(model, lines, vocab, FreezePolicy("A"),
                        TrainConfig(lr=config.mlm_lr,
                                    epochs=config.pretrain_epochs,
                                    batch_size=config.batch_size,
                                    seed=config.seed,
                                    max_steps=config.max_steps),
                        config.mask_rate)
    out = {"history": history, "backbone_source": backbone_source,
           "input_hashes": hashes,
           "wall_clock_seconds": round(time.monotonic() - t0, 3)}
    if config.backbone_out:
        save_model(config.backbone_out, model, vocab,
                   {"stage": "pretrained-backbone", "seed": config.seed,
                    "pretrain_epochs": config.pretrain_epochs})
        out["backbone_path"] = str(config.backbone_out)
    return out


def _unlabeled_lines(config: ExperimentConfig, language: str | None,
                     hashes: dict):
    """Unlabeled text for MLM: one language's lines, or all languages
    concatenated when language is None."""
    if config.synth is not None:
        spec = SynthSpec.from_dict(config.synth)
        corpora = generate_corpus(spec)
        hashes["synth-spec"] = _spec_hash(spec)
        if language is None:
            lines = [line for lang in spec.languages
                     for line in corpora[lang].unlabeled]
        else:
            if language not in corpora:
                raise ConfigError(
                    f"language {language!r} not in synthetic spec languages"
                )
            lines = list(corpora[language].unlabeled)
        return lines, corpora
    if not config.unlabeled_files:
        raise ConfigError("no unlabeled text: provide synth or unlabeled_files")
    lines = []
    for p in config.unlabeled_files:
        p = Path(p)
        if not p.exists():
            raise ConfigError(f"unlabeled file not found: {p}")
        hashes[str(p)] = file_sha256(p)
        lines.extend(p.read_text(encoding="utf-8").splitlines())
    return lines, None


def mlm_train_language_adapter(config: ExperimentConfig,
                               language: str | None = None) -> dict:
    """Train one language adapter on unlabeled text, backbone frozen.

    Saves the adapter (kind=language, source_language set) when
    adapter_out is given; verifies the backbone by hash afterward.
    """
    t0 = time.monotonic()
    language = language or config.language
    if not language:
        raise ConfigError("train-mlm requires a language")
    hashes: dict[str, str] = {}
    lines, corpora = _unlabeled_lines(config, language, hashes)
    if not lines:
        raise ConfigError(f"empty unlabeled corpus for {language!r}")
    if config.backbone_path:
        model, vocab, backbone_source = _acquire_model(config, None, hashes)
    else:
        split = DatasetSplit([], [], [])
        if corpora is not None:
            vocab_texts = _vocab_texts(config, corpora, split, hashes)
        else:
            vocab_texts = list(lines)
        model, vocab, backbone_source = _acquire_model(config, vocab_texts,
                                                       hashes)
    if model.attached["language"] is not None:
        raise ConfigError("backbone already has a language adapter attached")
    adapter = LanguageAdapter(language, model.config.hidden_dim,
                              model.config.num_blocks,
                              PlacementConfig(config.scheme),
                              config.bottleneck_dim,
                              Rng(config.seed).child(f"lang-adapter.{language}"))
    attach(model, AdapterStackSpec(language_adapter=adapter))
    policy = FreezePolicy("mlm")
    frozen = policy.frozen_names(model.params)
    pre = hash_entries(model.params, frozen)
    history = train_mlm(model, lines, vocab, policy, config.mlm_config(),
                        config.mask_rate)
    freeze_info = {"policy": "mlm", **_verify_frozen(model.params, frozen, pre)}
    adapter.provenance = {"source_language": language,
                          "trained_on": f"mlm:{language}:{len(lines)}-lines",
                          "seed": config.seed}
    out = {"language": language, "history": history,
           "freeze_verification": freeze_info,
           "backbone_source": backbone_source,
           "adapter_manifest": adapter_manifest(adapter),
           "input_hashes": hashes,
           "wall_clock_seconds": round(time.monotonic() - t0, 3)}
    if config.adapter_out:
        save_adapter(config.adapter_out, adapter)
        out["adapter_path"] = str(config.adapter_out)
    if config.backbone_out and backbone_source == "fresh":
        bare, _ = _detached_copy(model, vocab)
        save_model(config.backbone_out, bare, vocab,
                   {"stage": "backbone", "seed": config.seed})
        out["backbone_path"] = str(config.backbone_out)
    return out


def _detached_copy(model, vocab):
    """Fresh model holding only backbone entries (same values)."""
    bare = EncoderModel(model.config, Rng(0).child("bare"))
    for name in bare.params.names():
        bare.params[name].data = model.params[name].data.copy()
    return bare, vocab


def run_experiment(config: ExperimentConfig) -> RunManifest:
    if config.setup == "A":
        return run_setup_a(config)
    if config.setup == "B":
        return run_setup_b(config)
    if config.setup in ("C_lang", "C_stack"):
        return run_setup_c(config)
    if config.setup == "D":
        return run_setup_d(config)
    raise ConfigError(f"unknown setup {config.setup!r}; choose from {SETUP_CHOICES}")
