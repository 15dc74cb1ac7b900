"""Whole-model persistence: backbone, QA head, attached adapters, vocab.

One parameter container holds every store entry; the JSON sidecar records
the encoder config, the vocabulary, and the manifests of any attached
adapters so the exact stack (occupancy and within-slot order included)
can be rebuilt on load.
"""

from __future__ import annotations

import json
from pathlib import Path

from .adapters import (
    AdapterStackSpec,
    LanguageAdapter,
    PlacementConfig,
    TaskAdapter,
    adapter_manifest,
    attach,
)
from .data import Vocab
from .encoder import EncoderConfig, EncoderModel
from .errors import ManifestError
from .params import load_params, save_params
from .qa import init_qa_head
from .rng import Rng


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_model(path, model: EncoderModel, vocab: Vocab | None = None,
               provenance: dict | None = None) -> None:
    path = Path(path)
    save_params(path, {name: t.data for name, t in model.params.items()})
    manifest = {
        "encoder": model.config.to_dict(),
        "vocab": vocab.to_list() if vocab is not None else None,
        "has_qa_head": "qa_head.w" in model.params,
        "adapters": {
            role: adapter_manifest(a) if a is not None else None
            for role, a in model.attached.items()
        },
        "provenance": provenance or {},
    }
    _sidecar(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _rebuild_adapter(m: dict) -> TaskAdapter:
    common = dict(name=m["name"], hidden_dim=m["hidden_dim"],
                  num_blocks=m["num_blocks"],
                  placement=PlacementConfig(m["scheme"]),
                  bottleneck_dim=m["bottleneck_dim"])
    if m["kind"] == "language":
        adapter = LanguageAdapter(**common, coupling_dim=m.get("coupling_dim"))
    elif m["kind"] == "task":
        adapter = TaskAdapter(**common)
    else:
        raise ManifestError(f"unknown adapter kind {m['kind']!r} in model manifest")
    adapter.provenance = {k: v for k, v in m.items()
                          if k not in ("name", "kind", "scheme", "hidden_dim",
                                       "bottleneck_dim", "num_blocks",
                                       "coupling_dim")}
    return adapter


def load_model(path) -> tuple[EncoderModel, Vocab | None]:
    """Rebuild the saved stack; every tensor is overwritten from the file."""
    path = Path(path)
    sidecar = _sidecar(path)
    if not sidecar.exists():
        raise ManifestError(f"missing model manifest {sidecar}")
    manifest = json.loads(sidecar.read_text())
    config = EncoderConfig.from_dict(manifest["encoder"])
    model = EncoderModel(config)
    if manifest.get("has_qa_head"):
        init_qa_head(model.params, config.hidden_dim, Rng(0).child("qa-head"))
    adapters = manifest.get("adapters") or {}
    lang_m, task_m = adapters.get("language"), adapters.get("task")
    if lang_m or task_m:
        attach(model, AdapterStackSpec(
            language_adapter=_rebuild_adapter(lang_m) if lang_m else None,
            task_adapter=_rebuild_adapter(task_m) if task_m else None,
        ))
    loaded = load_params(path)
    expected = set(model.params.names())
    if set(loaded) != expected:
        missing = sorted(expected - set(loaded))
        extra = sorted(set(loaded) - expected)
        raise ManifestError(
            f"model container {path} does not match manifest layout "
            f"(missing {missing[:5]}, unexpected {extra[:5]})"
        )
    for name, arr in loaded.items():
        tensor = model.params[name]
        if tensor.data.shape != arr.shape:
            raise ManifestError(
                f"entry {name!r} has shape {arr.shape}, "
                f"manifest implies {tensor.data.shape}"
            )
        tensor.data = arr
    vocab_list = manifest.get("vocab")
    vocab = Vocab.from_list(vocab_list) if vocab_list is not None else None
    return model, vocab
