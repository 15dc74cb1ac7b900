"""Whole-model persistence: container plus sidecar rebuild the exact stack."""

import json

import numpy as np
import pytest

from adapterqa.adapters import (
    AdapterStackSpec,
    LanguageAdapter,
    TaskAdapter,
    attach,
)
from adapterqa.data import Vocab
from adapterqa.encoder import EncoderConfig, EncoderModel
from adapterqa.errors import ManifestError
from adapterqa.modelio import load_model, save_model
from adapterqa.params import hash_entries, load_params, save_params
from adapterqa.qa import init_qa_head
from adapterqa.rng import Rng

H = 16


def tiny_config(seed=0):
    return EncoderConfig(vocab_size=40, max_seq_len=12, hidden_dim=H,
                         num_blocks=2, num_heads=2, ffn_dim=24, seed=seed)


def perturb(model, seed=33):
    """Push every entry off its initial value so zero-init defaults cannot
    hide a load that silently skipped an entry."""
    rng = Rng(seed)
    for name in model.params.names():
        t = model.params[name]
        t.data = t.data + rng.child(name).normal(t.data.shape, std=0.05)


def full_stack_model():
    model = EncoderModel(tiny_config())
    init_qa_head(model.params, H, Rng(1).child("head"))
    lang = LanguageAdapter("syn-a", hidden_dim=H, num_blocks=2,
                           rng=Rng(2).child("lang"))
    task = TaskAdapter("qa", hidden_dim=H, num_blocks=2,
                       rng=Rng(3).child("task"))
    attach(model, AdapterStackSpec(language_adapter=lang, task_adapter=task))
    perturb(model)
    return model


def tiny_vocab():
    return Vocab.build(["alpha beta gamma delta"], max_size=20)


def test_bare_model_roundtrip(tmp_path):
    model = EncoderModel(tiny_config(seed=4))
    perturb(model)
    path = tmp_path / "bare.bin"
    save_model(path, model)
    loaded, vocab = load_model(path)
    assert vocab is None
    assert loaded.config == model.config
    assert set(loaded.params.names()) == set(model.params.names())
    names = model.params.names()
    assert hash_entries(loaded.params, names) == hash_entries(model.params, names)


def test_full_stack_roundtrip_bit_identical(tmp_path):
    model = full_stack_model()
    vocab = tiny_vocab()
    path = tmp_path / "stack.bin"
    save_model(path, model, vocab=vocab, provenance={"run": "unit"})
    loaded, loaded_vocab = load_model(path)

    names = model.params.names()
    assert set(loaded.params.names()) == set(names)
    assert hash_entries(loaded.params, names) == hash_entries(model.params, names)
    assert loaded_vocab.to_list() == vocab.to_list()

    assert loaded.attached["language"].name == "syn-a"
    assert loaded.attached["task"].name == "qa"

    ids = np.arange(4, 11, dtype=np.intp)
    trace_orig, trace_loaded = [], []
    out_orig = model.encode(ids, trace=trace_orig)
    out_loaded = loaded.encode(ids, trace=trace_loaded)
    assert trace_loaded == trace_orig
    np.testing.assert_array_equal(out_loaded.data, out_orig.data)


def test_loaded_stack_routes_through_adapter_objects(tmp_path):
    """The rebuilt adapters own the loaded tensors: registered entries are
    the same objects the attached units hold."""
    model = full_stack_model()
    path = tmp_path / "stack.bin"
    save_model(path, model)
    loaded, _ = load_model(path)
    lang = loaded.attached["language"]
    task = loaded.attached["task"]
    for pname, tensor in {**lang.named_tensors(), **task.named_tensors()}.items():
        assert loaded.params[pname] is tensor


def test_sidecar_records_manifest_fields(tmp_path):
    model = full_stack_model()
    path = tmp_path / "stack.bin"
    save_model(path, model, vocab=tiny_vocab(), provenance={"seed": 7})
    manifest = json.loads((tmp_path / "stack.bin.json").read_text())
    assert manifest["provenance"] == {"seed": 7}
    assert manifest["has_qa_head"] is True
    assert manifest["encoder"]["hidden_dim"] == H
    assert manifest["adapters"]["language"]["kind"] == "language"
    assert manifest["adapters"]["task"]["scheme"] == "pfeiffer"
    assert "coupling_dim" in manifest["adapters"]["language"]


def test_qa_head_presence_roundtrips(tmp_path):
    with_head = EncoderModel(tiny_config())
    init_qa_head(with_head.params, H, Rng(0).child("head"))
    path = tmp_path / "head.bin"
    save_model(path, with_head)
    loaded, _ = load_model(path)
    assert "qa_head.w" in loaded.params.names()

    without = EncoderModel(tiny_config())
    path2 = tmp_path / "nohead.bin"
    save_model(path2, without)
    loaded2, _ = load_model(path2)
    assert "qa_head.w" not in loaded2.params.names()


def test_missing_sidecar_rejected(tmp_path):
    model = EncoderModel(tiny_config())
    path = tmp_path / "model.bin"
    save_model(path, model)
    (tmp_path / "model.bin.json").unlink()
    with pytest.raises(ManifestError, match="manifest"):
        load_model(path)


def test_container_layout_mismatch_rejected(tmp_path):
    """Sidecar promises adapters, container holds a bare backbone."""
    model = full_stack_model()
    path = tmp_path / "model.bin"
    save_model(path, model)
    bare = EncoderModel(tiny_config())
    save_params(path, {name: t.data for name, t in bare.params.items()})
    with pytest.raises(ManifestError, match="does not match"):
        load_model(path)


def test_entry_shape_mismatch_rejected(tmp_path):
    model = EncoderModel(tiny_config())
    init_qa_head(model.params, H, Rng(0).child("head"))
    path = tmp_path / "model.bin"
    save_model(path, model)
    entries = load_params(path)
    entries["qa_head.w"] = entries["qa_head.w"].T.copy()
    save_params(path, entries)
    with pytest.raises(ManifestError, match="shape"):
        load_model(path)


def test_unknown_adapter_kind_rejected(tmp_path):
    model = full_stack_model()
    path = tmp_path / "model.bin"
    save_model(path, model)
    sidecar = tmp_path / "model.bin.json"
    manifest = json.loads(sidecar.read_text())
    manifest["adapters"]["task"]["kind"] = "mystery"
    sidecar.write_text(json.dumps(manifest))
    with pytest.raises(ManifestError, match="unknown adapter kind"):
        load_model(path)


def test_language_only_stack_roundtrip(tmp_path):
    model = EncoderModel(tiny_config())
    lang = LanguageAdapter("syn-b", hidden_dim=H, num_blocks=2,
                           coupling_dim=3, rng=Rng(9).child("lang"))
    lang.provenance = {"corpus": "unlabeled-b"}
    attach(model, AdapterStackSpec(language_adapter=lang))
    perturb(model)
    path = tmp_path / "lang.bin"
    save_model(path, model)
    loaded, _ = load_model(path)
    rebuilt = loaded.attached["language"]
    assert loaded.attached["task"] is None
    assert rebuilt.invertible.coupling_dim == 3
    assert rebuilt.provenance.get("corpus") == "unlabeled-b"
    names = model.params.names()
    assert hash_entries(loaded.params, names) == hash_entries(model.params, names)
