"""Bottleneck and invertible adapters: construction, stacking, freezing, swapping.

Adapters are small residual units inserted into encoder slots. A task
adapter carries one bottleneck unit per occupied slot; a language adapter
additionally carries an invertible unit placed after the embedding layer.
All units start as exact identities (zero-initialized output projections),
so attaching a fresh stack never changes model outputs.

Canonical parameter names are fixed by position, not by adapter name
("task_adapter.0.post_ffn.down.w", "lang_adapter.inv.F.w2", ...): a swap
replaces tensors under the same names, which keeps freeze masks and
optimizer state bookkeeping trivial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import INIT_STD, EncoderModel
from .errors import ContractError, ManifestError
from .params import load_params, save_params
from .rng import Rng
from .tensor import Tensor, concat, gelu, matmul

SCHEMES = ("houlsby", "pfeiffer")
TASK_PREFIX = "task_adapter."
LANG_PREFIX = "lang_adapter."
QA_PREFIX = "qa_head."

SETUPS = ("A", "B", "C_lang", "C_stack", "D_train", "D_transfer", "mlm")


@dataclass(frozen=True)
class PlacementConfig:
    """Which per-block slots a scheme occupies."""

    scheme: str = "pfeiffer"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ContractError(f"unknown placement scheme {self.scheme!r}")

    @property
    def slots(self) -> tuple[str, ...]:
        if self.scheme == "houlsby":
            return ("post_attn", "post_ffn")
        return ("post_ffn",)


class BottleneckAdapter:
    """Residual bottleneck unit: h + up(GELU(down(h)))."""

    def __init__(self, name: str, kind: str, hidden_dim: int,
                 bottleneck_dim: int | None = None, rng: Rng | None = None):
        if kind not in ("task", "language"):
            raise ContractError(f"adapter kind must be task or language, got {kind!r}")
        d = hidden_dim // 8 if bottleneck_dim is None else bottleneck_dim
        if not 0 < d < hidden_dim:
            raise ContractError(
                f"bottleneck_dim must satisfy 0 < d < hidden_dim, got d={d}, H={hidden_dim}"
            )
        self.name = name
        self.kind = kind
        self.hidden_dim = hidden_dim
        self.bottleneck_dim = d
        down = rng.normal((hidden_dim, d), INIT_STD) if rng else np.zeros((hidden_dim, d))
        self.down = Tensor(down, requires_grad=True)
        self.down_bias = Tensor(np.zeros(d), requires_grad=True)
        # Zero up-projection makes the fresh unit an exact identity.
        self.up = Tensor(np.zeros((d, hidden_dim)), requires_grad=True)
        self.up_bias = Tensor(np.zeros(hidden_dim), requires_grad=True)

    def forward(self, h: Tensor) -> Tensor:
        return bottleneck_forward(h, self)

    def tensors(self) -> dict[str, Tensor]:
        return {"down.w": self.down, "down.b": self.down_bias,
                "up.w": self.up, "up.b": self.up_bias}


def bottleneck_forward(h: Tensor, a: BottleneckAdapter) -> Tensor:
    if h.data.ndim != 2 or h.data.shape[1] != a.hidden_dim:
        raise ContractError(
            f"bottleneck adapter expects [seq x {a.hidden_dim}], got {h.data.shape}"
        )
    squeezed = gelu(matmul(h, a.down) + a.down_bias)
    return h + (matmul(squeezed, a.up) + a.up_bias)


class InvertibleAdapter:
    """Additive-coupling unit after the embedding layer, exactly invertible.

    Split columns into halves (e1, e2); forward computes y1 = e1 + F(e2),
    y2 = e2 + G(y1). Coupling maps are two-layer with zero-initialized
    output layers, so the fresh unit maps zero to zero and acts as the
    identity.
    """

    kind = "language"

    def __init__(self, name: str, hidden_dim: int,
                 coupling_dim: int | None = None, rng: Rng | None = None):
        if hidden_dim % 2 != 0:
            raise ContractError(
                f"invertible adapter needs an even hidden_dim, got {hidden_dim}"
            )
        self.name = name
        self.hidden_dim = hidden_dim
        half = hidden_dim // 2
        self.coupling_dim = max(1, hidden_dim // 8) if coupling_dim is None else coupling_dim
        c = self.coupling_dim
        self._maps: dict[str, dict[str, Tensor]] = {}
        for cname in ("F", "G"):
            w1 = rng.normal((half, c), INIT_STD) if rng else np.zeros((half, c))
            self._maps[cname] = {
                "w1": Tensor(w1, requires_grad=True),
                "b1": Tensor(np.zeros(c), requires_grad=True),
                "w2": Tensor(np.zeros((c, half)), requires_grad=True),
                "b2": Tensor(np.zeros(half), requires_grad=True),
            }

    def _apply(self, cname: str, x: Tensor) -> Tensor:
        m = self._maps[cname]
        return matmul(gelu(matmul(x, m["w1"]) + m["b1"]), m["w2"]) + m["b2"]

    def forward(self, e: Tensor) -> Tensor:
        return invertible_forward(e, self)

    def inverse(self, y: Tensor) -> Tensor:
        return invertible_inverse(y, self)

    def tensors(self) -> dict[str, Tensor]:
        return {f"inv.{cname}.{k}": t
                for cname, m in self._maps.items() for k, t in m.items()}


def _split_halves(x: Tensor, hidden_dim: int) -> tuple[Tensor, Tensor]:
    if x.data.ndim != 2 or x.data.shape[1] != hidden_dim:
        raise ContractError(
            f"invertible adapter expects [seq x {hidden_dim}], got {x.data.shape}"
        )
    half = hidden_dim // 2
    return x[:, 0:half], x[:, half:hidden_dim]


def invertible_forward(e: Tensor, a: InvertibleAdapter) -> Tensor:
    e1, e2 = _split_halves(e, a.hidden_dim)
    y1 = e1 + a._apply("F", e2)
    y2 = e2 + a._apply("G", y1)
    return concat([y1, y2], axis=1)


def invertible_inverse(y: Tensor, a: InvertibleAdapter) -> Tensor:
    y1, y2 = _split_halves(y, a.hidden_dim)
    e2 = y2 - a._apply("G", y1)
    e1 = y1 - a._apply("F", e2)
    return concat([e1, e2], axis=1)


class TaskAdapter:
    """Named set of task bottleneck units, one per occupied slot per block."""

    kind = "task"

    def __init__(self, name: str, hidden_dim: int, num_blocks: int,
                 placement: PlacementConfig | None = None,
                 bottleneck_dim: int | None = None, rng: Rng | None = None):
        if num_blocks < 1:
            raise ContractError("adapter sets need at least one block")
        self.name = name
        self.hidden_dim = hidden_dim
        self.num_blocks = num_blocks
        self.placement = placement or PlacementConfig()
        self.provenance: dict = {}
        self.blocks: list[dict[str, BottleneckAdapter]] = []
        for i in range(num_blocks):
            units = {}
            for slot in self.placement.slots:
                unit_rng = rng.child(f"{i}.{slot}") if rng else None
                units[slot] = BottleneckAdapter(
                    f"{name}.{i}.{slot}", self.kind, hidden_dim,
                    bottleneck_dim, unit_rng)
            self.blocks.append(units)
        self.bottleneck_dim = self.blocks[0][self.placement.slots[0]].bottleneck_dim

    def _prefix(self) -> str:
        return TASK_PREFIX

    def named_tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, units in enumerate(self.blocks):
            for slot, unit in units.items():
                for key, t in unit.tensors().items():
                    out[f"{self._prefix()}{i}.{slot}.{key}"] = t
        return out

    def units(self) -> list:
        return [unit for block in self.blocks for unit in block.values()]


class LanguageAdapter(TaskAdapter):
    """Task-adapter layout plus one invertible unit at the embedding slot."""

    kind = "language"

    def __init__(self, name: str, hidden_dim: int, num_blocks: int,
                 placement: PlacementConfig | None = None,
                 bottleneck_dim: int | None = None, rng: Rng | None = None,
                 coupling_dim: int | None = None):
        super().__init__(name, hidden_dim, num_blocks, placement,
                         bottleneck_dim, rng)
        inv_rng = rng.child("inv") if rng else None
        self.invertible = InvertibleAdapter(f"{name}.inv", hidden_dim,
                                            coupling_dim, inv_rng)

    def _prefix(self) -> str:
        return LANG_PREFIX

    def named_tensors(self) -> dict[str, Tensor]:
        out = super().named_tensors()
        for key, t in self.invertible.tensors().items():
            out[f"{self._prefix()}{key}"] = t
        return out

    def units(self) -> list:
        return [self.invertible] + super().units()


@dataclass
class AdapterStackSpec:
    """What to attach; when both are given, language feeds task in each slot."""

    language_adapter: LanguageAdapter | None = None
    task_adapter: TaskAdapter | None = None


def _check_fit(model: EncoderModel, adapter: TaskAdapter) -> None:
    cfg = model.config
    if adapter.hidden_dim != cfg.hidden_dim or adapter.num_blocks != cfg.num_blocks:
        raise ContractError(
            f"adapter {adapter.name!r} built for H={adapter.hidden_dim}, "
            f"L={adapter.num_blocks}; model has H={cfg.hidden_dim}, L={cfg.num_blocks}\n"
            f"adapter manifest: {adapter_manifest(adapter)}\n"
            f"model config: {cfg.to_dict()}"
        )


def _register(model: EncoderModel, adapter: TaskAdapter) -> None:
    named = adapter.named_tensors()
    for pname, tensor in named.items():
        model.params.add(pname, tensor)
    model.params.set_trainable(model.params.trainable_mask | set(named))


def attach(model: EncoderModel, stack: AdapterStackSpec,
           placement: PlacementConfig | None = None) -> None:
    """Populate the model's adapter slots and register adapter parameters.

    Within each occupied slot the language unit runs before the task unit
    regardless of attach order.
    """
    if stack.language_adapter is None and stack.task_adapter is None:
        raise ContractError("attach called with an empty stack")
    for role, adapter in (("language", stack.language_adapter),
                          ("task", stack.task_adapter)):
        if adapter is None:
            continue
        if adapter.kind != role:
            raise ContractError(
                f"{role} slot given a {adapter.kind} adapter ({adapter.name!r})"
            )
        if model.attached[role] is not None:
            raise ContractError(
                f"model already has a {role} adapter attached "
                f"({model.attached[role].name!r}); detach or swap instead"
            )
        if placement is not None and adapter.placement.scheme != placement.scheme:
            raise ContractError(
                f"adapter {adapter.name!r} uses scheme {adapter.placement.scheme!r}, "
                f"attach requested {placement.scheme!r}"
            )
        _check_fit(model, adapter)
        _register(model, adapter)
        for i, units in enumerate(adapter.blocks):
            for slot, unit in units.items():
                slot_list = model.block_slots[i][slot]
                if role == "language":
                    slot_list.insert(0, unit)
                else:
                    slot_list.append(unit)
        if role == "language":
            model.embed_slot.insert(0, adapter.invertible)
        model.attached[role] = adapter


def swap_language_adapter(model: EncoderModel, new_lang: LanguageAdapter) -> None:
    """Replace every language-kind unit (invertible included) in place.

    Task-adapter and backbone tensors are untouched: the new tensors are
    substituted under the same canonical names.
    """
    old = model.attached["language"]
    if old is None:
        raise ContractError("no language adapter attached; use attach first")
    if new_lang.kind != "language":
        raise ContractError(f"swap target {new_lang.name!r} is not a language adapter")
    if new_lang.placement.scheme != old.placement.scheme:
        raise ContractError(
            f"swap target uses scheme {new_lang.placement.scheme!r}, "
            f"attached adapter uses {old.placement.scheme!r}"
        )
    _check_fit(model, new_lang)
    old_named = old.named_tensors()
    new_named = new_lang.named_tensors()
    if set(old_named) != set(new_named):
        raise ContractError("swap target parameter names do not match attached adapter")
    for pname, tensor in new_named.items():
        model.params.replace(pname, tensor)
        tensor.requires_grad = pname in model.params.trainable_mask
    for i, units in enumerate(new_lang.blocks):
        for slot, unit in units.items():
            slot_list = model.block_slots[i][slot]
            slot_list[slot_list.index(old.blocks[i][slot])] = unit
    model.embed_slot[model.embed_slot.index(old.invertible)] = new_lang.invertible
    model.attached["language"] = new_lang


def count_params(obj) -> int:
    """Exact parameter count of a unit, adapter set, or stack."""
    if obj is None:
        return 0
    if isinstance(obj, AdapterStackSpec):
        return count_params(obj.language_adapter) + count_params(obj.task_adapter)
    if isinstance(obj, (TaskAdapter, LanguageAdapter)):
        return sum(t.data.size for t in obj.named_tensors().values())
    if isinstance(obj, (BottleneckAdapter, InvertibleAdapter)):
        return sum(t.data.size for t in obj.tensors().values())
    raise ContractError(f"count_params got unsupported object {type(obj).__name__}")


def adapter_manifest(adapter: TaskAdapter) -> dict:
    m = {
        "name": adapter.name,
        "kind": adapter.kind,
        "scheme": adapter.placement.scheme,
        "hidden_dim": adapter.hidden_dim,
        "bottleneck_dim": adapter.bottleneck_dim,
        "num_blocks": adapter.num_blocks,
    }
    if isinstance(adapter, LanguageAdapter):
        m["coupling_dim"] = adapter.invertible.coupling_dim
    m.update(adapter.provenance)
    return m


def save_adapter(path, adapter: TaskAdapter) -> None:
    """Write the unit's parameter container plus a JSON manifest sidecar."""
    path = Path(path)
    save_params(path, {name: t.data for name, t in adapter.named_tensors().items()})
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(adapter_manifest(adapter), indent=2, sort_keys=True))


def load_adapter(path) -> TaskAdapter:
    path = Path(path)
    sidecar = path.with_name(path.name + ".json")
    if not sidecar.exists():
        raise ManifestError(f"missing adapter manifest {sidecar}")
    manifest = json.loads(sidecar.read_text())
    for field in ("name", "kind", "scheme", "hidden_dim", "bottleneck_dim", "num_blocks"):
        if field not in manifest:
            raise ManifestError(f"adapter manifest {sidecar} lacks {field!r}")
    kind = manifest["kind"]
    common = dict(name=manifest["name"], hidden_dim=manifest["hidden_dim"],
                  num_blocks=manifest["num_blocks"],
                  placement=PlacementConfig(manifest["scheme"]),
                  bottleneck_dim=manifest["bottleneck_dim"])
    if kind == "task":
        adapter = TaskAdapter(**common)
    elif kind == "language":
        adapter = LanguageAdapter(**common, coupling_dim=manifest.get("coupling_dim"))
    else:
        raise ManifestError(f"unknown adapter kind {kind!r} in {sidecar}")
    adapter.provenance = {k: v for k, v in manifest.items()
                          if k not in ("name", "kind", "scheme", "hidden_dim",
                                       "bottleneck_dim", "num_blocks", "coupling_dim")}
    named = adapter.named_tensors()
    loaded = load_params(path)
    if set(loaded) != set(named):
        missing = sorted(set(named) - set(loaded))
        extra = sorted(set(loaded) - set(named))
        raise ManifestError(
            f"adapter container {path} does not match manifest layout "
            f"(missing {missing}, unexpected {extra})"
        )
    for pname, tensor in named.items():
        if loaded[pname].shape != tensor.data.shape:
            raise ManifestError(
                f"entry {pname!r} has shape {loaded[pname].shape}, "
                f"manifest implies {tensor.data.shape}"
            )
        tensor.data = loaded[pname]
    return adapter


@dataclass(frozen=True)
class FreezePolicy:
    """Maps an experimental setup to the set of trainable parameter names.

    The QA head stays trainable in every setup except D_transfer, where
    nothing trains (zero-shot evaluation only). The internal "mlm" policy
    trains just the language adapter during masked-language-model runs.
    """

    setup: str

    def __post_init__(self):
        if self.setup not in SETUPS:
            raise ContractError(
                f"unknown setup {self.setup!r}; expected one of {SETUPS}"
            )

    def trainable_names(self, store) -> list[str]:
        if self.setup == "A":
            return store.names()
        if self.setup == "B":
            return store.names_with_prefix(TASK_PREFIX, QA_PREFIX)
        if self.setup == "C_lang":
            return store.names_with_prefix(LANG_PREFIX, QA_PREFIX)
        if self.setup in ("C_stack", "D_train"):
            return store.names_with_prefix(TASK_PREFIX, QA_PREFIX)
        if self.setup == "mlm":
            return store.names_with_prefix(LANG_PREFIX)
        return []

    def frozen_names(self, store) -> list[str]:
        trainable = set(self.trainable_names(store))
        return [n for n in store.names() if n not in trainable]


def apply_freeze(store, policy: FreezePolicy) -> list[str]:
    names = policy.trainable_names(store)
    store.set_trainable(names)
    return names
