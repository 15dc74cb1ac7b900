"""Synthetic bilingual QA corpora for desk-scale transfer experiments.

Every language renders the same abstract (entity, relation, value) facts;
surfaces differ by a per-language permutation of the letters a-z applied
character-wise. The permutation preserves token lengths, so answer char
offsets are identical across languages, and digits and punctuation are
shared, giving the model cross-lingual anchor tokens. Translating corpus
A with the A->B letter mapping reproduces corpus B exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .data import QAExample, serialize_squad
from .errors import ContractError
from .rng import Rng

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass
class SynthSpec:
    languages: list[str] = field(
        default_factory=lambda: ["synthetic-a", "synthetic-b", "synthetic-c"])
    n_train: int = 120
    n_test: int = 40
    n_unlabeled: int = 300
    n_entities: int = 30
    n_relations: int = 10
    n_values: int = 40
    numeric_fraction: float = 0.25
    facts_per_context: int = 4
    seed: int = 0

    def __post_init__(self):
        if len(set(self.languages)) != len(self.languages) or not self.languages:
            raise ContractError("languages must be non-empty and distinct")
        for count in ("n_train", "n_test", "n_unlabeled"):
            if getattr(self, count) < 0:
                raise ContractError(f"SynthSpec.{count} must be >= 0")
        for extent in ("n_entities", "n_relations", "n_values"):
            if getattr(self, extent) < 1:
                raise ContractError(f"SynthSpec.{extent} must be >= 1")
        if not 0.0 <= self.numeric_fraction <= 1.0:
            raise ContractError("numeric_fraction must lie in [0, 1]")
        if self.facts_per_context < 1:
            raise ContractError("facts_per_context must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)


@dataclass
class SynthCorpus:
    language: str
    train: list[QAExample]
    test: list[QAExample]
    unlabeled: list[str]


def language_bijection(seed: int, language: str) -> dict[str, str]:
    """Deterministic letter permutation for one language."""
    perm = Rng(seed).child(f"bijection.{language}").permutation(26)
    return {_LETTERS[i]: _LETTERS[int(perm[i])] for i in range(26)}


def cross_bijection(seed: int, lang_a: str, lang_b: str) -> dict[str, str]:
    """Letter mapping that carries lang_a surface onto lang_b surface."""
    to_a = language_bijection(seed, lang_a)
    to_b = language_bijection(seed, lang_b)
    from_a = {v: k for k, v in to_a.items()}
    return {ch: to_b[from_a[ch]] for ch in _LETTERS}


def apply_bijection(text: str, mapping: dict[str, str]) -> str:
    return "".join(mapping.get(ch, ch) for ch in text)


def translate_example(ex: QAExample, mapping: dict[str, str],
                      new_language: str) -> QAExample:
    """Map surface text between bijection-paired languages.

    Offsets survive unchanged because the mapping is length-preserving.
    The id's language prefix (up to the first ':') is retagged.
    """
    _, _, rest = ex.id.partition(":")
    return QAExample(
        id=f"{new_language}:{rest}",
        language=new_language,
        question=apply_bijection(ex.question, mapping),
        context=apply_bijection(ex.context, mapping),
        answers=[{"text": apply_bijection(a["text"], mapping),
                  "answer_start": a["answer_start"]} for a in ex.answers],
    )


def _new_word(rng: Rng, used: set[str]) -> str:
    while True:
        length = rng.integers(3, 8)
        word = "".join(_LETTERS[rng.integers(0, 26)] for _ in range(length))
        if word not in used:
            used.add(word)
            return word


def _new_number(rng: Rng, used: set[str]) -> str:
    while True:
        length = rng.integers(2, 5)
        digits = str(rng.integers(1, 10)) + "".join(
            str(rng.integers(0, 10)) for _ in range(length - 1))
        if digits not in used:
            used.add(digits)
            return digits


def _build_world(spec: SynthSpec, rng: Rng):
    used: set[str] = set()
    entities = [_new_word(rng, used) for _ in range(spec.n_entities)]
    relations = [_new_word(rng, used) for _ in range(spec.n_relations)]
    n_numeric = round(spec.n_values * spec.numeric_fraction)
    values = [_new_number(rng, used) for _ in range(n_numeric)]
    values += [_new_word(rng, used) for _ in range(spec.n_values - n_numeric)]
    facts = {(e, r): rng.choice(values) for e in entities for r in relations}
    return entities, relations, facts


def _render_context(pairs, facts) -> tuple[str, list[int]]:
    """Join fact sentences; return the context and each value's char offset."""
    parts = []
    offsets = []
    pos = 0
    for e, r in pairs:
        v = facts[(e, r)]
        offsets.append(pos + len(e) + len(r) + 2)
        sentence = f"{e} {r} {v} ."
        parts.append(sentence)
        pos += len(sentence) + 1
    return " ".join(parts), offsets


def _abstract_examples(spec: SynthSpec, rng: Rng, count: int, split: str,
                       entities, relations, facts) -> list[QAExample]:
    """Base-surface examples; per-language corpora are translations."""
    examples = []
    all_pairs = [(e, r) for e in entities for r in relations]
    for i in range(count):
        k = rng.integers(1, spec.facts_per_context + 1) if spec.facts_per_context > 1 else 1
        chosen = [all_pairs[j] for j in
                  rng.permutation(len(all_pairs))[:k]]
        context, value_offsets = _render_context(chosen, facts)
        target = rng.integers(0, k)
        e, r = chosen[target]
        answer = facts[(e, r)]
        examples.append(QAExample(
            id=f"base:{split}:{i:05d}",
            language="base",
            question=f"{r} {e} ?",
            context=context,
            answers=[{"text": answer, "answer_start": value_offsets[target]}],
        ))
    return examples


def _abstract_lines(spec: SynthSpec, rng: Rng, entities, relations,
                    facts) -> list[str]:
    all_pairs = [(e, r) for e in entities for r in relations]
    lines = []
    for _ in range(spec.n_unlabeled):
        k = rng.integers(1, max(2, spec.facts_per_context + 2))
        chosen = [all_pairs[j] for j in rng.permutation(len(all_pairs))[:k]]
        lines.append(_render_context(chosen, facts)[0])
    return lines


def generate_corpus(spec: SynthSpec) -> dict[str, SynthCorpus]:
    """Deterministic per-language corpora sharing one abstract fact world."""
    rng = Rng(spec.seed).child("synth")
    entities, relations, facts = _build_world(spec, rng.child("world"))
    base_train = _abstract_examples(spec, rng.child("train"), spec.n_train,
                                    "train", entities, relations, facts)
    base_test = _abstract_examples(spec, rng.child("test"), spec.n_test,
                                   "test", entities, relations, facts)
    base_lines = _abstract_lines(spec, rng.child("unlabeled"), entities,
                                 relations, facts)
    corpora = {}
    for lang in spec.languages:
        mapping = language_bijection(spec.seed, lang)
        corpora[lang] = SynthCorpus(
            language=lang,
            train=[translate_example(ex, mapping, lang) for ex in base_train],
            test=[translate_example(ex, mapping, lang) for ex in base_test],
            unlabeled=[apply_bijection(line, mapping) for line in base_lines],
        )
    return corpora


def write_corpus(corpora: dict[str, SynthCorpus], out_dir,
                 spec: SynthSpec | None = None) -> list[Path]:
    """Write per-language SQuAD-format train/test JSON and unlabeled text."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def dump(path: Path, obj) -> None:
        path.write_text(json.dumps(obj, ensure_ascii=False, sort_keys=True,
                                   indent=2) + "\n", encoding="utf-8")
        written.append(path)

    for lang, corpus in corpora.items():
        dump(out_dir / f"{lang}.train.json", serialize_squad(corpus.train, lang))
        dump(out_dir / f"{lang}.test.json", serialize_squad(corpus.test, lang))
        text_path = out_dir / f"{lang}.unlabeled.txt"
        text_path.write_text("\n".join(corpus.unlabeled) + "\n", encoding="utf-8")
        written.append(text_path)
    if spec is not None:
        dump(out_dir / "synth-spec.json", spec.to_dict())
    return written
