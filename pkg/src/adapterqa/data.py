"""QA data pipeline: SQuAD v1.1 ingestion, split construction, tokenization,
answer-span alignment, vocabulary, and masked-language-model corruption.

The tokenizer is character-exact: whitespace- and punctuation-delimited
units for spaced scripts, one token per codepoint inside CJK runs, and
offsets that tile the non-whitespace input. No subword machinery.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError
from .rng import Rng

RESERVED_SYMBOLS = ("<pad>", "<unk>", "<sep>", "<mask>")
PAD_ID, UNK_ID, SEP_ID, MASK_ID = 0, 1, 2, 3
NUM_RESERVED = len(RESERVED_SYMBOLS)

# Reference split sizes (train, test) per language for the real
# XQuAD+MLQA construction. Mismatches are reported, never fatal: they
# depend on the exact dataset release.
REFERENCE_SPLIT_SIZES = {
    "hi": (6854, 507),
    "de": (5707, 512),
    "es": (6443, 500),
    "ar": (6525, 517),
    "zh": (6327, 504),
    "vi": (6685, 511),
    "en": (12780, 1148),
}


@dataclass
class QAExample:
    id: str
    language: str
    question: str
    context: str
    answers: list[dict]

    def __post_init__(self):
        for ans in self.answers:
            start = ans["answer_start"]
            text = ans["text"]
            if self.context[start:start + len(text)] != text:
                raise DataError(
                    f"example {self.id!r}: answer {text!r} not found at offset {start}"
                )


@dataclass
class TokenizedFeature:
    """One packed [question; <sep>; context] sequence.

    char_offsets holds (start, end) into the original context string for
    context positions and None elsewhere; gold_span is None when the gold
    answer does not align to token boundaries (or was truncated away).
    """

    example: QAExample
    token_ids: np.ndarray
    char_offsets: list
    context_mask: np.ndarray
    gold_span: tuple[int, int] | None

    @property
    def context(self) -> str:
        return self.example.context

    @property
    def example_id(self) -> str:
        return self.example.id


@dataclass
class DatasetSplit:
    train: list[QAExample]
    test: list[QAExample]
    provenance: list[dict] = field(default_factory=list)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return (0x4E00 <= cp <= 0x9FFF or 0x3400 <= cp <= 0x4DBF
            or 0xF900 <= cp <= 0xFAFF or 0x20000 <= cp <= 0x2A6DF)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("P", "S")


def segment(text: str) -> list[tuple[str, int, int]]:
    """Split text into (token, char_start, char_end) units.

    Whitespace separates and is never part of a token; punctuation and
    CJK codepoints form single-character tokens; everything else grows a
    word. Offsets exactly tile the non-whitespace input.
    """
    tokens: list[tuple[str, int, int]] = []
    word_start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if word_start is not None:
                tokens.append((text[word_start:i], word_start, i))
                word_start = None
        elif _is_cjk(ch) or _is_punct(ch):
            if word_start is not None:
                tokens.append((text[word_start:i], word_start, i))
                word_start = None
            tokens.append((ch, i, i + 1))
        else:
            if word_start is None:
                word_start = i
    if word_start is not None:
        tokens.append((text[word_start:], word_start, len(text)))
    return tokens


class Vocab:
    """Dense symbol table with four fixed reserved ids (pad=0, unk=1,
    sep=2, mask=3)."""

    def __init__(self, symbols: list[str]):
        self._ids: dict[str, int] = {s: i for i, s in enumerate(RESERVED_SYMBOLS)}
        for sym in symbols:
            if sym in self._ids:
                raise DataError(f"duplicate or reserved symbol {sym!r} in vocab")
            self._ids[sym] = len(self._ids)
        self._symbols = list(self._ids)

    @classmethod
    def build(cls, texts, max_size: int = 2000) -> "Vocab":
        if max_size <= NUM_RESERVED:
            raise ContractError(f"max_size must exceed {NUM_RESERVED}")
        counts = Counter(tok for text in texts for tok, _, _ in segment(text))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls([sym for sym, _ in ranked[:max_size - NUM_RESERVED]])

    def __len__(self) -> int:
        return len(self._symbols)

    def id(self, symbol: str) -> int:
        return self._ids.get(symbol, UNK_ID)

    def symbol(self, idx: int) -> str:
        return self._symbols[idx]

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._ids

    def to_list(self) -> list[str]:
        return self._symbols[NUM_RESERVED:]

    @classmethod
    def from_list(cls, symbols: list[str]) -> "Vocab":
        return cls(symbols)


def tokenize(text: str, vocab: Vocab) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Segment and map to ids; unknown symbols map to the unknown id."""
    pieces = segment(text)
    ids = np.array([vocab.id(tok) for tok, _, _ in pieces], dtype=np.intp)
    return ids, [(s, e) for _, s, e in pieces]


def align_answer_span(feature: TokenizedFeature, char_start: int,
                      char_end: int) -> tuple[int, int] | None:
    """Smallest token interval covering [char_start, char_end), or None
    when extraction from token boundaries would change the answer string."""
    if char_end <= char_start:
        return None
    covering = [i for i, off in enumerate(feature.char_offsets)
                if off is not None and off[1] > char_start and off[0] < char_end]
    if not covering:
        return None
    tok_start, tok_end = covering[0], covering[-1]
    extracted = feature.context[feature.char_offsets[tok_start][0]:
                                feature.char_offsets[tok_end][1]]
    if extracted != feature.context[char_start:char_end]:
        return None
    return tok_start, tok_end


def featurize(example: QAExample, vocab: Vocab,
              max_seq_len: int = 256) -> TokenizedFeature:
    """Pack [question; <sep>; context], truncating the context (and, if it
    alone overflows, the question) to fit max_seq_len."""
    q_ids, _ = tokenize(example.question, vocab)
    c_ids, c_offsets = tokenize(example.context, vocab)
    q_ids = q_ids[:max(1, max_seq_len // 2 - 1)]
    context_budget = max_seq_len - 1 - q_ids.size
    c_ids, c_offsets = c_ids[:context_budget], c_offsets[:context_budget]
    if c_ids.size == 0:
        raise DataError(f"example {example.id!r}: no context tokens fit")
    token_ids = np.concatenate([q_ids, [SEP_ID], c_ids]).astype(np.intp)
    offsets = [None] * (q_ids.size + 1) + c_offsets
    mask = np.zeros(token_ids.size, dtype=bool)
    mask[q_ids.size + 1:] = True
    feature = TokenizedFeature(example, token_ids, offsets, mask, None)
    if example.answers:
        ans = example.answers[0]
        start = ans["answer_start"]
        feature.gold_span = align_answer_span(feature, start, start + len(ans["text"]))
    return feature


def _expect(node, key, kind, path: str):
    if not isinstance(node, dict) or key not in node:
        raise DataError(f"schema violation at {path}: missing {key!r}")
    value = node[key]
    if not isinstance(value, kind):
        raise DataError(
            f"schema violation at {path}.{key}: expected {kind.__name__}, "
            f"got {type(value).__name__}"
        )
    return value


def parse_squad_json(raw, language: str = "und") -> list[QAExample]:
    """Parse the SQuAD v1.1 schema into validated examples.

    Offset mismatches and duplicate ids raise with the example id; schema
    violations raise with the JSON path.
    """
    if isinstance(raw, (bytes, bytearray)):
        raw = raw.decode("utf-8")
    if isinstance(raw, str):
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid JSON: {exc}") from exc
    else:
        doc = raw
    examples: list[QAExample] = []
    seen: set[str] = set()
    data = _expect(doc, "data", list, "$")
    for di, item in enumerate(data):
        paragraphs = _expect(item, "paragraphs", list, f"$.data[{di}]")
        for pi, para in enumerate(paragraphs):
            ppath = f"$.data[{di}].paragraphs[{pi}]"
            context = _expect(para, "context", str, ppath)
            for qi, qa in enumerate(_expect(para, "qas", list, ppath)):
                qpath = f"{ppath}.qas[{qi}]"
                qid = _expect(qa, "id", (str, int), qpath)
                qid = str(qid)
                question = _expect(qa, "question", str, qpath)
                answers = _expect(qa, "answers", list, qpath)
                parsed_answers = []
                for ai, ans in enumerate(answers):
                    apath = f"{qpath}.answers[{ai}]"
                    parsed_answers.append({
                        "text": _expect(ans, "text", str, apath),
                        "answer_start": _expect(ans, "answer_start", int, apath),
                    })
                if qid in seen:
                    raise DataError(f"duplicate example id {qid!r}")
                seen.add(qid)
                examples.append(QAExample(qid, language, question, context,
                                          parsed_answers))
    return examples


def serialize_squad(examples: list[QAExample], title: str = "") -> dict:
    """Inverse of parse_squad_json: one paragraph per example."""
    return {
        "version": "1.1",
        "data": [{
            "title": title,
            "paragraphs": [{
                "context": ex.context,
                "qas": [{
                    "id": ex.id,
                    "question": ex.question,
                    "answers": [dict(a) for a in ex.answers],
                }],
            } for ex in examples],
        }],
    }


def _check_unique(examples: list[QAExample], split_name: str) -> set[str]:
    ids = [ex.id for ex in examples]
    dupes = sorted({i for i, n in Counter(ids).items() if n > 1})
    if dupes:
        raise DataError(f"duplicate ids within {split_name}: {dupes[:10]}")
    return set(ids)


def build_split(xquad_test: list[QAExample], mlqa_test: list[QAExample],
                mlqa_dev: list[QAExample]) -> DatasetSplit:
    """Train = XQuAD test + MLQA test; test = MLQA dev."""
    languages = {ex.language for source in (xquad_test, mlqa_test, mlqa_dev)
                 for ex in source}
    if len(languages) > 1:
        raise DataError(f"mixed languages in split inputs: {sorted(languages)}")
    train = list(xquad_test) + list(mlqa_test)
    test = list(mlqa_dev)
    train_ids = _check_unique(train, "train")
    test_ids = _check_unique(test, "test")
    overlap = sorted(train_ids & test_ids)
    if overlap:
        raise DataError(f"ids appear in both train and test: {overlap[:10]}")
    provenance = [
        {"source": "xquad_test", "count": len(xquad_test)},
        {"source": "mlqa_test", "count": len(mlqa_test)},
        {"source": "mlqa_dev", "count": len(mlqa_dev)},
    ]
    return DatasetSplit(train, test, provenance)


def compare_split_sizes(split: DatasetSplit, language: str) -> dict | None:
    """Report actual vs reference sizes; None when no reference exists."""
    if language not in REFERENCE_SPLIT_SIZES:
        return None
    exp_train, exp_test = REFERENCE_SPLIT_SIZES[language]
    return {
        "language": language,
        "expected": {"train": exp_train, "test": exp_test},
        "actual": {"train": len(split.train), "test": len(split.test)},
        "match": len(split.train) == exp_train and len(split.test) == exp_test,
    }


def mlm_mask(token_ids, rng: Rng, mask_rate: float,
             vocab_size: int) -> tuple[np.ndarray, np.ndarray]:
    """BERT-style corruption: select non-reserved positions with prob
    mask_rate; of those, 80% become <mask>, 10% a random non-reserved id,
    10% stay. Returns (corrupted ids, labels) with labels -1 where unselected.
    """
    if not 0.0 <= mask_rate <= 1.0:
        raise ContractError("mask_rate must lie in [0, 1]")
    if vocab_size <= NUM_RESERVED:
        raise ContractError(f"vocab_size must exceed {NUM_RESERVED}")
    ids = np.asarray(token_ids, dtype=np.intp)
    corrupted = ids.copy()
    labels = np.full(ids.shape, -1, dtype=np.intp)
    for pos in range(ids.size):
        if ids[pos] < NUM_RESERVED:
            continue
        if rng.uniform() >= mask_rate:
            continue
        labels[pos] = ids[pos]
        u = rng.uniform()
        if u < 0.8:
            corrupted[pos] = MASK_ID
        elif u < 0.9:
            corrupted[pos] = rng.integers(NUM_RESERVED, vocab_size)
    return corrupted, labels
