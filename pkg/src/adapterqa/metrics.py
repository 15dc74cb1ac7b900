"""The four evaluation metrics: token F1, exact match, Jaccard, WER.

One normalizer feeds all four (lowercase, strip punctuation, drop English
articles, collapse whitespace, CJK per-character tokens), so their values
are directly comparable. F1 uses multiset overlap; Jaccard uses plain
sets; WER is word-level Levenshtein with the gold as reference and can
exceed 1.0 when the prediction is longer than the gold.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field

from .data import _is_punct, segment
from .errors import ContractError

log = logging.getLogger(__name__)

_ARTICLES = re.compile(r"\b(a|an|the)\b")


def normalize_answer(s: str) -> list[str]:
    s = "".join(ch for ch in s.lower() if not _is_punct(ch))
    s = _ARTICLES.sub(" ", s)
    s = " ".join(s.split())
    return [tok for tok, _, _ in segment(s)]


def _require_golds(golds) -> list[str]:
    golds = list(golds)
    if not golds:
        raise ContractError("metric called with no gold answers")
    return golds


def exact_match(pred: str, golds) -> int:
    pred_toks = normalize_answer(pred)
    return int(any(pred_toks == normalize_answer(g) for g in _require_golds(golds)))


def _f1_one(pred_toks: list[str], gold_toks: list[str]) -> float:
    if not pred_toks or not gold_toks:
        return float(pred_toks == gold_toks)
    overlap = sum((Counter(pred_toks) & Counter(gold_toks)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_toks)
    recall = overlap / len(gold_toks)
    return 2 * precision * recall / (precision + recall)


def token_f1(pred: str, golds) -> float:
    pred_toks = normalize_answer(pred)
    return max(_f1_one(pred_toks, normalize_answer(g)) for g in _require_golds(golds))


def jaccard(pred: str, golds) -> float:
    pred_set = set(normalize_answer(pred))
    best = 0.0
    for g in _require_golds(golds):
        gold_set = set(normalize_answer(g))
        if not pred_set and not gold_set:
            best = max(best, 1.0)
        elif pred_set | gold_set:
            best = max(best, len(pred_set & gold_set) / len(pred_set | gold_set))
    return best


def _levenshtein(a: list[str], b: list[str]) -> int:
    # plain lists: answer spans are short, so row reuse beats array overhead
    prev = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        cur = [i]
        for j, tok_b in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (tok_a != tok_b)))
        prev = cur
    return prev[-1]


def wer(pred: str, golds) -> float:
    """Word error rate against the closest gold; gold length is the
    denominator, so values above 1.0 are possible."""
    pred_toks = normalize_answer(pred)
    gold_tok_lists = [normalize_answer(g) for g in _require_golds(golds)]
    if not pred_toks and any(not g for g in gold_tok_lists):
        # empty prediction exactly matches an empty reference: zero errors
        return 0.0
    nonempty = [g for g in gold_tok_lists if g]
    if not nonempty:
        log.warning("all gold answers normalize to empty; WER forced to 1")
        return 1.0
    return min(_levenshtein(pred_toks, g) / len(g) for g in nonempty)


@dataclass
class ExampleScore:
    example_id: str
    f1: float
    em: int
    jaccard: float
    wer: float
    prediction: str

    def to_dict(self) -> dict:
        return {"example_id": self.example_id, "f1": self.f1, "em": self.em,
                "jaccard": self.jaccard, "wer": self.wer,
                "prediction": self.prediction}


def score_example(example_id: str, pred: str, golds) -> ExampleScore:
    return ExampleScore(example_id, token_f1(pred, golds), exact_match(pred, golds),
                        jaccard(pred, golds), wer(pred, golds), pred)


@dataclass
class EvalReport:
    """Aggregated percentages plus the per-example breakdown."""

    language: str
    n_examples: int
    f1: float
    em: float
    jaccard: float
    wer: float
    per_example: list[ExampleScore] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "language": self.language,
            "n_examples": self.n_examples,
            "f1": self.f1,
            "em": self.em,
            "jaccard": self.jaccard,
            "wer": self.wer,
            "provenance": self.provenance,
            "per_example": [s.to_dict() for s in self.per_example],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        scores = [ExampleScore(s["example_id"], s["f1"], s["em"], s["jaccard"],
                               s["wer"], s["prediction"])
                  for s in d.get("per_example", [])]
        return cls(d["language"], d["n_examples"], d["f1"], d["em"],
                   d["jaccard"], d["wer"], scores, d.get("provenance", {}))


def aggregate(scores: list[ExampleScore], language: str,
              provenance: dict | None = None) -> EvalReport:
    if not scores:
        raise ContractError("aggregate requires at least one example score")
    n = len(scores)
    return EvalReport(
        language=language,
        n_examples=n,
        f1=100.0 * sum(s.f1 for s in scores) / n,
        em=100.0 * sum(s.em for s in scores) / n,
        jaccard=100.0 * sum(s.jaccard for s in scores) / n,
        wer=100.0 * sum(s.wer for s in scores) / n,
        per_example=scores,
        provenance=provenance or {},
    )
