"""Extractive QA span head: per-position start/end logits, loss, decoding.

Question and context are packed as one sequence; only context positions
(mask True) are valid span endpoints. Non-context logits are pushed to
-1e30 before any softmax, which underflows to exactly zero probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import INIT_STD, MASK_BIAS
from .errors import ContractError
from .params import ParamStore
from .rng import Rng
from .tensor import Tensor, log_softmax, matmul

MAX_ANSWER_LEN = 30


@dataclass
class SpanPrediction:
    start_idx: int
    end_idx: int
    score: float
    answer_text: str = field(default="")


def init_qa_head(store: ParamStore, hidden_dim: int, rng: Rng) -> None:
    store.add("qa_head.w", Tensor(rng.normal((hidden_dim, 2), INIT_STD),
                                  requires_grad=True))
    store.add("qa_head.b", Tensor(np.zeros(2), requires_grad=True))
    store.set_trainable(store.trainable_mask | {"qa_head.w", "qa_head.b"})


def qa_logits(hidden: Tensor, store: ParamStore) -> Tensor:
    """Project hidden states [seq x H] to (start, end) logits [seq x 2]."""
    return matmul(hidden, store["qa_head.w"]) + store["qa_head.b"]


def _as_mask(context_mask, seq_len: int) -> np.ndarray:
    mask = np.asarray(context_mask, dtype=bool)
    if mask.shape != (seq_len,):
        raise ContractError(
            f"context_mask shape {mask.shape} does not match seq {seq_len}"
        )
    if not mask.any():
        raise ContractError("context_mask selects no positions")
    return mask


def span_loss(logits: Tensor, gold_start: int, gold_end: int,
              context_mask) -> Tensor:
    """Mean cross-entropy of the start and end distributions over context."""
    seq_len = logits.data.shape[0]
    mask = _as_mask(context_mask, seq_len)
    if not (0 <= gold_start <= gold_end < seq_len):
        raise ContractError(
            f"gold span ({gold_start}, {gold_end}) out of order or range for seq {seq_len}"
        )
    if not (mask[gold_start] and mask[gold_end]):
        raise ContractError(
            f"gold span ({gold_start}, {gold_end}) lies outside the context mask"
        )
    bias = Tensor(np.where(mask, 0.0, MASK_BIAS))
    start_lp = log_softmax(logits[:, 0] + bias)
    end_lp = log_softmax(logits[:, 1] + bias)
    return (-start_lp[gold_start] - end_lp[gold_end]) * 0.5


def decode_span(logits, context_mask, max_answer_len: int = MAX_ANSWER_LEN) -> SpanPrediction:
    """Best (start, end) with start <= end, span shorter than max_answer_len,
    both endpoints in context. Ties break toward the smallest start, then end.
    """
    arr = np.asarray(getattr(logits, "data", logits), dtype=float)
    seq_len = arr.shape[0]
    mask = _as_mask(context_mask, seq_len)
    start_logits, end_logits = arr[:, 0], arr[:, 1]
    best: SpanPrediction | None = None
    for i in range(seq_len):
        if not mask[i]:
            continue
        for j in range(i, min(seq_len, i + max_answer_len)):
            if not mask[j]:
                continue
            score = start_logits[i] + end_logits[j]
            if best is None or score > best.score:
                best = SpanPrediction(i, j, float(score))
    return best


def extract_answer_text(pred: SpanPrediction, feature) -> str:
    """Recover the raw context substring spanned by the predicted tokens."""
    offsets = feature.char_offsets
    start = offsets[pred.start_idx]
    end = offsets[pred.end_idx]
    if start is None or end is None:
        raise ContractError(
            f"span ({pred.start_idx}, {pred.end_idx}) covers positions without "
            "character offsets (non-context tokens)"
        )
    return feature.context[start[0]:end[1]]


def predict_answer(model, feature, max_answer_len: int = MAX_ANSWER_LEN) -> SpanPrediction:
    """Eval-mode forward + decode + text extraction for one feature."""
    hidden = model.encode(feature.token_ids)
    logits = qa_logits(hidden, model.params)
    pred = decode_span(logits.data, feature.context_mask, max_answer_len)
    pred.answer_text = extract_answer_text(pred, feature)
    return pred
