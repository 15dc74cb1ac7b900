"""Training and evaluation loops for span QA and masked-language modeling.

Loops are deterministic given (config, seed): batch order, dropout, and
MLM corruption all draw from named child streams of one seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .adapters import FreezePolicy, apply_freeze
from .data import Vocab, mlm_mask, segment
from .errors import ContractError, DataError
from .metrics import aggregate, score_example
from .optim import Adam
from .qa import MAX_ANSWER_LEN, predict_answer, qa_logits, span_loss
from .rng import Rng
from .tensor import Tensor, log_softmax, matmul, no_grad, tmean, transpose

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 3e-4
    epochs: int = 5
    batch_size: int = 8
    seed: int = 0
    max_steps: int | None = None


def _mean_loss(losses: list[Tensor]) -> Tensor:
    total = losses[0]
    for loss in losses[1:]:
        total = total + loss
    return total * (1.0 / len(losses))


def train_qa(model, features, policy: FreezePolicy, config: TrainConfig) -> dict:
    """Optimize span loss under the policy's freeze mask.

    Features without an aligned gold span are skipped (counted, logged).
    Returns per-epoch mean losses and the total step count.
    """
    trainable = apply_freeze(model.params, policy)
    if not trainable:
        raise ContractError(f"policy {policy.setup} leaves nothing trainable")
    usable = [f for f in features if f.gold_span is not None]
    skipped = len(features) - len(usable)
    if skipped:
        log.info("skipping %d unalignable training features", skipped)
    if not usable:
        raise DataError("no trainable features: every gold span is unalignable")
    opt = Adam(model.params, lr=config.lr)
    batch_rng = Rng(config.seed).child("batches")
    dropout_rng = Rng(config.seed).child("dropout")
    history = {"epoch_loss": [], "steps": 0, "skipped_features": skipped}
    for _ in range(config.epochs):
        order = list(usable)
        batch_rng.shuffle(order)
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            opt.zero_grad()
            losses = []
            for f in batch:
                hidden = model.encode(f.token_ids, training=True, rng=dropout_rng)
                logits = qa_logits(hidden, model.params)
                gold_start, gold_end = f.gold_span
                losses.append(span_loss(logits, gold_start, gold_end,
                                        f.context_mask))
            loss = _mean_loss(losses)
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.data))
            history["steps"] += 1
            if config.max_steps and history["steps"] >= config.max_steps:
                break
        history["epoch_loss"].append(float(np.mean(epoch_losses)))
        if config.max_steps and history["steps"] >= config.max_steps:
            break
    return history


def evaluate_qa(model, features, language: str, provenance: dict | None = None,
                max_answer_len: int = MAX_ANSWER_LEN):
    """Eval-mode predictions and aggregated metrics over all features."""
    scores = []
    predictions: dict[str, str] = {}
    for f in features:
        pred = predict_answer(model, f, max_answer_len)
        golds = [a["text"] for a in f.example.answers]
        scores.append(score_example(f.example_id, pred.answer_text, golds))
        predictions[f.example_id] = pred.answer_text
    return aggregate(scores, language, provenance), predictions


def mlm_logits(model, hidden: Tensor) -> Tensor:
    """Tied-embedding vocabulary logits.

    When a language adapter is attached, its invertible unit's inverse is
    applied first, mapping hidden states back toward the shared embedding
    space before the tied projection.
    """
    lang = model.attached["language"]
    if lang is not None:
        hidden = lang.invertible.inverse(hidden)
    return matmul(hidden, transpose(model.params["embed.token"]))


def mlm_example_loss(model, corrupted_ids, labels) -> Tensor | None:
    """Mean negative log-likelihood at corrupted positions; None if none."""
    positions = np.nonzero(labels >= 0)[0]
    if positions.size == 0:
        return None
    hidden = model.encode(corrupted_ids)
    lsm = log_softmax(mlm_logits(model, hidden), axis=-1)
    picked = lsm[(positions, labels[positions])]
    return -tmean(picked)


def lines_to_sequences(lines, vocab: Vocab, max_seq_len: int) -> list[np.ndarray]:
    seqs = []
    for line in lines:
        ids = np.array([vocab.id(tok) for tok, _, _ in segment(line)],
                       dtype=np.intp)
        if ids.size:
            seqs.append(ids[:max_seq_len])
    return seqs


def _heldout_loss(model, seqs, mask_rate: float, vocab_size: int,
                  seed: int) -> float:
    """MLM loss on held-out sequences under a fixed corruption stream,
    so before/after values are comparable."""
    rng = Rng(seed).child("heldout-mask")
    losses = []
    with no_grad():
        for ids in seqs:
            corrupted, labels = mlm_mask(ids, rng, mask_rate, vocab_size)
            loss = mlm_example_loss(model, corrupted, labels)
            if loss is not None:
                losses.append(float(loss.data))
    if not losses:
        raise DataError("held-out MLM split produced no maskable positions")
    return float(np.mean(losses))


def train_mlm(model, lines, vocab: Vocab, policy: FreezePolicy,
              config: TrainConfig, mask_rate: float = 0.15,
              heldout_fraction: float = 0.1) -> dict:
    """Masked-token cross-entropy training under a freeze policy.

    The leading heldout_fraction of lines is reserved for before/after
    loss measurement and never trained on.
    """
    if not lines:
        raise DataError("empty unlabeled corpus")
    vocab_size = len(vocab)
    seqs = lines_to_sequences(lines, vocab, model.config.max_seq_len)
    if not seqs:
        raise DataError("unlabeled corpus contains no tokens")
    n_held = max(1, int(len(seqs) * heldout_fraction)) if len(seqs) > 1 else 0
    held, train_seqs = seqs[:n_held], seqs[n_held:]
    if not train_seqs:
        train_seqs, held = seqs, []
    trainable = apply_freeze(model.params, policy)
    if not trainable:
        raise ContractError(f"policy {policy.setup} leaves nothing trainable")
    history = {"epoch_loss": [], "steps": 0}
    if held:
        history["held_out_before"] = _heldout_loss(model, held, mask_rate,
                                                   vocab_size, config.seed)
    opt = Adam(model.params, lr=config.lr)
    batch_rng = Rng(config.seed).child("mlm-batches")
    mask_rng = Rng(config.seed).child("mlm-mask")
    dropout_rng = Rng(config.seed).child("mlm-dropout")
    for _ in range(config.epochs):
        order = list(train_seqs)
        batch_rng.shuffle(order)
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            opt.zero_grad()
            losses = []
            for ids in batch:
                corrupted, labels = mlm_mask(ids, mask_rng, mask_rate, vocab_size)
                positions = np.nonzero(labels >= 0)[0]
                if positions.size == 0:
                    continue
                hidden = model.encode(corrupted, training=True, rng=dropout_rng)
                lsm = log_softmax(mlm_logits(model, hidden), axis=-1)
                losses.append(-tmean(lsm[(positions, labels[positions])]))
            if not losses:
                continue
            loss = _mean_loss(losses)
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.data))
            history["steps"] += 1
            if config.max_steps and history["steps"] >= config.max_steps:
                break
        if epoch_losses:
            history["epoch_loss"].append(float(np.mean(epoch_losses)))
        if config.max_steps and history["steps"] >= config.max_steps:
            break
    if held:
        history["held_out_after"] = _heldout_loss(model, held, mask_rate,
                                                  vocab_size, config.seed)
    return history
