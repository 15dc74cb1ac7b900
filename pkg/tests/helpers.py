"""Shared test machinery: random op-composition graphs and finite differences.

Used by both the per-module gradient tests and the end-to-end gate, so the
same graph generator backs every gradient claim in the suite.
"""

import numpy as np

from adapterqa import tensor as tz
from adapterqa.tensor import Tensor

GRAPH_SIDE = 4
GRAPH_OPS = 7


def build_random_graph(seed: int, depth: int = 8):
    """Random composition of tape ops over square leaves.

    Returns (run, inits) where run(arrays) rebuilds the graph from raw
    numpy values and returns (scalar loss, leaf tensors). Rebuilding from
    the same arrays is deterministic, so central differences can probe it.
    """
    rng = np.random.default_rng(seed)
    n_leaves = 3
    inits = [rng.normal(scale=0.7, size=(GRAPH_SIDE, GRAPH_SIDE))
             for _ in range(n_leaves)]
    inits.append(rng.normal(scale=0.3, size=GRAPH_SIDE) + 1.0)
    inits.append(rng.normal(scale=0.3, size=GRAPH_SIDE))
    ops = [int(rng.integers(0, GRAPH_OPS)) for _ in range(depth)]
    picks = [int(rng.integers(0, n_leaves)) for _ in range(depth)]

    def run(arrays):
        leaves = [Tensor(a, requires_grad=True) for a in arrays[:n_leaves]]
        gain = Tensor(arrays[n_leaves], requires_grad=True)
        bias = Tensor(arrays[n_leaves + 1], requires_grad=True)
        cur = leaves[0]
        for op, pick in zip(ops, picks):
            other = leaves[pick]
            if op == 0:
                cur = cur + other
            elif op == 1:
                cur = cur * other * 0.5
            elif op == 2:
                cur = tz.matmul(cur, other) * 0.3
            elif op == 3:
                cur = tz.gelu(cur)
            elif op == 4:
                cur = tz.softmax(cur) + other * 0.1
            elif op == 5:
                # The leaf mix-in keeps per-row variance away from zero.
                cur = tz.layer_norm(cur + other * 0.3, gain, bias)
            else:
                cur = tz.transpose(cur) + 0.2
        loss = -tz.log_softmax(cur).mean() + cur.mean()
        return loss, leaves + [gain, bias]

    return run, inits


def finite_diff_grads(run, arrays, h: float):
    """Central-difference gradients of run's loss w.r.t. every array."""
    def value(arrs):
        with tz.no_grad():
            loss, _ = run(arrs)
        return loss.item()

    grads = []
    for k in range(len(arrays)):
        probe = [a.copy() for a in arrays]
        flat = probe[k].reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = value(probe)
            flat[i] = orig - h
            lo = value(probe)
            flat[i] = orig
            fd[i] = (hi - lo) / (2.0 * h)
        grads.append(fd.reshape(arrays[k].shape))
    return grads


def max_graph_grad_error(seed: int, h: float = 1e-4) -> float:
    """Worst relative error between tape and finite-difference gradients."""
    run, inits = build_random_graph(seed)
    loss, params = run(inits)
    loss.backward()
    fd_grads = finite_diff_grads(run, inits, h)
    worst = 0.0
    for p, fd in zip(params, fd_grads):
        ad = np.zeros_like(p.data) if p.grad is None else p.grad
        denom = np.maximum(1.0, np.maximum(np.abs(fd), np.abs(ad)))
        worst = max(worst, float((np.abs(fd - ad) / denom).max()))
    return worst
