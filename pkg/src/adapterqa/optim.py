"""Adam optimizer over a ParamStore, plus the finite-difference oracle."""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .params import ParamStore
from .tensor import no_grad


class Adam:
    """Adam with bias correction and per-name moment state.

    Only names in the store's trainable_mask are ever mutated; a trainable
    parameter with no populated gradient is a contract error.
    """

    def __init__(self, store: ParamStore, lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        # Iterate in store order, not mask order, so float state updates
        # are reproducible across processes.
        for name in self.store.names():
            if name not in self.store.trainable_mask:
                continue
            p = self.store[name]
            if p.grad is None:
                raise ContractError(f"trainable parameter {name!r} has no gradient")
            g = p.grad
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        self.store.zero_grad()


def finite_diff_check(f, store: ParamStore, h: float, names) -> float:
    """Compare autodiff gradients of a scalar function against central differences.

    `f` takes the store and returns a scalar Tensor; it must be deterministic.
    Returns the max relative error max|fd - ad| / max(1, |fd|, |ad|) over all
    elements of the named parameters. Empty name list returns 0.
    """
    names = list(names)
    if not names:
        return 0.0
    if h <= 0:
        raise ContractError("finite_diff_check requires h > 0")
    store.zero_grad()
    loss = f(store)
    loss.backward()
    analytic = {}
    for n in names:
        g = store[n].grad
        analytic[n] = np.zeros_like(store[n].data) if g is None else g.copy()
    max_rel = 0.0
    with no_grad():
        for n in names:
            flat = store[n].data.reshape(-1)
            an = analytic[n].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = f(store).item()
                flat[i] = orig - h
                f_minus = f(store).item()
                flat[i] = orig
                fd = (f_plus - f_minus) / (2.0 * h)
                denom = max(1.0, abs(fd), abs(an[i]))
                max_rel = max(max_rel, abs(fd - an[i]) / denom)
    return max_rel
