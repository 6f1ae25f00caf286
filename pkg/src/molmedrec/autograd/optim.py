"""Adam optimizer over named parameter dicts."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["Adam"]


class Adam:
    """Bias-corrected Adam with a single global step counter.

    ``strict=True`` makes a missing gradient an error; by default a parameter
    that received no gradient this step is treated as zero-gradient (its
    moments decay), which the training loops rely on: short patient histories
    legitimately keep some parameters off the tape.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, strict: bool = False) -> None:
        """Apply one update and zero all gradients."""
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                if strict:
                    raise ValueError(f"parameter {name!r} has no gradient")
                g = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / c1
            vhat = v / c2
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment tensors under 'optim.' names, for checkpoint resume."""
        out: dict[str, np.ndarray] = {}
        for name in self.params:
            out[f"optim.m.{name}"] = self.m[name]
            out[f"optim.v.{name}"] = self.v[name]
        return out

    def load_state(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for name in self.params:
            self.m[name] = np.array(arrays[f"optim.m.{name}"], dtype=np.float64)
            self.v[name] = np.array(arrays[f"optim.v.{name}"], dtype=np.float64)
        self.step_count = int(step_count)
