"""Parameterized building blocks (linear maps, MLPs, GRU cell, layer norm).

Each block owns its weights as :class:`Tensor` leaves and exposes
``parameters(prefix)`` returning a flat ``{name: Tensor}`` mapping, which is
what the optimizer and the checkpoint writer consume.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, ShapeError, concat, layer_norm, matmul

__all__ = ["Linear", "MLP", "Embedding", "LayerNorm", "GRUCell", "gru_cell"]


def glorot(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_in, n_out))


class Linear:
    """Affine map x @ W + b with W of shape (n_in, n_out)."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int,
                 bias: bool = True):
        self.n_in, self.n_out = n_in, n_out
        self.w = Tensor(glorot(rng, n_in, n_out), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"linear expects last dim {self.n_in}, got {x.shape}")
        out = matmul(x, self.w)
        return out + self.b if self.b is not None else out

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.w": self.w}
        if self.b is not None:
            out[f"{prefix}.b"] = self.b
        return out


class MLP:
    """One hidden relu layer: n_in -> hidden -> n_out."""

    def __init__(self, rng: np.random.Generator, n_in: int, hidden: int, n_out: int):
        self.fc1 = Linear(rng, n_in, hidden)
        self.fc2 = Linear(rng, hidden, n_out)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).relu())

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {**self.fc1.parameters(f"{prefix}.fc1"),
                **self.fc2.parameters(f"{prefix}.fc2")}


class Embedding:
    """Row-lookup codebook; rows indexed by a constant int array."""

    def __init__(self, rng: np.random.Generator, n_rows: int, dim: int,
                 scale: float = 0.1):
        self.table = Tensor(rng.uniform(-scale, scale, size=(n_rows, dim)),
                            requires_grad=True)

    def __call__(self, index: np.ndarray) -> Tensor:
        return self.table[np.asarray(index, dtype=np.intp)]

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.table": self.table}


class LayerNorm:
    """Learned affine layer norm over the last axis.

    The float64 default eps keeps pre-affine row variance within 1e-6 of 1.
    """

    def __init__(self, dim: int, eps: float = 1e-12):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, axis=-1, eps=self.eps)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gain": self.gain, f"{prefix}.bias": self.bias}


class GRUCell:
    """Standard gated recurrent unit.

    z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    c = tanh(x Wc + (r * h) Uc + bc), h' = z * h + (1 - z) * c,
    so a saturated update gate passes the previous hidden state through.
    """

    def __init__(self, rng: np.random.Generator, n_in: int, n_hidden: int):
        self.n_in, self.n_hidden = n_in, n_hidden
        for gate in ("z", "r", "c"):
            setattr(self, f"w{gate}", Tensor(glorot(rng, n_in, n_hidden), requires_grad=True))
            setattr(self, f"u{gate}", Tensor(glorot(rng, n_hidden, n_hidden), requires_grad=True))
            setattr(self, f"b{gate}", Tensor(np.zeros(n_hidden), requires_grad=True))

    def __call__(self, x: Tensor, h_prev: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in or h_prev.shape[-1] != self.n_hidden:
            raise ShapeError(
                f"gru expects input dim {self.n_in} / hidden dim {self.n_hidden}, "
                f"got {x.shape} / {h_prev.shape}")
        x2 = x.reshape(1, -1) if x.ndim == 1 else x
        h2 = h_prev.reshape(1, -1) if h_prev.ndim == 1 else h_prev
        z = (matmul(x2, self.wz) + matmul(h2, self.uz) + self.bz).sigmoid()
        r = (matmul(x2, self.wr) + matmul(h2, self.ur) + self.br).sigmoid()
        c = (matmul(x2, self.wc) + matmul(r * h2, self.uc) + self.bc).tanh()
        h = z * h2 + (1.0 - z) * c
        return h.reshape(self.n_hidden) if x.ndim == 1 else h

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for gate in ("z", "r", "c"):
            out[f"{prefix}.w{gate}"] = getattr(self, f"w{gate}")
            out[f"{prefix}.u{gate}"] = getattr(self, f"u{gate}")
            out[f"{prefix}.b{gate}"] = getattr(self, f"b{gate}")
        return out


def gru_cell(x: Tensor, h_prev: Tensor, cell: GRUCell) -> Tensor:
    """Functional form of :class:`GRUCell`."""
    return cell(x, h_prev)
