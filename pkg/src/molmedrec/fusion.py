"""Trajectory fusion: recur over the per-visit drug vectors, combine with the
latest visit representation, and emit per-drug probabilities."""

from __future__ import annotations

import numpy as np

from .autograd import GRUCell, Linear, MLP, Tensor, concat

__all__ = ["TrajectoryFusion", "recommend"]


class TrajectoryFusion:
    """GRU (hidden size = number of drugs) over the chronological per-visit
    drug vectors from a zero initial state; the final hidden state is
    concatenated with a projection of the latest visit and mapped to
    probabilities."""

    def __init__(self, rng: np.random.Generator, n_meds: int, dim: int = 128):
        self.n_meds = n_meds
        self.gru = GRUCell(rng, n_meds, n_meds)
        self.project = Linear(rng, 2 * dim, n_meds)
        self.mlp = MLP(rng, 2 * n_meds, dim, n_meds)

    def __call__(self, drug_seq: Tensor | None, latest_repr: Tensor) -> Tensor:
        """drug_seq: (T, |M|) oldest-first, or None for a first visit;
        latest_repr: (1, 2*dim). Returns probabilities in (0, 1)^|M|."""
        hidden = Tensor(np.zeros((1, self.n_meds)))
        if drug_seq is not None:
            for t in range(drug_seq.shape[0]):
                hidden = self.gru(drug_seq[t].reshape(1, self.n_meds), hidden)
        latest = self.project(latest_repr)
        return self.mlp(concat([hidden, latest], axis=1)).sigmoid().reshape(self.n_meds)

    def parameters(self, prefix: str = "fusion") -> dict[str, Tensor]:
        out = self.gru.parameters(f"{prefix}.gru")
        out.update(self.project.parameters(f"{prefix}.project"))
        out.update(self.mlp.parameters(f"{prefix}.mlp"))
        return out


def recommend(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Multi-hot of drugs whose probability strictly exceeds the threshold."""
    return (np.asarray(probs) > threshold).astype(np.float64)
