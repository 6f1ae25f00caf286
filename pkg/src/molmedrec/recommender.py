"""Per-visit substructure distillation.

For every history visit, the patient state scores each substructure's
relevance; substructure embeddings interact through self-attention; each
drug aggregates its member substructures through masked attention (queries
from the drug embeddings, keys from the self-attention output, values from
the relevance-scaled rows); the latest visit calibrates the aggregate per
drug, and a shared per-row map reduces it to one score per drug.

Attention logits of non-member (drug, substructure) pairs are pushed to
-2^32 before the softmax, which zeroes them exactly in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import (
    Linear,
    LayerNorm,
    MLP,
    ShapeError,
    Tensor,
    concat,
    matmul,
    softmax,
)
from .data import Visit

__all__ = ["EntityEmbeddings", "encode_visits", "encode_latest",
           "SubstructureAttention", "DistillModule", "MASK_VALUE"]

MASK_VALUE = -float(2 ** 32)


class EntityEmbeddings:
    """Learnable disease / procedure / medication codebooks, dim columns,
    entries initialized uniformly in [-0.1, 0.1]."""

    def __init__(self, rng: np.random.Generator, n_diseases: int,
                 n_procedures: int, n_medications: int, dim: int = 128):
        self.dim = dim
        self.sizes = {"diseases": n_diseases, "procedures": n_procedures,
                      "medications": n_medications}
        self.e_d = Tensor(rng.uniform(-0.1, 0.1, (n_diseases, dim)), requires_grad=True)
        self.e_p = Tensor(rng.uniform(-0.1, 0.1, (n_procedures, dim)), requires_grad=True)
        self.e_me = Tensor(rng.uniform(-0.1, 0.1, (n_medications, dim)), requires_grad=True)

    def parameters(self, prefix: str = "emb") -> dict[str, Tensor]:
        return {f"{prefix}.diseases": self.e_d, f"{prefix}.procedures": self.e_p,
                f"{prefix}.medications": self.e_me}


def _multi_hot_matrix(visits: list[Visit], field_name: str, size: int) -> np.ndarray:
    rows = np.zeros((len(visits), size), dtype=np.float64)
    for r, v in enumerate(visits):
        idx = getattr(v, field_name)
        if any(not 0 <= i < size for i in idx):
            raise ShapeError(f"{field_name} index out of range for size {size}")
        rows[r, idx] = 1.0
    return rows


def encode_visits(visits: list[Visit], emb: EntityEmbeddings,
                  include_meds: bool = True) -> Tensor:
    """Stack visit representations: each row is the concatenation of the
    multi-hot x embedding products (diseases, procedures, then medications
    when included). The product is a sum of member rows, so the encoding is
    linear in the multi-hot."""
    blocks = [matmul(Tensor(_multi_hot_matrix(visits, "diseases",
                                              emb.sizes["diseases"])), emb.e_d),
              matmul(Tensor(_multi_hot_matrix(visits, "procedures",
                                              emb.sizes["procedures"])), emb.e_p)]
    if include_meds:
        blocks.append(matmul(Tensor(_multi_hot_matrix(
            visits, "medications", emb.sizes["medications"])), emb.e_me))
    return concat(blocks, axis=1)


def encode_latest(visit: Visit, emb: EntityEmbeddings) -> Tensor:
    """(1, 2*dim) diseases-and-procedures representation of the newest visit."""
    return encode_visits([visit], emb, include_meds=False)


class SubstructureAttention:
    """Pre-norm-free transformer block over substructure embeddings:
    H = LN(x + softmax(QK^T / sqrt(d)) V), out = LN(H + MLP(H))."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.dim = dim
        self.wq = Linear(rng, dim, dim)
        self.wk = Linear(rng, dim, dim)
        self.wv = Linear(rng, dim, dim)
        self.ln1 = LayerNorm(dim)
        self.ln2 = LayerNorm(dim)
        self.mlp = MLP(rng, dim, dim, dim)

    def attention_weights(self, x: Tensor) -> Tensor:
        if x.shape[0] == 0:
            raise ShapeError("self-attention over an empty substructure set")
        q, k = self.wq(x), self.wk(x)
        return softmax(matmul(q, k.transpose()) * (1.0 / np.sqrt(self.dim)), axis=1)

    def __call__(self, x: Tensor) -> Tensor:
        weights = self.attention_weights(x)
        h = self.ln1(x + matmul(weights, self.wv(x)))
        return self.ln2(h + self.mlp(h))

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for name in ("wq", "wk", "wv", "ln1", "ln2", "mlp"):
            out.update(getattr(self, name).parameters(f"{prefix}.{name}"))
        return out


@dataclass
class DistillState:
    """Step-shared intermediates (everything the patient loop can reuse)."""

    refined_subs: Tensor      # |S| x dim, self-attention output
    attention: Tensor         # |M| x |S|, masked row-softmax


class DistillModule:
    """Relevance scoring, substructure refinement, masked aggregation,
    latest-visit calibration, per-drug reduction."""

    def __init__(self, rng: np.random.Generator, dim: int, n_subs: int,
                 n_meds: int):
        self.dim = dim
        self.n_subs = n_subs
        self.n_meds = n_meds
        self.relevance = MLP(rng, 3 * dim, dim, n_subs)
        self.ssa = SubstructureAttention(rng, dim)
        self.wq_mol = Linear(rng, dim, dim)
        self.wk_sub = Linear(rng, dim, dim)
        self.calibration = MLP(rng, 2 * dim, dim, n_meds)
        self.per_drug = MLP(rng, dim, dim, 1)

    def parameters(self, prefix: str = "distill") -> dict[str, Tensor]:
        out = self.relevance.parameters(f"{prefix}.relevance")
        out.update(self.ssa.parameters(f"{prefix}.ssa"))
        out.update(self.wq_mol.parameters(f"{prefix}.wq_mol"))
        out.update(self.wk_sub.parameters(f"{prefix}.wk_sub"))
        out.update(self.calibration.parameters(f"{prefix}.calibration"))
        out.update(self.per_drug.parameters(f"{prefix}.per_drug"))
        return out

    def substructure_relevance(self, visit_repr: Tensor) -> Tensor:
        """(T, 3*dim) visit representations -> (T, |S|) relevance in (0, 1)."""
        return self.relevance(visit_repr).sigmoid()

    def shared_state(self, mol_embed: Tensor, sub_embed: Tensor,
                     membership: np.ndarray) -> DistillState:
        """SSA output and the masked drug->substructure attention; both are
        independent of the patient, so callers compute them once per step."""
        if membership.shape != (self.n_meds, self.n_subs):
            raise ShapeError(f"membership mask {membership.shape} does not match "
                             f"({self.n_meds}, {self.n_subs})")
        if np.any(membership.sum(axis=1) < 1):
            raise ShapeError("every drug needs at least one substructure")
        refined = self.ssa(sub_embed)
        q = self.wq_mol(mol_embed)
        k = self.wk_sub(refined)
        logits = matmul(q, k.transpose()) * (1.0 / np.sqrt(self.dim))
        mask = np.where(membership > 0, 0.0, MASK_VALUE)
        attention = softmax(logits + Tensor(mask), axis=1)
        return DistillState(refined_subs=refined, attention=attention)

    def distill(self, visit_repr: Tensor, latest_repr: Tensor,
                state: DistillState) -> Tensor:
        """(T, 3*dim) history representations -> (T, |M|) per-drug scores."""
        t = visit_repr.shape[0]
        rel = self.substructure_relevance(visit_repr)               # (T, S)
        scaled = rel.reshape(t, self.n_subs, 1) \
            * state.refined_subs.reshape(1, self.n_subs, self.dim)  # (T, S, d)
        agg = matmul(state.attention.reshape(1, self.n_meds, self.n_subs),
                     scaled)                                        # (T, M, d)
        weights = self.calibration(latest_repr).sigmoid()           # (1, M)
        calibrated = agg * weights.reshape(1, self.n_meds, 1)
        flat = self.per_drug(calibrated.reshape(t * self.n_meds, self.dim))
        return flat.reshape(t, self.n_meds)
