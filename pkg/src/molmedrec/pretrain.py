"""Symmetric contrastive alignment of the 2D and 3D molecular encoders.

The corpus holds every catalog molecule and every deduplicated fragment,
each as a (2D graph, conformer graph) pair over the same atoms; fragments
inherit their parent's coordinates. Training pulls matching pairs together
under a temperature-scaled cosine objective whose denominator, by default,
ranges over negatives only (a config flag switches to the standard inclusive
denominator). Downstream stages keep only the trained 2D encoder.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .autograd import (
    Adam,
    Linear,
    Tensor,
    load_checkpoint,
    load_into,
    matmul,
    no_grad,
    save_checkpoint,
)
from .chem import MolGraph2D, MolGraph3D, brics_decompose, build_graph3d, \
    canonical_key, inherit_conformer
from .data import Catalog
from .encoders import Batch2D, Batch3D, Gin2DEncoder, Gvp3DEncoder, HIDDEN_DIM
from .util import config_hash, rng_for

__all__ = [
    "CorpusItem", "build_corpus", "validate_corpus", "substructure_conformers",
    "ntxent_one_direction", "ntxent_symmetric",
    "PretrainConfig", "PretrainModel", "PretrainResult",
    "run_pretrain", "retrieval_eval", "save_pretrain_checkpoint",
]


@dataclass
class CorpusItem:
    kind: str                 # "molecule" | "substructure"
    label: str
    key: str                  # canonical graph key (dedup identity)
    mol: MolGraph2D
    graph3d: MolGraph3D


def build_corpus(catalog: Catalog) -> list[CorpusItem]:
    """Molecules plus deduplicated fragments, one item per distinct graph.

    A fragment identical to a whole molecule (uncleavable molecule) is kept
    once, tagged as a molecule; duplicates would make cross-modal retrieval
    ill-posed.
    """
    items: dict[str, CorpusItem] = {}
    for entry in catalog.entries:
        key = canonical_key(entry.mol)
        if key not in items:
            parent3d = build_graph3d(entry.mol, entry.coords)
            items[key] = CorpusItem("molecule", entry.sdf_name, key,
                                    entry.mol, parent3d)
    for entry in catalog.entries:
        parent3d = build_graph3d(entry.mol, entry.coords)
        for frag in brics_decompose(entry.mol):
            if frag.canonical_key in items:
                continue
            items[frag.canonical_key] = CorpusItem(
                "substructure", f"{entry.sdf_name}:frag", frag.canonical_key,
                frag.fragment, inherit_conformer(parent3d, frag))
    return list(items.values())


def substructure_conformers(catalog: Catalog, table) -> list[MolGraph3D]:
    """First-parent inherited conformer for each table substructure, aligned
    with the table's order."""
    key_to_graph: dict[str, MolGraph3D] = {}
    for entry in catalog.entries:
        parent3d = build_graph3d(entry.mol, entry.coords)
        for frag in brics_decompose(entry.mol):
            if frag.canonical_key not in key_to_graph:
                key_to_graph[frag.canonical_key] = inherit_conformer(parent3d, frag)
    return [key_to_graph[s.canonical_key] for s in table.substructures]


def validate_corpus(items: list[CorpusItem]) -> None:
    """Each pair must describe the same chemical graph."""
    for item in items:
        a = sorted(at.element for at in item.mol.atoms)
        b = sorted(at.element for at in item.graph3d.mol.atoms)
        if item.mol.n_atoms != item.graph3d.n_atoms or a != b:
            raise ValueError(f"corpus item {item.label!r}: modality mismatch")


# -- contrastive loss -------------------------------------------------------------

def _cosine_rows(ea: Tensor, eb: Tensor) -> Tensor:
    for name, e in (("first", ea), ("second", eb)):
        norms = np.linalg.norm(e.data, axis=1)
        if np.any(norms < 1e-30):
            raise ValueError(f"zero-norm row in the {name} embedding batch")
    na = ((ea * ea).sum(axis=1, keepdims=True)).sqrt()
    nb = ((eb * eb).sum(axis=1, keepdims=True)).sqrt()
    return matmul(ea / na, (eb / nb).transpose())


def ntxent_one_direction(ea: Tensor, eb: Tensor, tau: float,
                         inclusive: bool = False) -> Tensor:
    """-mean_i log( exp(sim_ii/tau) / sum_k exp(sim_ik/tau) ).

    By default the denominator excludes k = i (negatives only), which can go
    negative; `inclusive=True` adds the positive term back in.
    """
    n = ea.shape[0]
    if n < 2:
        raise ValueError("contrastive batch needs at least 2 rows")
    sim = _cosine_rows(ea, eb)
    logits = sim * (1.0 / tau)
    diag = (np.arange(n), np.arange(n))
    pos = logits[diag]
    masked = logits if inclusive else logits + Tensor(np.where(np.eye(n), -1e30, 0.0))
    shift = masked.data.max(axis=1, keepdims=True)
    lse = (masked - shift).exp().sum(axis=1, keepdims=True).log() + shift
    return -(pos - lse.reshape(n)).mean()


def ntxent_symmetric(ea: Tensor, eb: Tensor, tau: float,
                     inclusive: bool = False) -> Tensor:
    """Sum of both directions (2D->3D plus 3D->2D)."""
    return ntxent_one_direction(ea, eb, tau, inclusive) \
        + ntxent_one_direction(eb, ea, tau, inclusive)


# -- training ---------------------------------------------------------------------

@dataclass
class PretrainConfig:
    epochs: int = 300
    batch_size: int = 32
    lr: float = 1e-3
    tau_nt: float = 0.1
    inclusive_denominator: bool = False
    seed: int = 0

    def as_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "lr": self.lr, "tau_nt": self.tau_nt,
                "inclusive_denominator": self.inclusive_denominator,
                "seed": self.seed}


class PretrainModel:
    """Both encoders plus the per-modality projection heads."""

    def __init__(self, seed: int, gnn_layers: int = 4, gvp_layers: int = 3):
        rng = rng_for(seed, "pretrain.init")
        self.gin = Gin2DEncoder(rng, n_layers=gnn_layers)
        self.gvp = Gvp3DEncoder(rng, n_layers=gvp_layers)
        self.head2d = Linear(rng, HIDDEN_DIM, HIDDEN_DIM)
        self.head3d = Linear(rng, HIDDEN_DIM, HIDDEN_DIM)

    def parameters(self) -> dict[str, Tensor]:
        out = self.gin.parameters("gin")
        out.update(self.gvp.parameters("gvp"))
        out.update(self.head2d.parameters("head2d"))
        out.update(self.head3d.parameters("head3d"))
        return out

    def embed(self, items: list[CorpusItem], project: bool = True
              ) -> tuple[Tensor, Tensor]:
        e2 = self.gin.encode(Batch2D([it.mol for it in items]))
        e3 = self.gvp.encode(Batch3D([it.graph3d for it in items]))
        if project:
            e2, e3 = self.head2d(e2), self.head3d(e3)
        return e2, e3


def retrieval_eval(model: PretrainModel, corpus: list[CorpusItem]) -> float:
    """Top-1 cross-modal retrieval accuracy in projection space: for each
    item, rank every 3D embedding by cosine against its 2D embedding."""
    with no_grad():
        e2, e3 = model.embed(corpus)
    a = e2.data / np.linalg.norm(e2.data, axis=1, keepdims=True)
    b = e3.data / np.linalg.norm(e3.data, axis=1, keepdims=True)
    ranks = (a @ b.T).argmax(axis=1)
    return float((ranks == np.arange(len(corpus))).mean())


@dataclass
class PretrainResult:
    model: PretrainModel
    rows: list[tuple[int, float, float]]   # (epoch, loss, retrieval_acc)
    optimizer: Adam
    epochs_done: int


def run_pretrain(corpus: list[CorpusItem], cfg: PretrainConfig,
                 resume_from: str | None = None,
                 model: PretrainModel | None = None,
                 log=None) -> PretrainResult:
    """Shuffled mini-batch contrastive training; per-epoch rows carry
    (epoch, loss, retrieval_accuracy). Deterministic per seed."""
    if not corpus:
        raise ValueError("empty pretraining corpus")
    if cfg.batch_size < 2:
        raise ValueError("batch size must be at least 2")
    validate_corpus(corpus)
    if model is None:
        model = PretrainModel(cfg.seed)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    start_epoch = 0
    if resume_from is not None:
        manifest, arrays = load_checkpoint(resume_from)
        load_into(params, {k: v for k, v in arrays.items()
                           if not k.startswith("optim.")})
        opt.load_state(arrays, manifest["meta"]["step_count"])
        start_epoch = int(manifest["meta"]["epochs_done"])
    shuffle_rng = rng_for(cfg.seed, "pretrain.shuffle")
    rows: list[tuple[int, float, float]] = []
    n = len(corpus)
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        order = shuffle_rng.permutation(n)
        total, used = 0.0, 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            if len(idx) < 2:
                warnings.warn("skipping contrastive batch of size 1")
                continue
            batch = [corpus[i] for i in idx]
            e2, e3 = model.embed(batch)
            loss = ntxent_symmetric(e2, e3, cfg.tau_nt,
                                    cfg.inclusive_denominator)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            used += len(idx)
        acc = retrieval_eval(model, corpus)
        epoch_loss = total / used if used else float("nan")
        rows.append((epoch + 1, epoch_loss, acc))
        if log is not None:
            log(f"epoch {epoch + 1}: loss {epoch_loss:.4f} retrieval {acc:.3f}")
    return PretrainResult(model=model, rows=rows, optimizer=opt,
                          epochs_done=start_epoch + cfg.epochs)


def save_pretrain_checkpoint(path, result: PretrainResult,
                             cfg: PretrainConfig) -> None:
    arrays = {k: p.data for k, p in result.model.parameters().items()}
    arrays.update(result.optimizer.state_arrays())
    meta = {"stage": "pretrain",
            "epochs_done": result.epochs_done,
            "step_count": result.optimizer.step_count,
            "config": cfg.as_dict()}
    save_checkpoint(path, arrays, config_hash(cfg.as_dict()), meta)
