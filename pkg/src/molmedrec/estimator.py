"""Top-level estimators (sklearn fit/predict conventions).

:class:`ContrastiveEncoderPretrainer` aligns the two molecular encoders over
a paired corpus. :class:`MedicationRecommender` owns the full pipeline: a
frozen 2D encoder supplies drug/substructure embeddings, the distillation
core turns visit histories into per-visit drug vectors, and the trajectory
fusion produces per-drug probabilities trained under the rate-controlled
combined loss.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .autograd import Adam, Tensor, load_checkpoint, load_into, no_grad, save_checkpoint
from .chem import build_substructure_table
from .data import Catalog, PatientRecord, Visit
from .encoders import Batch2D
from .fusion import TrajectoryFusion, recommend
from .losses import LossConfig, combined_loss
from .metrics import ddi_rate, evaluate_visits
from .pretrain import (
    PretrainConfig,
    PretrainModel,
    build_corpus,
    retrieval_eval,
    run_pretrain,
)
from .recommender import DistillModule, EntityEmbeddings, encode_latest, encode_visits
from .util import config_hash, rng_for
from .validation import check_catalog, check_ddi_matrix, check_records, check_vocab_sizes

__all__ = ["RecommenderCore", "MedicationRecommender", "ContrastiveEncoderPretrainer"]


def _unit_rows(e: np.ndarray) -> np.ndarray:
    """Project embeddings onto the unit sphere. Sum pooling makes raw norms
    grow with atom count, which saturates the drug->substructure attention
    from the first step; the contrastive objective is cosine-based, so the
    pretrained signal lives in the directions anyway."""
    norms = np.linalg.norm(e, axis=1, keepdims=True)
    return e / np.maximum(norms, 1e-12)


class RecommenderCore:
    """Trainable state of the recommender plus the frozen molecule buffers."""

    def __init__(self, rng: np.random.Generator, dim: int, n_diseases: int,
                 n_procedures: int, n_medications: int,
                 mol_embed: np.ndarray, sub_embed: np.ndarray,
                 membership: np.ndarray, per_visit_distill: bool = True):
        self.dim = dim
        self.n_meds = n_medications
        self.per_visit_distill = per_visit_distill
        self.emb = EntityEmbeddings(rng, n_diseases, n_procedures,
                                    n_medications, dim)
        self.distill = DistillModule(rng, dim, membership.shape[1], n_medications)
        self.fusion = TrajectoryFusion(rng, n_medications, dim)
        self.mol_embed = np.asarray(mol_embed, dtype=np.float64)
        self.sub_embed = np.asarray(sub_embed, dtype=np.float64)
        self.membership = np.asarray(membership, dtype=np.float64)

    def parameters(self) -> dict[str, Tensor]:
        out = self.emb.parameters("rec.emb")
        out.update(self.distill.parameters("rec.distill"))
        out.update(self.fusion.parameters("fus"))
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        return {"rec.buffer.mol_embed": self.mol_embed,
                "rec.buffer.sub_embed": self.sub_embed,
                "rec.buffer.membership": self.membership}

    def forward_patient(self, visits: list[Visit]) -> list[Tensor]:
        """Per-visit probability vectors, predicting visit t from visits
        1..t-1 plus visit t's diseases and procedures."""
        state = self.distill.shared_state(Tensor(self.mol_embed),
                                          Tensor(self.sub_embed),
                                          self.membership)
        probs = []
        for t in range(1, len(visits) + 1):
            latest = encode_latest(visits[t - 1], self.emb)
            if self.per_visit_distill:
                history = visits[:t - 1]
                if history:
                    visit_repr = encode_visits(history, self.emb)
                    drug_seq = self.distill.distill(visit_repr, latest, state)
                else:
                    drug_seq = None
            else:
                # ablation: only the latest physical condition interacts
                masked = Visit(visits[t - 1].diseases, visits[t - 1].procedures, [])
                visit_repr = encode_visits([masked], self.emb)
                drug_seq = self.distill.distill(visit_repr, latest, state)
            probs.append(self.fusion(drug_seq, latest))
        return probs


class ContrastiveEncoderPretrainer(BaseEstimator):
    """Fits the 2D/3D encoder pair with the symmetric contrastive objective."""

    def __init__(self, epochs: int = 300, batch_size: int = 32, lr: float = 1e-3,
                 tau_nt: float = 0.1, inclusive_denominator: bool = False,
                 seed: int = 0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.tau_nt = tau_nt
        self.inclusive_denominator = inclusive_denominator
        self.seed = seed

    def _config(self) -> PretrainConfig:
        return PretrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                              lr=self.lr, tau_nt=self.tau_nt,
                              inclusive_denominator=self.inclusive_denominator,
                              seed=self.seed)

    def fit(self, corpus, y=None, log=None):
        result = run_pretrain(corpus, self._config(), log=log)
        self.result_ = result
        self.model_ = result.model
        self.history_ = result.rows
        return self

    def transform(self, corpus) -> tuple[np.ndarray, np.ndarray]:
        """(2D, 3D) projected embeddings for every corpus item."""
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit() first")
        with no_grad():
            e2, e3 = self.model_.embed(corpus)
        return e2.data, e3.data

    def score(self, corpus, y=None) -> float:
        """Cross-modal top-1 retrieval accuracy."""
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit() first")
        return retrieval_eval(self.model_, corpus)


class MedicationRecommender(BaseEstimator):
    """Full visit-level recommender with sklearn-style fit/predict.

    `fit` needs the molecule catalog (one row per drug id) and the
    interaction matrix alongside the patient records; `predict` emits one
    medication multi-hot per visit of each patient.
    """

    def __init__(self, dim: int = 128, gnn_layers: int = 4, gvp_layers: int = 3,
                 pretrain_epochs: int = 300, train_epochs: int = 20,
                 batch_size: int = 32, train_batch: int = 2,
                 pretrain_lr: float = 1e-3,
                 train_lr: float = 5e-4, tau_nt: float = 0.1,
                 beta: float = 0.95, phi: float = 0.06, kappa_ddi: float = 2.5,
                 threshold: float = 0.5, use_pretrain: bool = True,
                 per_visit_distill: bool = True,
                 inclusive_denominator: bool = False, ddi_control: bool = True,
                 seed: int = 0):
        self.dim = dim
        self.gnn_layers = gnn_layers
        self.gvp_layers = gvp_layers
        self.pretrain_epochs = pretrain_epochs
        self.train_epochs = train_epochs
        self.batch_size = batch_size
        self.train_batch = train_batch
        self.pretrain_lr = pretrain_lr
        self.train_lr = train_lr
        self.tau_nt = tau_nt
        self.beta = beta
        self.phi = phi
        self.kappa_ddi = kappa_ddi
        self.threshold = threshold
        self.use_pretrain = use_pretrain
        self.per_visit_distill = per_visit_distill
        self.inclusive_denominator = inclusive_denominator
        self.ddi_control = ddi_control
        self.seed = seed

    # -- fitting -----------------------------------------------------------

    def _resolve_encoder(self, catalog: Catalog, pretrained, log) -> PretrainModel:
        if isinstance(pretrained, PretrainModel):
            return pretrained
        if isinstance(pretrained, (str, bytes)) or hasattr(pretrained, "__fspath__"):
            model = PretrainModel(self.seed, self.gnn_layers, self.gvp_layers)
            _, arrays = load_checkpoint(pretrained)
            load_into(model.parameters(),
                      {k: v for k, v in arrays.items() if not k.startswith("optim.")})
            return model
        if self.use_pretrain:
            cfg = PretrainConfig(epochs=self.pretrain_epochs,
                                 batch_size=self.batch_size,
                                 lr=self.pretrain_lr, tau_nt=self.tau_nt,
                                 inclusive_denominator=self.inclusive_denominator,
                                 seed=self.seed)
            return run_pretrain(build_corpus(catalog), cfg, log=log).model
        return PretrainModel(self.seed, self.gnn_layers, self.gvp_layers)

    def _loss_config(self) -> LossConfig:
        cfg = LossConfig(beta=self.beta, phi=self.phi, kappa_ddi=self.kappa_ddi,
                         threshold=self.threshold)
        cfg.validate()
        return cfg

    def fit(self, records: list[PatientRecord], y=None, *, catalog: Catalog,
            ddi: np.ndarray, n_diseases: int, n_procedures: int,
            n_medications: int, val_records: list[PatientRecord] | None = None,
            pretrained=None, log=None):
        check_vocab_sizes(n_diseases, n_procedures, n_medications)
        check_records(records, n_diseases, n_procedures, n_medications)
        check_ddi_matrix(ddi, n_medications)
        check_catalog(catalog, n_medications)

        encoder = self._resolve_encoder(catalog, pretrained, log)
        table = build_substructure_table(catalog.mols())
        with no_grad():
            mol_embed = _unit_rows(encoder.gin.encode(Batch2D(catalog.mols())).data)
            sub_embed = _unit_rows(encoder.gin.encode(
                Batch2D([s.fragment for s in table.substructures])).data)

        core = RecommenderCore(
            rng_for(self.seed, "train.init"), self.dim, n_diseases,
            n_procedures, n_medications, mol_embed, sub_embed, table.mask,
            per_visit_distill=self.per_visit_distill)
        opt = Adam(core.parameters(), lr=self.train_lr)
        loss_cfg = self._loss_config()
        shuffle = rng_for(self.seed, "train.shuffle")
        history: list[dict] = []
        batch = max(int(self.train_batch), 1)
        for epoch in range(self.train_epochs):
            order = shuffle.permutation(len(records))
            total_loss, total_visits = 0.0, 0
            for lo in range(0, len(order), batch):
                group = [records[pi] for pi in order[lo:lo + batch]]
                all_probs = [core.forward_patient(rec.visits) for rec in group]
                preds = [recommend(p.data, self.threshold)
                         for probs in all_probs for p in probs]
                # the controller sees the batch's thresholded rate, detached
                rho = ddi_rate(preds, ddi) if self.ddi_control else 0.0
                losses = []
                for rec, probs in zip(group, all_probs):
                    for visit, p in zip(rec.visits, probs):
                        label = visit.multi_hot("medications", n_medications)
                        losses.append(combined_loss(label, p, ddi, rho, loss_cfg))
                loss = losses[0]
                for extra in losses[1:]:
                    loss = loss + extra
                loss = loss * (1.0 / len(losses))
                loss.backward()
                opt.step()
                total_loss += loss.item() * len(losses)
                total_visits += len(losses)
            row = {"epoch": epoch + 1, "train_loss": total_loss / total_visits}
            if val_records:
                val = self._evaluate_with(core, val_records, ddi)
                row["val_jaccard"] = val["jaccard"]
                row["val_ddi_rate"] = val["ddi_rate"]
            history.append(row)
            if log is not None:
                log(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                             for k, v in row.items()))

        self.core_ = core
        self.encoder_ = encoder
        self.substructures_ = table
        self.history_ = history
        self.vocab_ = {"n_diseases": n_diseases, "n_procedures": n_procedures,
                       "n_medications": n_medications}
        return self

    # -- inference ----------------------------------------------------------

    def _require_fitted(self) -> RecommenderCore:
        if not hasattr(self, "core_"):
            raise NotFittedError("call fit() or load() first")
        return self.core_

    def predict_proba(self, records: list[PatientRecord]) -> list[list[np.ndarray]]:
        core = self._require_fitted()
        out = []
        with no_grad():
            for rec in records:
                out.append([p.data.copy() for p in core.forward_patient(rec.visits)])
        return out

    def predict(self, records: list[PatientRecord]) -> list[list[np.ndarray]]:
        return [[recommend(p, self.threshold) for p in patient]
                for patient in self.predict_proba(records)]

    def _evaluate_with(self, core: RecommenderCore, records: list[PatientRecord],
                       ddi: np.ndarray) -> dict[str, float]:
        per_patient = []
        with no_grad():
            for rec in records:
                triples = []
                for visit, p in zip(rec.visits, core.forward_patient(rec.visits)):
                    true = visit.multi_hot("medications", core.n_meds)
                    triples.append((p.data.copy(),
                                    recommend(p.data, self.threshold), true))
                per_patient.append(triples)
        return evaluate_visits(per_patient, ddi)

    def evaluate(self, records: list[PatientRecord], ddi: np.ndarray) -> dict[str, float]:
        """Jaccard / interaction rate / F1 / PR-AUC / avg meds on `records`."""
        return self._evaluate_with(self._require_fitted(), records, ddi)

    # -- persistence ----------------------------------------------------------

    def config_dict(self) -> dict:
        return {k: getattr(self, k) for k in sorted(self.get_params())}

    def save(self, path, extra_meta: dict | None = None) -> None:
        core = self._require_fitted()
        arrays = {k: p.data for k, p in core.parameters().items()}
        arrays.update(core.buffers())
        meta = {"stage": "train", "config": self.config_dict(),
                "vocab": self.vocab_,
                "n_substructures": core.membership.shape[1]}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, arrays, config_hash(self.config_dict()), meta)

    @classmethod
    def load(cls, path) -> "MedicationRecommender":
        manifest, arrays = load_checkpoint(path)
        config = manifest["meta"]["config"]
        est = cls(**config)
        vocab = manifest["meta"]["vocab"]
        core = RecommenderCore(
            rng_for(est.seed, "train.init"), est.dim, vocab["n_diseases"],
            vocab["n_procedures"], vocab["n_medications"],
            arrays["rec.buffer.mol_embed"], arrays["rec.buffer.sub_embed"],
            arrays["rec.buffer.membership"],
            per_visit_distill=est.per_visit_distill)
        load_into(core.parameters(),
                  {k: v for k, v in arrays.items() if not k.startswith("rec.buffer.")})
        est.core_ = core
        est.vocab_ = vocab
        est.history_ = []
        return est
