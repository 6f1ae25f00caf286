"""Evaluation metrics over medication multi-hots, plus the bootstrap protocol.

Per-visit metrics follow the set definitions; per-patient values average over
that patient's visits; a patient-set value averages the per-patient values,
except the interaction rate, which pools pair counts over all visits (its
per-visit normalizer is a pair count, so pooling is the stable aggregate).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .util import rng_for

__all__ = [
    "jaccard", "ddi_rate", "f1", "prauc", "avg_meds",
    "evaluate_visits", "EvalReport", "bootstrap_eval", "METRIC_NAMES",
]

METRIC_NAMES = ("jaccard", "ddi_rate", "f1", "prauc", "avg_meds")


def _check_same_length(pred: np.ndarray, true: np.ndarray) -> None:
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")


def jaccard(pred: np.ndarray, true: np.ndarray) -> float:
    """|intersection| / |union|; 1.0 when both sets are empty."""
    _check_same_length(pred, true)
    p, t = pred > 0.5, true > 0.5
    union = np.logical_or(p, t).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, t).sum() / union)


def ddi_rate(visit_preds: list[np.ndarray], ddi: np.ndarray) -> float:
    """Interacting fraction of all predicted unordered pairs, pooled over
    visits; 0 when no visit predicts two or more drugs."""
    hits = 0
    pairs = 0
    for pred in visit_preds:
        idx = np.flatnonzero(pred > 0.5)
        pairs += len(idx) * (len(idx) - 1) // 2
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                if ddi[idx[a], idx[b]]:
                    hits += 1
    return hits / pairs if pairs else 0.0


def f1(pred: np.ndarray, true: np.ndarray) -> float:
    """Harmonic mean of precision and recall; empty prediction counts as
    zero precision; 0 when precision + recall is 0."""
    _check_same_length(pred, true)
    p, t = pred > 0.5, true > 0.5
    inter = np.logical_and(p, t).sum()
    precision = inter / p.sum() if p.sum() else 0.0
    recall = inter / t.sum() if t.sum() else 0.0
    if precision + recall == 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def prauc(scores: np.ndarray, true: np.ndarray) -> float:
    """Step-sum precision@k x delta-recall@k over the full ranked drug list.

    Ties are broken by ascending drug index; no positive labels gives 0 with
    a warning.
    """
    _check_same_length(scores, true)
    t = true > 0.5
    n_pos = int(t.sum())
    if n_pos == 0:
        warnings.warn("prauc: no positive labels; defined as 0")
        return 0.0
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = np.cumsum(t[order])
    ranks = np.arange(1, len(scores) + 1)
    precision_at = hits / ranks
    recall_at = hits / n_pos
    prev = np.concatenate([[0.0], recall_at[:-1]])
    return float((precision_at * (recall_at - prev)).sum())


def avg_meds(visit_preds: list[np.ndarray]) -> float:
    """Mean predicted medication count per visit; 0 for an empty visit list."""
    if not visit_preds:
        return 0.0
    return float(np.mean([float((p > 0.5).sum()) for p in visit_preds]))


def evaluate_visits(per_patient: list[list[tuple[np.ndarray, np.ndarray, np.ndarray]]],
                    ddi: np.ndarray) -> dict[str, float]:
    """Aggregate metrics for (scores, pred, true) triples grouped by patient."""
    jac, f1s, praucs, counts = [], [], [], []
    all_preds: list[np.ndarray] = []
    for visits in per_patient:
        jac.append(np.mean([jaccard(p, t) for _, p, t in visits]))
        f1s.append(np.mean([f1(p, t) for _, p, t in visits]))
        praucs.append(np.mean([prauc(s, t) for s, _, t in visits]))
        counts.append(np.mean([(p > 0.5).sum() for _, p, _ in visits]))
        all_preds.extend(p for _, p, _ in visits)
    return {
        "jaccard": float(np.mean(jac)),
        "ddi_rate": ddi_rate(all_preds, ddi),
        "f1": float(np.mean(f1s)),
        "prauc": float(np.mean(praucs)),
        "avg_meds": float(np.mean(counts)),
    }


@dataclass
class EvalReport:
    rounds: int
    seed: int
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    def table(self) -> str:
        head = f"{'metric':<10} {'mean':>10} {'std':>10}"
        rows = [head, "-" * len(head)]
        for name in METRIC_NAMES:
            rows.append(f"{name:<10} {self.mean[name]:>10.4f} {self.std[name]:>10.4f}")
        return "\n".join(rows)

    def csv(self) -> str:
        rows = ["metric,mean,std"]
        for name in METRIC_NAMES:
            rows.append(f"{name},{self.mean[name]:.10g},{self.std[name]:.10g}")
        return "\n".join(rows) + "\n"


def bootstrap_eval(metric_fn, patients: list, rounds: int = 10,
                   fraction: float = 0.8, seed: int = 0) -> EvalReport:
    """Each round samples ceil(fraction * N) patients without replacement and
    evaluates `metric_fn` on the sample; reports mean and population std."""
    if not patients:
        raise ValueError("empty evaluation set")
    rng = rng_for(seed, "bootstrap")
    n_sample = int(np.ceil(fraction * len(patients)))
    n_sample = min(n_sample, len(patients))
    values: dict[str, list[float]] = {name: [] for name in METRIC_NAMES}
    for _ in range(rounds):
        chosen = rng.choice(len(patients), size=n_sample, replace=False)
        result = metric_fn([patients[i] for i in chosen])
        for name in METRIC_NAMES:
            values[name].append(result[name])
    report = EvalReport(rounds=rounds, seed=seed)
    for name in METRIC_NAMES:
        arr = np.array(values[name])
        report.mean[name] = float(arr.mean())
        report.std[name] = float(arr.std())
    return report
