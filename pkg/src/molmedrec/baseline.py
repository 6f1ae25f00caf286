"""Per-disease frequency baseline used by the acceptance benchmark."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import PatientRecord

__all__ = ["FrequencyBaseline"]


class FrequencyBaseline(BaseEstimator):
    """Scores each drug by the mean, over the visit's diseases, of
    P(drug | disease) estimated from training visits, then predicts the
    top-k drugs where k is the rounded mean medication count."""

    def __init__(self):
        pass

    def fit(self, records: list[PatientRecord], y=None, *, n_diseases: int,
            n_medications: int):
        counts = np.zeros((n_diseases, n_medications))
        disease_visits = np.zeros(n_diseases)
        global_counts = np.zeros(n_medications)
        med_totals = []
        for rec in records:
            for v in rec.visits:
                hot = v.multi_hot("medications", n_medications)
                med_totals.append(hot.sum())
                global_counts += hot
                for d in v.diseases:
                    counts[d] += hot
                    disease_visits[d] += 1
        seen = disease_visits > 0
        self.conditional_ = np.zeros_like(counts)
        self.conditional_[seen] = counts[seen] / disease_visits[seen, None]
        n_visits = max(len(med_totals), 1)
        self.global_freq_ = global_counts / n_visits
        self.k_ = max(int(round(np.mean(med_totals))), 1) if med_totals else 1
        return self

    def _scores(self, visit) -> np.ndarray:
        if not hasattr(self, "conditional_"):
            raise NotFittedError("call fit() first")
        if visit.diseases:
            return self.conditional_[visit.diseases].mean(axis=0)
        return self.global_freq_.copy()

    def predict_proba(self, records: list[PatientRecord]) -> list[list[np.ndarray]]:
        return [[self._scores(v) for v in rec.visits] for rec in records]

    def predict(self, records: list[PatientRecord]) -> list[list[np.ndarray]]:
        out = []
        for patient in self.predict_proba(records):
            visits = []
            for scores in patient:
                order = np.lexsort((np.arange(len(scores)), -scores))
                hot = np.zeros(len(scores))
                hot[order[:self.k_]] = 1.0
                visits.append(hot)
            out.append(visits)
        return out
