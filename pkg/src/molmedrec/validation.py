"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .data import Catalog, DataError, PatientRecord

__all__ = ["check_records", "check_ddi_matrix", "check_catalog", "check_vocab_sizes"]


def check_vocab_sizes(n_diseases: int, n_procedures: int, n_medications: int) -> None:
    for name, value in (("n_diseases", n_diseases), ("n_procedures", n_procedures),
                        ("n_medications", n_medications)):
        if int(value) != value or value <= 0:
            raise DataError(f"{name} must be a positive integer, got {value!r}")


def check_records(records: list[PatientRecord], n_diseases: int,
                  n_procedures: int, n_medications: int) -> None:
    bounds = {"diseases": n_diseases, "procedures": n_procedures,
              "medications": n_medications}
    for rec in records:
        if not rec.visits:
            raise DataError(f"patient {rec.patient_id!r} has no visits")
        for v in rec.visits:
            for field_name, size in bounds.items():
                for i in getattr(v, field_name):
                    if not 0 <= i < size:
                        raise DataError(
                            f"patient {rec.patient_id!r}: {field_name} index {i} "
                            f"out of range (vocabulary size {size})")


def check_ddi_matrix(ddi: np.ndarray, n_medications: int) -> None:
    if ddi.shape != (n_medications, n_medications):
        raise DataError(f"DDI matrix shape {ddi.shape} does not match "
                        f"{n_medications} medications")
    if not np.array_equal(ddi, ddi.T):
        raise DataError("DDI matrix must be symmetric")
    if np.any(np.diag(ddi) != 0):
        raise DataError("DDI matrix must have a zero diagonal")


def check_catalog(catalog: Catalog, n_medications: int) -> None:
    if catalog.n_drugs != n_medications:
        raise DataError(f"catalog has {catalog.n_drugs} drugs, expected "
                        f"{n_medications}")
