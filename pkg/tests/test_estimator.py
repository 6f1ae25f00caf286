"""Estimator behavior on a miniature synthetic problem."""

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from molmedrec.baseline import FrequencyBaseline
from molmedrec.data import (
    PatientRecord,
    SyntheticSpec,
    Visit,
    round_robin_catalog,
    split_patients,
    synth_generate,
)
from molmedrec.estimator import ContrastiveEncoderPretrainer, MedicationRecommender
from molmedrec.metrics import evaluate_visits


@pytest.fixture(scope="module")
def tiny_problem(catalog):
    spec = SyntheticSpec(n_diseases=15, n_procedures=8, n_medications=12,
                         n_patients=30, n_clusters=4, seed=7)
    records, _, ddi = synth_generate(spec)
    cat = round_robin_catalog(spec.n_medications, catalog)
    return spec, records, ddi, cat


def _fit_kwargs(spec, ddi, cat):
    return dict(catalog=cat, ddi=ddi, n_diseases=spec.n_diseases,
                n_procedures=spec.n_procedures,
                n_medications=spec.n_medications)


def _tiny_model(**over):
    params = dict(train_epochs=2, use_pretrain=False, seed=0)
    params.update(over)
    return MedicationRecommender(**params)


def test_fit_predict_shapes(tiny_problem):
    spec, records, ddi, cat = tiny_problem
    est = _tiny_model().fit(records[:20], **_fit_kwargs(spec, ddi, cat))
    probs = est.predict_proba(records[20:25])
    preds = est.predict(records[20:25])
    for rec, pp, hp in zip(records[20:25], probs, preds):
        assert len(pp) == len(rec.visits)
        for p, h in zip(pp, hp):
            assert p.shape == (spec.n_medications,)
            assert np.all((p > 0) & (p < 1))
            assert set(np.unique(h)) <= {0.0, 1.0}
            np.testing.assert_array_equal(h, (p > 0.5).astype(float))


def test_predict_before_fit_raises():
    with pytest.raises(NotFittedError):
        MedicationRecommender().predict([PatientRecord("x", [Visit([0], [0], [0])])])


def test_fit_is_deterministic(tiny_problem):
    spec, records, ddi, cat = tiny_problem
    a = _tiny_model().fit(records[:15], **_fit_kwargs(spec, ddi, cat))
    b = _tiny_model().fit(records[:15], **_fit_kwargs(spec, ddi, cat))
    for (ka, pa), (kb, pb) in zip(sorted(a.core_.parameters().items()),
                                  sorted(b.core_.parameters().items())):
        assert ka == kb and pa.data.tobytes() == pb.data.tobytes()


def test_save_load_roundtrip_preserves_predictions(tiny_problem, tmp_path):
    spec, records, ddi, cat = tiny_problem
    est = _tiny_model().fit(records[:15], **_fit_kwargs(spec, ddi, cat))
    path = tmp_path / "model.ckpt"
    est.save(path)
    loaded = MedicationRecommender.load(path)
    want = est.predict_proba(records[15:20])
    got = loaded.predict_proba(records[15:20])
    for a_patient, b_patient in zip(want, got):
        for a, b in zip(a_patient, b_patient):
            np.testing.assert_array_equal(a, b)


def test_validation_rejects_mismatched_inputs(tiny_problem):
    spec, records, ddi, cat = tiny_problem
    est = _tiny_model()
    with pytest.raises(Exception, match="catalog has"):
        est.fit(records[:5], catalog=round_robin_catalog(5, cat), ddi=ddi,
                n_diseases=spec.n_diseases, n_procedures=spec.n_procedures,
                n_medications=spec.n_medications)
    with pytest.raises(Exception, match="DDI matrix shape"):
        est.fit(records[:5], catalog=cat, ddi=np.zeros((3, 3)),
                n_diseases=spec.n_diseases, n_procedures=spec.n_procedures,
                n_medications=spec.n_medications)
    bad_ddi = np.zeros((spec.n_medications, spec.n_medications))
    bad_ddi[0, 1] = 1.0  # asymmetric
    with pytest.raises(Exception, match="symmetric"):
        est.fit(records[:5], catalog=cat, ddi=bad_ddi,
                n_diseases=spec.n_diseases, n_procedures=spec.n_procedures,
                n_medications=spec.n_medications)


def test_training_improves_over_epochs(tiny_problem):
    spec, records, ddi, cat = tiny_problem
    est = _tiny_model(train_epochs=6).fit(records, **_fit_kwargs(spec, ddi, cat))
    losses = [row["train_loss"] for row in est.history_]
    assert losses[-1] < losses[0]


def test_get_params_roundtrip():
    est = MedicationRecommender(beta=0.9, seed=3)
    params = est.get_params()
    assert params["beta"] == 0.9 and params["seed"] == 3
    clone = MedicationRecommender(**params)
    assert clone.get_params() == params


def test_ablation_variants_run(tiny_problem):
    spec, records, ddi, cat = tiny_problem
    for kw in ({"per_visit_distill": False}, {"ddi_control": False}):
        est = _tiny_model(**kw).fit(records[:12], **_fit_kwargs(spec, ddi, cat))
        est.predict(records[:3])


def test_pretrainer_estimator(corpus):
    small = sorted(corpus, key=lambda it: it.mol.n_atoms)[:8]
    pre = ContrastiveEncoderPretrainer(epochs=2, batch_size=8, seed=0)
    with pytest.raises(NotFittedError):
        pre.score(small)
    pre.fit(small)
    e2, e3 = pre.transform(small)
    assert e2.shape == (8, 128) and e3.shape == (8, 128)
    assert 0.0 <= pre.score(small) <= 1.0
    assert len(pre.history_) == 2


# -- frequency baseline ---------------------------------------------------------

def test_baseline_noise_free_unique_clusters_recovers_labels():
    # one disease pool per cluster and no noise: per-disease frequencies
    # identify the regimen supersets nearly perfectly
    spec = SyntheticSpec(n_diseases=40, n_procedures=8, n_medications=20,
                         n_patients=60, n_clusters=3, label_noise=0.0,
                         regimen_fraction=1.0, seed=11, ddi_density=0.05)
    try:
        records, _, ddi = synth_generate(spec)
    except Exception:
        pytest.skip("ddi band infeasible for this toy configuration")
    base = FrequencyBaseline().fit(records, n_diseases=40, n_medications=20)
    preds = base.predict(records)
    scores = base.predict_proba(records)
    per_patient = [
        [(s, p, v.multi_hot("medications", 20))
         for s, p, v in zip(sc, pr, rec.visits)]
        for rec, sc, pr in zip(records, scores, preds)
    ]
    assert evaluate_visits(per_patient, ddi)["jaccard"] > 0.3


def test_baseline_before_fit_raises():
    with pytest.raises(NotFittedError):
        FrequencyBaseline().predict([PatientRecord("x", [Visit([0], [], [0])])])


def test_baseline_predicts_k_drugs(tiny_problem):
    spec, records, ddi, cat = tiny_problem
    base = FrequencyBaseline().fit(records, n_diseases=spec.n_diseases,
                                   n_medications=spec.n_medications)
    for patient in base.predict(records[:5]):
        for hot in patient:
            assert hot.sum() == base.k_
