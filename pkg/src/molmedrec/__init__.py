"""Medication recommendation with bimodal molecular substructure knowledge.

The package is organized around two sklearn-style estimators:

- :class:`molmedrec.estimator.ContrastiveEncoderPretrainer` aligns a 2D graph
  encoder with a 3D geometric encoder over paired molecule views.
- :class:`molmedrec.estimator.MedicationRecommender` fits the full visit-level
  substructure-distillation recommender on patient records and predicts
  medication sets.

Everything underneath (SMILES/SDF parsing, fragment decomposition, the
autograd substrate, losses, metrics, synthetic data) is importable on its own.
"""

__version__ = "0.1.0"
