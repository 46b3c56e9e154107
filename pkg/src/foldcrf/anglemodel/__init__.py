"""Sequence-to-angle-state models (CRF1, CRF2, CNF) and their training."""

from foldcrf.anglemodel.library import AngleStateLibrary, assign_labels, estimate_state_library
from foldcrf.anglemodel.model import (
    AngleModel,
    Observation,
    TrainingExample,
    label_feature_value,
    log_likelihood_grad,
    potentials,
    sequence_log_prob,
)
from foldcrf.anglemodel.train import evaluate_f1, f1_score, fit, train

__all__ = [
    "AngleModel",
    "AngleStateLibrary",
    "Observation",
    "TrainingExample",
    "assign_labels",
    "estimate_state_library",
    "evaluate_f1",
    "f1_score",
    "fit",
    "label_feature_value",
    "log_likelihood_grad",
    "potentials",
    "sequence_log_prob",
    "train",
]
