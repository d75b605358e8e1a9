"""Debiasing interventions: data (CDA), features (INLP), training (decoupled), predictions (EO)."""

from .cda import cda_augment
from .decoupled import DecoupledModel, train_decoupled
from .eo import EoPolicy, eo_apply, eo_calibrate
from .inlp import InlpParams, Projection, inlp_apply, inlp_fit, load_projection, save_projection

__all__ = [
    "cda_augment",
    "DecoupledModel",
    "train_decoupled",
    "EoPolicy",
    "eo_apply",
    "eo_calibrate",
    "InlpParams",
    "Projection",
    "inlp_apply",
    "inlp_fit",
    "load_projection",
    "save_projection",
]
