"""
Utility modules for in-bed fall-risk assessment.
"""

from .errors import FallRiskError, DataError, InvariantViolation, exit_code_for
from .feature_engineering import FeatureSet, Label
from .gbdt_classifier import Forest, Hyperparams, fit, load_model, predict, predict_proba, save_model

__all__ = [
    'FallRiskError',
    'DataError',
    'InvariantViolation',
    'exit_code_for',
    'FeatureSet',
    'Label',
    'Forest',
    'Hyperparams',
    'fit',
    'load_model',
    'predict',
    'predict_proba',
    'save_model',
]
