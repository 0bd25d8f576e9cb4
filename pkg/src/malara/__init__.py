"""Adversary-aware Naive Bayes malware classification on binary features."""

from .aroa import AroaConfig, AroaDecision, AttackerBeliefs, classify_aroa, classify_aroa_batch
from .attack import Attack, AttackConfig, ObfuscationProfile, metame_profile, obfuscate
from .model import FN_AVERSE, ZERO_ONE, Label, NBModel, UtilityMatrix, classify_eq1, fit, posterior
from .synthetic import Dataset, SyntheticSpec, default_scenario, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AroaConfig",
    "AroaDecision",
    "Attack",
    "AttackConfig",
    "AttackerBeliefs",
    "Dataset",
    "FN_AVERSE",
    "Label",
    "NBModel",
    "ObfuscationProfile",
    "SyntheticSpec",
    "UtilityMatrix",
    "ZERO_ONE",
    "classify_aroa",
    "classify_aroa_batch",
    "classify_eq1",
    "default_scenario",
    "fit",
    "generate_synthetic",
    "metame_profile",
    "obfuscate",
    "posterior",
]
