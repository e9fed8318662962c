"""Information-plane analysis toolkit.

Donsker-Varadhan mutual-information estimation, spectral effective
dimensionality, a dynamic information-bottleneck trainer over layer
representations, and information-plane exports.
"""

from .effdim import SpectralMeasure, d_eff, d_eff_of_data
from .errors import IBFlowError
from .flownib import FlowNIBConfig, LayerTrace, TraceRecord, run_flownib
from .mi_estimator import MINEConfig, MIPairBatch, exact_mi_discrete, train_mi_critic
from .reps import RepresentationSet, load_representation_dump
from .scheduler import AlphaSchedule, alpha_at

__version__ = "0.1.0"

__all__ = [
    "AlphaSchedule", "FlowNIBConfig", "IBFlowError", "LayerTrace", "MINEConfig", "MIPairBatch",
    "RepresentationSet", "SpectralMeasure", "TraceRecord", "alpha_at", "d_eff", "d_eff_of_data",
    "exact_mi_discrete", "load_representation_dump", "run_flownib", "train_mi_critic",
]
