"""Quaternion recurrent networks with a real-to-quaternion front end.

Layers lower quaternion arithmetic to structured real matrices, so gradients
come from a small reverse-mode autograd over plain numpy arrays and are
cross-checked against finite differences and the exact algebra in qnn.quat.
"""

from qnn.autograd import Tensor, no_grad
from qnn.config import ModelConfig
from qnn.data import SynthSpec, generate_synthetic, read_features, write_features
from qnn.quat import Quaternion, conjugate, hamilton, norm, normalize, to_matrix
from qnn.recurrent import build_model, count_params, param_breakdown, symbolic_param_counts
from qnn.selfcheck import run_selfcheck
from qnn.training import evaluate, train

__all__ = [
    "ModelConfig",
    "Quaternion",
    "SynthSpec",
    "Tensor",
    "build_model",
    "conjugate",
    "count_params",
    "evaluate",
    "generate_synthetic",
    "hamilton",
    "no_grad",
    "norm",
    "normalize",
    "param_breakdown",
    "read_features",
    "run_selfcheck",
    "symbolic_param_counts",
    "to_matrix",
    "train",
    "write_features",
]
