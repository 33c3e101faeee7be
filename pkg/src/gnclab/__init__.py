"""Simulation and verification of Guess & Check posterior sampling for quantized networks."""

__version__ = "0.1.0"

from .quantnet import (  # noqa: E402
    RELU,
    Activation,
    ConvArch,
    FcArch,
    QuantGrid,
    QuantParams,
    param_count,
)
from .teacher import InputDomain, LabeledSet, TeacherSpec  # noqa: E402
from .sampler import PriorSpec, gnc  # noqa: E402

__all__ = [
    "__version__",
    "RELU",
    "Activation",
    "ConvArch",
    "FcArch",
    "QuantGrid",
    "QuantParams",
    "param_count",
    "InputDomain",
    "LabeledSet",
    "TeacherSpec",
    "PriorSpec",
    "gnc",
]
