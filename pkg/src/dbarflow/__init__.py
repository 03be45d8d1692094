"""Numerical toolkit for the dbar-harmonic map heat flow between almost Hermitian manifolds."""

__version__ = "0.1.0"

from .discrete import MapField, TwistData, VariationField, derivative, integrate
from .flow import DbarHeatFlow, FlowConfig, run
from .functionals import energy, tension
from .hopf import FrameFlow, FrameState, family_map, frame_flow, frame_vector_field
from .models import (
    ConfigError,
    EuclideanModel,
    FlatTorusModel,
    HopfSurfaceTarget,
    RoundSphereModel,
    build_model,
    hopf_torus_source,
)
from .spectrum import SphereSpectrum

__all__ = [
    "ConfigError",
    "DbarHeatFlow",
    "EuclideanModel",
    "FlatTorusModel",
    "FlowConfig",
    "FrameFlow",
    "FrameState",
    "HopfSurfaceTarget",
    "MapField",
    "RoundSphereModel",
    "SphereSpectrum",
    "TwistData",
    "VariationField",
    "build_model",
    "derivative",
    "energy",
    "family_map",
    "frame_flow",
    "frame_vector_field",
    "hopf_torus_source",
    "integrate",
    "run",
    "tension",
]
