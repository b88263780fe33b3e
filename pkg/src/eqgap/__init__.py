"""Deformable image registration regularized by the Neo-Hookean equilibrium gap."""

__version__ = "0.1.0"

from .engine import RegistrationConfig, RegistrationResult, register
from .estimator import EquilibriumGapRegistration
from .field import ControlGrid, sample_field
from .image import Image, LandmarkSet, Mask, load_landmarks, load_metaimage, save_metaimage
from .mechanics import MaterialParams, equilibrium_gap, gap_penalty, gap_sensitivities, lame_from_youngs

__all__ = [
    "ControlGrid",
    "EquilibriumGapRegistration",
    "Image",
    "LandmarkSet",
    "Mask",
    "MaterialParams",
    "RegistrationConfig",
    "RegistrationResult",
    "equilibrium_gap",
    "gap_penalty",
    "gap_sensitivities",
    "lame_from_youngs",
    "load_landmarks",
    "load_metaimage",
    "register",
    "sample_field",
    "save_metaimage",
]
