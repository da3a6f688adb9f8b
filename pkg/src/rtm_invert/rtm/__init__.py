"""Forest reflectance forward model with reference and differentiable paths."""

from .bands import BAND_NAMES, BandSet, load_band_set, resample_to_bands, resample_weights
from .model import (
    ForwardModel, Spectrum, canopy_layer, forest_model, forward, leaf_model,
)
from .pack import CoefficientPack, default_pack, load_coefficient_pack, make_default_pack, save_coefficient_pack

__all__ = [
    "BAND_NAMES", "BandSet", "CoefficientPack", "ForwardModel", "Spectrum", "canopy_layer",
    "default_pack", "forest_model", "forward", "leaf_model", "load_band_set",
    "load_coefficient_pack", "make_default_pack", "resample_to_bands", "resample_weights",
    "save_coefficient_pack",
]
