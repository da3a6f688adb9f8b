"""Datasets: synthetic sampling, biased surrogate generation, ingestion, splitting."""

from .dataset import (
    CONIFEROUS, DECIDUOUS, FOREST_TYPE, N_DATES, SPECIES, SPLITS, Dataset, SampleRecord,
    apply_standardization, canonical_species, check_no_leakage, compute_stats,
    invert_standardization, load_dataset, save_dataset, split_by_site, standardize,
)
from .ingest import ingest_csv
from .surrogate import BiasSpec, generate_surrogate_real, species_parameters
from .synthetic import sample_synthetic

__all__ = [
    "BiasSpec", "CONIFEROUS", "DECIDUOUS", "Dataset", "FOREST_TYPE", "N_DATES", "SPECIES",
    "SPLITS", "SampleRecord", "apply_standardization", "canonical_species", "check_no_leakage",
    "compute_stats", "generate_surrogate_real", "ingest_csv", "invert_standardization",
    "load_dataset", "sample_synthetic", "save_dataset", "species_parameters", "split_by_site",
    "standardize",
]
