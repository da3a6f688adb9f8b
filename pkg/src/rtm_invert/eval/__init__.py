"""Evaluation: residual statistics, variable recovery, JM separability, ablation and reports."""

from .analysis import (
    ablation_checks, ablation_table, band_residuals, bias_recovery, histograms, injected_bias,
    range_report, residual_means, separability, species_stats, temporal_rows, temporal_series,
    variable_recovery,
)
from .metrics import (
    bhattacharyya, jm_distance, jm_from_b, jm_gaussian, jm_matrix, latent_violations,
    pearson_per_variable, range_violations, split_within_between,
)
from .report import REPORT_FILES, build_report, config_hash, write_report

__all__ = [
    "REPORT_FILES", "ablation_checks", "ablation_table", "band_residuals", "bhattacharyya",
    "bias_recovery", "build_report", "config_hash", "histograms", "injected_bias", "jm_distance",
    "jm_from_b", "jm_gaussian", "jm_matrix", "latent_violations", "pearson_per_variable",
    "range_report", "range_violations", "residual_means", "separability", "species_stats",
    "split_within_between", "temporal_rows", "temporal_series", "variable_recovery", "write_report",
]
