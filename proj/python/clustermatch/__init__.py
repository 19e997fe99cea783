"""Bias-corrected matching estimators for clustered observational data."""

from ._core import (
    ClusterMatchError,
    Dataset,
    MatchResult,
    balance,
    box_cox,
    box_cox_fit,
    estimate,
    g_transform,
    make_dataset,
    match,
    read_csv,
    simulate,
    treatment_probability,
)

__all__ = [
    "ClusterMatchError",
    "Dataset",
    "MatchResult",
    "balance",
    "box_cox",
    "box_cox_fit",
    "estimate",
    "g_transform",
    "make_dataset",
    "match",
    "read_csv",
    "simulate",
    "treatment_probability",
]
