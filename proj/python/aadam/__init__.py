"""Semantic relatedness toolkit: adapters, MT augmentation and zero-shot transfer."""

from ._core import (
    DataError,
    Error,
    LeakageError,
    NumericError,
    UsageError,
    average_ranks,
    band_counts,
    dice,
    format_x100,
    kfold_assign,
    linguistic_distance,
    load_config,
    model_hash,
    overlap_corpus,
    parameter_count,
    pearson,
    relatedness_curve,
    run_command,
    spearman,
    tokenize,
)

__all__ = [
    "DataError",
    "Error",
    "LeakageError",
    "NumericError",
    "UsageError",
    "average_ranks",
    "band_counts",
    "dice",
    "format_x100",
    "kfold_assign",
    "linguistic_distance",
    "load_config",
    "model_hash",
    "overlap_corpus",
    "parameter_count",
    "pearson",
    "relatedness_curve",
    "run_command",
    "spearman",
    "tokenize",
]
