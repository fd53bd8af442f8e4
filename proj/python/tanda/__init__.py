"""Answer-sentence-selection toolkit: dataset construction, two-step
transfer/adapt fine-tuning, ranking metrics, and noise-robustness tools."""

from tanda._core import (
    ConfigError,
    DataError,
    NumericError,
    __version__,
    average_precision,
    binarize,
    build_asnq,
    evaluate_checkpoint,
    evaluate_files,
    grad_check,
    inject_noise,
    precision_at_1,
    rank,
    reciprocal_rank,
    sample_indices,
    score_file,
    stats,
    synth,
    train_ft,
    train_tanda,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "__version__",
    "average_precision",
    "binarize",
    "build_asnq",
    "evaluate_checkpoint",
    "evaluate_files",
    "grad_check",
    "inject_noise",
    "precision_at_1",
    "rank",
    "reciprocal_rank",
    "sample_indices",
    "score_file",
    "stats",
    "synth",
    "train_ft",
    "train_tanda",
]
