"""Per-class injective encoders that hide a private class from eavesdroppers.

A sender who knows its class ``c`` transmits ``z = R_c(x)``. The recipient,
who also knows ``c``, inverts ``R_c`` exactly; an eavesdropper who sees only
``z`` should learn as little as possible about ``c``, measured by the mutual
information between ``z`` and ``c``.
"""

from .adversary import (
    ConfusionMatrix,
    VoteClassifier,
    bayes_attack_accuracy,
    classify,
    evaluate,
    majority_baseline,
    train_vote_classifier,
)
from .closed_form import (
    fit,
    fit_exponential,
    fit_gamma,
    fit_normal,
    fit_uniform,
    matrix_inv_sqrt,
    standardization_check,
)
from .core import (
    Family,
    LabeledDataset,
    NumericError,
    PrivacyMapping,
    PrivmapError,
    ValidationError,
    decode,
    decode_dataset,
    encode,
    encode_dataset,
    validate_mapping,
)
from .data import BodyRecord, label_weight_status, split, synth_cohort
from .density import (
    Grid,
    HistogramModel,
    build_histogram,
    entropy,
    equal_width_grid,
    expected_posterior_kl,
    kl_divergence,
    mutual_information,
    posterior,
)
from .experiment import run_evaluation
from .io import load_mapping, parse_dataset, parse_mapping, save_mapping, serialize_mapping, write_dataset
from .learner import AffineSearchSpace, GAConfig, fitness, learn, mapping_mi

__version__ = "0.1.0"

__all__ = [
    "AffineSearchSpace",
    "BodyRecord",
    "ConfusionMatrix",
    "Family",
    "GAConfig",
    "Grid",
    "HistogramModel",
    "LabeledDataset",
    "NumericError",
    "PrivacyMapping",
    "PrivmapError",
    "ValidationError",
    "VoteClassifier",
    "bayes_attack_accuracy",
    "build_histogram",
    "classify",
    "decode",
    "decode_dataset",
    "encode",
    "encode_dataset",
    "entropy",
    "equal_width_grid",
    "evaluate",
    "expected_posterior_kl",
    "fit",
    "fit_exponential",
    "fit_gamma",
    "fit_normal",
    "fit_uniform",
    "fitness",
    "kl_divergence",
    "label_weight_status",
    "learn",
    "load_mapping",
    "majority_baseline",
    "mapping_mi",
    "matrix_inv_sqrt",
    "mutual_information",
    "parse_dataset",
    "parse_mapping",
    "posterior",
    "run_evaluation",
    "save_mapping",
    "serialize_mapping",
    "split",
    "standardization_check",
    "synth_cohort",
    "train_vote_classifier",
    "validate_mapping",
    "write_dataset",
]
