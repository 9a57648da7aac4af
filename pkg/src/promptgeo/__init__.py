"""Geometry-aware prompt tuning for few-shot out-of-distribution detection.

The engine trains a prompt matrix over cached vision-language embeddings,
regularizing foreground features into the prompt subspace and background
features out of it, and scores test samples with max-softmax detection
scores evaluated by exact threshold-free metrics.
"""

from .embedstore import (
    ClassTable,
    Dataset,
    DatasetHeader,
    EmbeddingRecord,
    ValidationReport,
    read_dataset,
    validate_dataset,
    write_dataset,
)
from .encoder import SurrogateEncoder, encode_all, encode_class, load_frozen
from .errors import (
    ConfigError,
    DataError,
    DegenerateTextFeatureError,
    EmptyBatchError,
    EmptySetError,
    FormatError,
    IoError,
    NumericalError,
    PromptGeoError,
    SchemaError,
    SingularGramError,
    ZeroFeatureError,
)
from .grad import finite_diff_check, loss_and_grad, make_check_instance, run_gradcheck
from .kernels import active_backend_name, available_backends, set_backend
from .losses import LossBreakdown, LossWeights, batch_loss, composite_loss
from .metrics import DetectionReport, auroc, build_report, fpr_at_95_tpr, id_accuracy
from .regions import RegionPartition, SoftmaxConfig, class_probs, partition_regions
from .scoring import detect, glmcm_score, mcm_score, score_dataset
from .subspace import (
    PromptMatrix,
    alignment_ratios,
    gram_inverse,
    project_complement,
    project_onto,
    projection_pair,
)
from .synth import SynthConfig, SynthResult, generate, write_synth
from .trainer import (
    TrainConfig,
    TrainResult,
    evaluate,
    init_prompts,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ClassTable", "Dataset", "DatasetHeader", "EmbeddingRecord",
    "ValidationReport", "read_dataset", "validate_dataset", "write_dataset",
    "SurrogateEncoder", "encode_all", "encode_class", "load_frozen",
    "PromptGeoError", "ConfigError", "DataError", "DegenerateTextFeatureError",
    "EmptyBatchError", "EmptySetError", "FormatError", "IoError",
    "NumericalError", "SchemaError", "SingularGramError", "ZeroFeatureError",
    "finite_diff_check", "loss_and_grad", "make_check_instance", "run_gradcheck",
    "active_backend_name", "available_backends", "set_backend",
    "LossBreakdown", "LossWeights", "batch_loss", "composite_loss",
    "DetectionReport", "auroc", "build_report", "fpr_at_95_tpr", "id_accuracy",
    "RegionPartition", "SoftmaxConfig", "class_probs", "partition_regions",
    "detect", "glmcm_score", "mcm_score", "score_dataset",
    "PromptMatrix", "alignment_ratios", "gram_inverse", "project_complement",
    "project_onto", "projection_pair",
    "SynthConfig", "SynthResult", "generate", "write_synth",
    "TrainConfig", "TrainResult", "evaluate", "init_prompts",
    "load_checkpoint", "save_checkpoint", "train",
    "__version__",
]
