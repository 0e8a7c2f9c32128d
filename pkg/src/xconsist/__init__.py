"""Cross-task consistency toolkit.

Measures how consistently a multi-task model ranks gold outputs against
meaning-altering contrast candidates across task pairs, trains a
desk-scale scorer with a differentiable rank-alignment objective, and
reproduces the accompanying simulation, calibration, and contrast-set
generation procedures.
"""

from .core import (
    BundleValidationError,
    ContrastEntry,
    ContrastLoglik,
    ContrastSample,
    EvaluationBundle,
    LikelihoodRecord,
    PerturbationMode,
    TaskRef,
    build_bundle,
    dataset_stats,
    parse_bundle,
    parse_samples_jsonl,
    write_records_jsonl,
    write_samples_jsonl,
)
from .metrics import (
    ConsistencyReport,
    EmptyEvaluationError,
    PairwiseJudgement,
    build_report,
    consistency_at_k,
    judge_pair,
    preference_accuracy_at_k,
    rank_contrasts_by_difficulty,
    rho_rank,
)
from .softrank import (
    RankDirection,
    RankJacobian,
    SoftRankConfig,
    combined_loss,
    consistency_loss,
    soft_rank,
    soft_rank_jacobian,
)

__version__ = "0.1.0"

__all__ = [
    "BundleValidationError",
    "ConsistencyReport",
    "ContrastEntry",
    "ContrastLoglik",
    "ContrastSample",
    "EmptyEvaluationError",
    "EvaluationBundle",
    "LikelihoodRecord",
    "PairwiseJudgement",
    "PerturbationMode",
    "RankDirection",
    "RankJacobian",
    "SoftRankConfig",
    "TaskRef",
    "build_bundle",
    "build_report",
    "combined_loss",
    "consistency_at_k",
    "consistency_loss",
    "dataset_stats",
    "judge_pair",
    "parse_bundle",
    "parse_samples_jsonl",
    "preference_accuracy_at_k",
    "rank_contrasts_by_difficulty",
    "rho_rank",
    "soft_rank",
    "soft_rank_jacobian",
    "write_records_jsonl",
    "write_samples_jsonl",
    "__version__",
]
