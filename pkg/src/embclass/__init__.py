"""Learning-free classification and evaluation over precomputed embeddings.

The package operates purely on embedding stores produced elsewhere: it
classifies images by cosine similarity to class prompt embeddings, by
exact k-nearest-neighbor search in image-embedding space, or by a
precision-gated combination of the two, and ships the evaluation battery
(top-1 / set-membership accuracy, per-class statistics, oracle upper
bounds, few-shot protocol with confidence intervals) used to compare them.
"""

from .evaluation import (
    ClassOracleResult,
    EvalReport,
    FewShotCell,
    FewShotResult,
    ShiftReport,
    accuracy_shift,
    ci_95,
    class_level_oracle,
    double_oracle,
    few_shot_eval,
    few_shot_trials,
    ground_truth,
    image_level_oracle,
    per_class_accuracy,
    real_accuracy,
    top1_accuracy,
)
from .fusion import (
    CvResult,
    FusionModel,
    PrecisionTable,
    fuse_predict,
    fuse_predictions,
    per_class_precision,
    select_k_cv,
    train_fusion,
)
from .knn import (
    K_GRID_DEFAULT,
    NeighborList,
    classify_knn,
    exclude_self,
    load_neighbors,
    save_neighbors,
    sweep_k,
    top_k,
    vote,
    vote_prefixes,
)
from .numerics import l2_normalize
from .predictions import GroundTruth, PredictionSet, VariantFamily
from .store import (
    BadMagicError,
    ChecksumError,
    ClassCatalog,
    DatasetManifest,
    Diagnostic,
    EmbeddingStore,
    InvariantError,
    Labels,
    PromptBank,
    SidecarError,
    StoreError,
    TruncatedFileError,
    UnsupportedVersionError,
    data_sha256,
    load_store,
    save_store,
    subset,
    validate_store,
)
from .zeroshot import (
    ClassPrototypeMatrix,
    TemplateSelection,
    build_prototypes,
    classify_zeroshot,
    load_prototypes,
    named_preset,
    preset_avg,
    preset_avg_prime,
    prompt_space_knn,
    save_prototypes,
    single_template,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "ChecksumError",
    "ClassCatalog",
    "ClassOracleResult",
    "ClassPrototypeMatrix",
    "CvResult",
    "DatasetManifest",
    "Diagnostic",
    "EmbeddingStore",
    "EvalReport",
    "FewShotCell",
    "FewShotResult",
    "FusionModel",
    "GroundTruth",
    "InvariantError",
    "K_GRID_DEFAULT",
    "Labels",
    "NeighborList",
    "PrecisionTable",
    "PredictionSet",
    "PromptBank",
    "ShiftReport",
    "SidecarError",
    "StoreError",
    "TemplateSelection",
    "TruncatedFileError",
    "UnsupportedVersionError",
    "VariantFamily",
    "accuracy_shift",
    "build_prototypes",
    "ci_95",
    "class_level_oracle",
    "classify_knn",
    "classify_zeroshot",
    "data_sha256",
    "double_oracle",
    "exclude_self",
    "few_shot_eval",
    "few_shot_trials",
    "fuse_predict",
    "fuse_predictions",
    "ground_truth",
    "image_level_oracle",
    "l2_normalize",
    "load_neighbors",
    "load_prototypes",
    "load_store",
    "named_preset",
    "per_class_accuracy",
    "per_class_precision",
    "preset_avg",
    "preset_avg_prime",
    "prompt_space_knn",
    "real_accuracy",
    "save_neighbors",
    "save_prototypes",
    "save_store",
    "select_k_cv",
    "single_template",
    "subset",
    "sweep_k",
    "top1_accuracy",
    "top_k",
    "train_fusion",
    "validate_store",
    "vote",
    "vote_prefixes",
]
