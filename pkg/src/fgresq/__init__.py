"""Fine-grained image quality workbench.

Pipeline: manifest ingestion → candidate pair generation → two-step
filtration (MOS-gap + indistinguishability) → pairwise annotation →
dual-branch quality model training → binned evaluation.
"""

from .datamodel import (
    DatasetManifest,
    ImageRecord,
    PairRecord,
    SceneDescriptor,
    SplitSpec,
    load_manifest,
    normalize_mos,
    save_manifest,
    split_by_pairs,
)
from .errors import FgresqError
from .filtration import (
    JndCalibration,
    calibrate_jnd_threshold,
    compute_jnd_map,
    compute_ssim,
    generate_pairs,
    run_filtration,
)
from .metrics import (
    binned_correlation,
    consistency_analysis,
    pairwise_accuracy,
    plcc,
    psnr,
    srcc,
)
from .model import FGResQ, ModelConfig, contrastive_alignment_loss
from .losses import fidelity_loss_scene, ranking_loss, scene_loss, total_loss

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest",
    "ImageRecord",
    "PairRecord",
    "SceneDescriptor",
    "SplitSpec",
    "load_manifest",
    "save_manifest",
    "normalize_mos",
    "split_by_pairs",
    "FgresqError",
    "JndCalibration",
    "calibrate_jnd_threshold",
    "compute_jnd_map",
    "compute_ssim",
    "generate_pairs",
    "run_filtration",
    "psnr",
    "srcc",
    "plcc",
    "pairwise_accuracy",
    "binned_correlation",
    "consistency_analysis",
    "FGResQ",
    "ModelConfig",
    "contrastive_alignment_loss",
    "fidelity_loss_scene",
    "scene_loss",
    "ranking_loss",
    "total_loss",
    "__version__",
]
