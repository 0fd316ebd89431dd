"""Transfer-learning classifiers for two-class CT images: a truncated frozen
Inception-style backbone, a dense head trained with RMSprop, and the
evaluation/report tooling around it."""

from ._accel import get_backend, set_backend
from .augment import AffineTransform, AugmentConfig, apply_affine, augmented_batches, sample_transform
from .dataset import ClassLabel, DatasetManifest, ImageSample, hold_out_split, load_image, scan_dataset
from .metrics import ConfusionCounts, MetricValues, confusion_counts, f1_score, rates
from .model import BackboneSpec, ClassifierModel, HeadSpec, build_classifier, forward, truncate_backbone
from .report import ComparisonRow, OverfitDiagnosis, diagnose, render_comparison, render_curves, render_epoch_tables
from .training import (
    EpochRecord,
    StopReason,
    StopRule,
    TrainConfig,
    TrainingRun,
    binary_cross_entropy,
    early_stop_check,
    rmsprop_step,
    train,
)

__version__ = "0.1.0"
