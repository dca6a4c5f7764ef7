from .labels import LabeledSet, build_labeled_set, gen_labels, label_tasks, split
from .mlp import MLPModel, TrainConfig, gradient_check, predict, predict_raw, smooth_targets, train

__all__ = [
    "LabeledSet",
    "MLPModel",
    "TrainConfig",
    "build_labeled_set",
    "gen_labels",
    "gradient_check",
    "label_tasks",
    "predict",
    "predict_raw",
    "smooth_targets",
    "split",
    "train",
]
