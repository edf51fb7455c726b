"""Pyramid attention-gated UNet for scribble-supervised segmentation (C++ core)."""

from ._pyag import (
    Error,
    UNet,
    compactness_loss,
    dice,
    evaluate,
    hausdorff,
    iou,
    load_model,
    pce_loss,
    self_consistency_loss,
    synthesize_scribbles,
    synthetic_sample,
    train,
    wilcoxon,
)

UNLABELED = -1

__all__ = [
    "Error",
    "UNLABELED",
    "UNet",
    "compactness_loss",
    "dice",
    "evaluate",
    "hausdorff",
    "iou",
    "load_model",
    "pce_loss",
    "self_consistency_loss",
    "synthesize_scribbles",
    "synthetic_sample",
    "train",
    "wilcoxon",
]
