"""Bi-temporal semantic change detection: training, evaluation, prediction and ablation."""

import json

import numpy as np
import torch  # noqa: F401  loads libtorch before the extension

from . import _scd
from ._scd import ScdError, ablate, evaluate, loss_terms, lr_at, predict, synth_gen, train

__all__ = [
    "ScdError",
    "ablate",
    "default_config",
    "evaluate",
    "loss_terms",
    "lr_at",
    "predict",
    "scd_metrics",
    "synth_gen",
    "train",
]


def default_config():
    return json.loads(_scd.default_config_json())


def scd_metrics(pred1, pred2, gt1, gt2, num_classes):
    arrays = [np.asarray(a, dtype=np.int64) for a in (pred1, pred2, gt1, gt2)]
    return json.loads(_scd.scd_metrics_json(*arrays, num_classes))
