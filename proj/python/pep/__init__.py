# Copyright 2026 The pep Authors
# SPDX-License-Identifier: Apache-2.0
"""Perceive-excavate-purify instance segmentation.

The heavy lifting lives in the compiled ``_pep`` extension; this package adds
dict-based config helpers on top of it.
"""

import json

from ._pep import (
    IntegrityError,
    IoError,
    Model,
    NumericError,
    ShapeError,
    ValidationError,
    cross_entropy,
    evaluate,
    generate_scene,
    gradcheck,
    load_dataset,
    mask_iou,
    render_mask,
    threshold_components,
)
from . import _pep

__all__ = [
    "IntegrityError",
    "IoError",
    "Model",
    "NumericError",
    "ShapeError",
    "ValidationError",
    "config",
    "create_model",
    "cross_entropy",
    "evaluate",
    "generate_scene",
    "gradcheck",
    "load_dataset",
    "mask_iou",
    "render_mask",
    "threshold_components",
]


def config(overrides=None):
    """Returns the full run config as a dict, with optional section overrides."""
    text = json.dumps(overrides or {})
    return json.loads(_pep.normalize_config(text))


def create_model(overrides=None, seed=0):
    """Builds a model from a (possibly partial) config dict."""
    return Model(json.dumps(config(overrides)), seed)
