"""Python access to the contrastlab core."""

import json

from . import _core
from ._core import (
    ConfigError,
    DataIntegrityError,
    IoError,
    OnsetReport,
    TrainingAborted,
    compare_onsets,
    cosine_similarity,
    decompose_loss,
    detect_onset,
    ntxent_batch_loss,
    ntxent_loss_with_gradient,
    ntxent_pair_loss,
    read_series,
    similarity_matrix,
)

__all__ = [
    "ConfigError",
    "DataIntegrityError",
    "IoError",
    "OnsetReport",
    "TrainingAborted",
    "compare_onsets",
    "cosine_similarity",
    "decompose_loss",
    "default_config",
    "detect_onset",
    "make_views",
    "ntxent_batch_loss",
    "ntxent_loss_with_gradient",
    "ntxent_pair_loss",
    "read_series",
    "run",
    "similarity_matrix",
    "validation_errors",
]


def default_config(preset="tiny"):
    """Full config dict for the 'tiny' or 'cifar10' preset."""
    return json.loads(_core.default_config_json(preset))


def validation_errors(config):
    return _core.validation_errors(json.dumps(config))


def make_views(image, seed, augmentation=None):
    """Two augmented views of a (3, H, W) float image in [0, 1]."""
    doc = {"augmentation": augmentation} if augmentation is not None else None
    return _core.make_views(image, seed, json.dumps(doc) if doc else "")


def run(config):
    """Train from a config dict (missing keys take library defaults)."""
    return _core.run_json(json.dumps(config))
