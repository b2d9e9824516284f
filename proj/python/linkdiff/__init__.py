"""Planar linkage graphs, kinematics and diffusion-based synthesis."""

import json

from ._linkdiff import (
    IoError,
    KinematicError,
    LinkdiffError,
    MechanismGraph,
    ParseError,
    TopologyError,
    chamfer_distance,
    coupler_curve,
    generate_dataset,
    normalize_curve,
    simulate,
    synthesize,
    train,
    validate,
    write_dataset,
)
from ._linkdiff import evaluate_json as _evaluate_json


def evaluate(dataset, checkpoint, **kwargs):
    """Runs the strategy comparison and returns the report as a dict."""
    return json.loads(_evaluate_json(dataset, checkpoint, **kwargs))


__all__ = [
    "IoError",
    "KinematicError",
    "LinkdiffError",
    "MechanismGraph",
    "ParseError",
    "TopologyError",
    "chamfer_distance",
    "coupler_curve",
    "evaluate",
    "generate_dataset",
    "normalize_curve",
    "simulate",
    "synthesize",
    "train",
    "validate",
    "write_dataset",
]
