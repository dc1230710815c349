"""Mesoscopic linear eigenvalue statistics of deformed Wigner and sample covariance matrices."""

import json

from ._mesorm import (
    ModelError,
    NumericalError,
    UsageError,
    density,
    edges,
    limit_bulk_variance,
    limit_edge_variance,
    run_cli,
    spectrum,
    stieltjes,
)
from . import _mesorm

__all__ = [
    "ModelError",
    "NumericalError",
    "UsageError",
    "density",
    "edges",
    "limit_bulk_variance",
    "limit_edge_variance",
    "predict",
    "run_cli",
    "simulate",
    "spectrum",
    "stieltjes",
]


def _overrides(settings):
    return [f"{key}={value}" for key, value in (settings or {}).items()]


def predict(ini="", **settings):
    """Deterministic prediction record. Keyword names use '__' for '.', e.g. ensemble__n=500."""
    return json.loads(_mesorm.predict_json(ini, _overrides(_dotted(settings))))


def simulate(ini="", **settings):
    """Runs a Monte Carlo experiment and returns the report as a dict."""
    return json.loads(_mesorm.simulate_json(ini, _overrides(_dotted(settings))))


def _dotted(settings):
    return {key.replace("__", "."): value for key, value in settings.items()}
