"""Causal ranking from a proxy treatment.

Thin wrappers over the C++ core: configs go in as dicts, structured results
come back as dicts of numpy arrays or plain JSON values.
"""

import json

import numpy as np

from . import _core
from ._core import (
    ConfigError,
    DataError,
    EstimationError,
    OutcomeModel,
    overlap_fraction,
    rank_and_bucket,
)

__version__ = _core.__version__


def _dump(cfg):
    return json.dumps(cfg or {})


def _f64(v):
    return np.ascontiguousarray(v, dtype=np.float64)


def simulate(config=None, cohort=0):
    """Draw a cohort; returns observed columns plus the ground truth."""
    return _core.simulate(_dump(config), cohort)


def compute_weights(x, a, analysis=None):
    """Propensity fit, trimming and stabilized weights over the retained rows."""
    return _core.compute_weights(_f64(x), _f64(a), _dump(analysis))


def fit_outcome_model(x, a, y, family="linear_wls", weights=None, hyperparams=None):
    w = None if weights is None else _f64(weights)
    return _core.fit_outcome_model(_f64(x), _f64(a), _f64(y), family, w, _dump(hyperparams))


def compute_ite(model, x):
    return _core.compute_ite(model, _f64(x))


def rank_rmse(predicted, truth):
    return _core.rank_rmse(list(map(int, predicted)), list(map(int, truth)))


def spearman(x, y):
    return _core.spearman(list(map(float, x)), list(map(float, y)))


def generate_confounder(x, a, y, config=None):
    return _core.generate_confounder(_f64(x), _f64(a), _f64(y), _dump(config))


def wald_2sls(a, y, z, min_first_stage=0.01):
    return _core.wald_2sls(_f64(a), _f64(y), list(map(int, z)), min_first_stage)


def config_hash(config=None):
    return _core.config_hash(_dump(config))


def run_pipeline(config=None, out_dir=None):
    """Every stage on a simulated cohort; returns the report as a dict."""
    return json.loads(_core.run_pipeline(_dump(config), None if out_dir is None else str(out_dir)))


__all__ = [
    "ConfigError",
    "DataError",
    "EstimationError",
    "OutcomeModel",
    "compute_ite",
    "compute_weights",
    "config_hash",
    "fit_outcome_model",
    "generate_confounder",
    "overlap_fraction",
    "rank_and_bucket",
    "rank_rmse",
    "run_pipeline",
    "simulate",
    "spearman",
    "wald_2sls",
]
