"""Python bindings for the APPO simulation lab."""

import json
from os import PathLike

import numpy as np

from . import _core
from ._core import ConfigError, TRANSCRIPT_HEADER, query_bound

__all__ = [
    "ConfigError",
    "TRANSCRIPT_HEADER",
    "check_run_directory",
    "derive_hyperparams",
    "generate_instance",
    "query_bound",
    "run_adpo",
    "run_experiment",
    "solve_mle",
]


def _args(config, overrides):
    return json.dumps(config or {}), [str(o) for o in (overrides or [])]


def run_experiment(config=None, overrides=None):
    """Runs every seed (and sweep setting) of a config; returns the summary dict."""
    return json.loads(_core.run_experiment(*_args(config, overrides)))


def generate_instance(config=None, overrides=None, seed=1):
    return json.loads(_core.generate_instance(*_args(config, overrides), seed))


def check_run_directory(path: str | PathLike):
    return json.loads(_core.check_run_directory(str(path)))


def solve_mle(z, outcomes, lambda_=1.0):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return _core.solve_mle(z, [int(o) for o in outcomes], float(lambda_))


def run_adpo(config=None, overrides=None, seed=1):
    return json.loads(_core.run_adpo(*_args(config, overrides), seed))


def derive_hyperparams(dim, num_actions, min_gap, feature_bound=2.0, param_bound=1.0, delta=0.05):
    return json.loads(
        _core.derive_hyperparams(dim, num_actions, min_gap, feature_bound, param_bound, delta)
    )
