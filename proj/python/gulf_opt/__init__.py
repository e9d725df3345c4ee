"""Guided functional-gradient training (GULF) with a C++ core."""

import json

from ._core import (
    ConfigError,
    GulfError,
    bregman,
    checkpoint_evaluate,
    checkpoint_forward,
    ensemble_predict,
    guide_step_l2,
    guide_step_loss_generator,
    guide_step_mirror_exact,
    log_sum_exp,
    loss_grad,
    loss_value,
    stable_softmax,
    verify_suites,
)
from . import _core

__all__ = [
    "ConfigError",
    "GulfError",
    "bregman",
    "checkpoint_evaluate",
    "checkpoint_forward",
    "ensemble_predict",
    "gen_synthetic",
    "guide_step_l2",
    "guide_step_loss_generator",
    "guide_step_mirror_exact",
    "log_sum_exp",
    "loss_grad",
    "loss_value",
    "run_experiment",
    "run_verify",
    "stable_softmax",
    "verify_suites",
]


def run_experiment(config, force=False):
    """Run an experiment from a config dict and return its summary dict."""
    return json.loads(_core.run_experiment(json.dumps(config), force))


def run_verify(suite, seed=0):
    return json.loads(_core.run_verify(suite, seed))


def gen_synthetic(**spec):
    """Returns ((x_train, y_train), (x_test, y_test))."""
    return _core.gen_synthetic(json.dumps(spec))
