"""SPDE simulation, regularity features, surrogates and control (C++ core)."""

import json

import numpy as np

from . import _core
from ._core import (
    ConfigError,
    Policy,
    RunError,
    SolverError,
    Surrogate,
    load_dataset,
    set_threads,
)

__all__ = [
    "ConfigError",
    "Policy",
    "RunError",
    "SolverError",
    "Surrogate",
    "config",
    "features",
    "generate",
    "load_dataset",
    "open_loop",
    "run_stage",
    "set_threads",
    "simulate",
]


def _text(cfg):
    """Accepts a config as a dict, JSON text or None (all defaults)."""
    if cfg is None:
        return "{}"
    if isinstance(cfg, str):
        return cfg
    return json.dumps(cfg)


def config(cfg=None):
    """Validated run config with every default filled in."""
    return json.loads(_core.normalize_config(_text(cfg)))


def simulate(cfg, u0, forcing, seed):
    return _core.simulate(_text(cfg), u0, forcing, seed)


def generate(cfg, count, seed, split="train"):
    return _core.generate(_text(cfg), count, seed, split)


def features(cfg, u0, forcing, noise=None):
    if noise is None:
        noise = np.zeros_like(np.asarray(forcing, dtype=float))
    return _core.features(_text(cfg), u0, forcing, noise)


def open_loop(cfg, u0, target, forcing, alpha, seed):
    return _core.open_loop(_text(cfg), u0, target, forcing, alpha, seed)


def run_stage(stage, cfg, out):
    _core.run_stage(stage, _text(cfg), str(out))


def _closed_loop(self, cfg, u0, target, alpha, seed):
    """Runs the policy against the reference solver of the problem in `cfg`."""
    return self._closed_loop(_text(cfg), u0, target, alpha, seed)


Policy.closed_loop = _closed_loop
