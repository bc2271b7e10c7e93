"""Counterfactual means under dynamic treatment regimes on a continuous time grid.

The heavy lifting lives in the compiled ``_core`` module. The wrappers here
accept a preset name or a dict for the data-generating process and a regime
string (``"shift:delta=0.5"``) or dict, and hand JSON to the core.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    DomainError,
    Error,
    InvalidArgument,
    NumericalError,
    PositivityError,
    ResourceError,
    ScopeError,
    UnsupportedError,
    make_partition,
    refine,
)

__all__ = [
    "ConfigError", "DomainError", "Error", "InvalidArgument", "NumericalError", "PositivityError",
    "ResourceError", "ScopeError", "UnsupportedError",
    "make_partition", "refine", "simulate_observed", "enumerate_exact", "simulate_counterfactual",
    "mesh_convergence", "estimate", "density_ratio", "run_config", "load_toml",
]


def _dgp(dgp):
    if isinstance(dgp, str):
        dgp = {"preset": dgp}
    return json.dumps(dgp)


def _regime(regime):
    return json.dumps(regime)


def simulate_observed(dgp, K, n, seed, threads=0):
    return _core.simulate_observed(_dgp(dgp), K, n, seed, threads)


def enumerate_exact(dgp, regime, K):
    return _core.enumerate_exact(_dgp(dgp), _regime(regime), K)


def simulate_counterfactual(dgp, regime, K, n, seed, threads=0):
    return _core.simulate_counterfactual(_dgp(dgp), _regime(regime), K, n, seed, threads)


def mesh_convergence(dgp, regime, schedule, n, seed, threads=0):
    return _core.mesh_convergence(_dgp(dgp), _regime(regime), list(schedule), n, seed, threads)


def estimate(dgp, regime, K, estimator="dr", nuisance="exact", n=1000, seed=0, threads=0):
    return _core.estimate(_dgp(dgp), _regime(regime), K, estimator, nuisance, n, seed, threads)


def density_ratio(dgp, regime, l, a):
    return _core.density_ratio(_dgp(dgp), _regime(regime), l, a)


def load_toml(text):
    return json.loads(_core.toml_to_json(text))


def run_config(config, out_dir=""):
    """Run a replicated experiment from a config dict, TOML text or a path."""
    if isinstance(config, str):
        if config.endswith(".toml") or config.endswith(".json"):
            with open(config) as f:
                text = f.read()
            config = load_toml(text) if config.endswith(".toml") else json.loads(text)
        else:
            config = load_toml(config)
    return _core.run_config(json.dumps(config), str(out_dir))
