"""Effective population size and Wright-Fisher limits for structured populations.

Thin Python layer over the compiled ``_effpop`` module.
"""

import json

from ._effpop import (
    ConfigError,
    NumericalError,
    Model,
    analyze,
    coalescence_time,
    gillespie_time_average,
    project,
    run_cli,
    simulate_fractions,
    simulate_wright_fisher,
    theta_hat,
    zoo_names,
)

from ._effpop import make_model as _make_model

__version__ = "0.1.0"


def make_model(name, **parameters):
    """Build a zoo model, e.g. ``make_model("two_sex", p=0.4, alpha=0.2)``."""
    return _make_model(name, json.dumps(parameters))


__all__ = [
    "ConfigError",
    "NumericalError",
    "Model",
    "analyze",
    "coalescence_time",
    "gillespie_time_average",
    "make_model",
    "project",
    "run_cli",
    "simulate_fractions",
    "simulate_wright_fisher",
    "theta_hat",
    "zoo_names",
]
