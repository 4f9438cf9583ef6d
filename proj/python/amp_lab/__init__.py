"""Python access to the amp_lab spectral, state-evolution and experiment routines.

Configurations are plain dicts with the same keys as the JSON files read by
``amp-lab run``; unknown keys raise :class:`ValidationError`.
"""

import json as _json

from . import _core
from ._core import (
    AmpLabError,
    NumericalFailure,
    UnsupportedVariant,
    ValidationError,
    cumulants_table,
    cumulants_to_moments,
    free_cumulants,
    moments,
    moments_to_cumulants,
)

__all__ = [
    "AmpLabError",
    "NumericalFailure",
    "UnsupportedVariant",
    "ValidationError",
    "cumulants_table",
    "cumulants_to_moments",
    "free_cumulants",
    "moments",
    "moments_to_cumulants",
    "normalize_config",
    "run",
    "state_evolution",
    "verify",
]


def _dump(config):
    return _json.dumps(config if config is not None else {})


def normalize_config(config=None):
    """Return the config with every default filled in."""
    return _json.loads(_core.normalize_config(_dump(config)))


def state_evolution(config=None):
    """State-evolution trajectory: one dict per iteration with mse, overlap and the covariances."""
    return _core.state_evolution(_dump(config))


def run(config=None, threads=0):
    """Monte Carlo runs aggregated per iteration, plus the matching state evolution."""
    return _core.run(_dump(config), threads)


def verify(suite="all"):
    """Run a verification suite and return its report as a dict."""
    return _json.loads(_core.verify(suite))
