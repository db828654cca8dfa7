"""Python bindings for the koopnet C++ library.

Arrays are NumPy ``float64`` with one example per row. Configurations and
reports cross the boundary as JSON and are returned here as plain dicts.
"""

import json as _json

from . import _core
from ._core import (
    ArchitectureError,
    CacheError,
    ConfigError,
    Dataset,
    DivergenceError,
    DomainError,
    Error,
    FormatError,
    IntegrationError,
    Model,
    SamplingError,
    ShapeError,
    closed_form_discrete,
    integrate,
    jordan_block,
    pendulum_energy,
    preset_names,
    rhs,
    spearman,
    system_info,
)

__all__ = [
    "ArchitectureError", "CacheError", "ConfigError", "Dataset", "DivergenceError",
    "DomainError", "Error", "FormatError", "IntegrationError", "Model", "SamplingError",
    "ShapeError", "closed_form_discrete", "create_model", "evaluate", "integrate",
    "jordan_block", "pendulum_energy", "preset", "preset_names", "rhs", "run", "spearman",
    "system_info", "train",
]


def _config_text(config):
    if isinstance(config, str):
        return _json.dumps({"preset": config})
    return _json.dumps(config)


def preset(name):
    """Full configuration of a named preset as a dict."""
    return _json.loads(_core.preset_json(name))


def create_model(config, seed=0):
    """Freshly initialised model for a preset name or configuration dict."""
    return Model.create(_config_text(config), seed)


def train(config, train_set, validation_set, test_set=None):
    """Pretrain (if configured) and train. Returns ``(model, report)``."""
    model, report = _core.train(_config_text(config), train_set, validation_set, test_set)
    return model, _json.loads(report)


def evaluate(model, datasets, config=None):
    """Split errors, prediction horizons and eigenvalue statistics."""
    if config is None:
        config = preset(model.system)
    return _json.loads(_core.evaluate(model, list(datasets), _config_text(config)))


def run(*args):
    """Run a command-line invocation in-process. Returns ``(exit_code, stdout, stderr)``."""
    return _core.run([str(a) for a in args])
