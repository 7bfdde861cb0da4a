"""Functional-flow-graph guided testing of simulated GUI apps."""

from .app_model import ActionStep, AppSpec, load_spec, load_spec_file, perform, reset
from .conditions import Condition, parse
from .ffg import FFG, deserialize, initialize_ffg, serialize
from .harness import RunConfig, run

__version__ = "0.1.0"

__all__ = [
    "ActionStep",
    "AppSpec",
    "Condition",
    "FFG",
    "RunConfig",
    "deserialize",
    "initialize_ffg",
    "load_spec",
    "load_spec_file",
    "parse",
    "perform",
    "reset",
    "run",
    "serialize",
]
