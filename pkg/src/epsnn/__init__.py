"""Clock-driven simulator of a three-population multi-compartment spiking
network with dendritic error-driven plasticity, under device mismatch."""

from .config import ConfigError, RunConfig, parse_config, serialize_config
from .engine import EngineConfig, Phase, Recording, run, run_phases
from .experiments import run_discrimination, run_recognition

__all__ = [
    "ConfigError",
    "EngineConfig",
    "Phase",
    "Recording",
    "RunConfig",
    "parse_config",
    "run",
    "run_discrimination",
    "run_phases",
    "run_recognition",
    "serialize_config",
]
__version__ = "0.1.0"
