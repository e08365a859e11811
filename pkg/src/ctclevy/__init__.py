"""Composite time-changed Levy models: COS pricing, VIX pricing and joint calibration."""

from .errors import CtcError, NumericalError, ValidationError
from .levy import ModelSpec, catalog, from_config, load_config, to_config

__version__ = "0.1.0"

__all__ = ["CtcError", "ModelSpec", "NumericalError", "ValidationError", "catalog", "from_config",
           "load_config", "to_config", "__version__"]
