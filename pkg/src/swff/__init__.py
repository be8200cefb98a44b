"""Simulation and bifurcation analysis of the sleep-wake flip-flop model."""
from .kernel import BACKEND
from .model import ModelState, Regime
from .params import DEFAULT, ParameterSet

__version__ = "0.1.0"

__all__ = ["BACKEND", "DEFAULT", "ModelState", "ParameterSet", "Regime", "__version__"]
