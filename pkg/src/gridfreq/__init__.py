"""gridfreq: primary frequency control in power networks.

A numpy/scipy toolkit that simulates nonlinear swing-equation networks under
pluggable generation and demand controllers, solves the induced optimal
supply/load allocation problem, and numerically certifies the stability
(passivity, energy-function) and optimality (first-order conditions)
properties of the closed loop.
"""

from . import analysis, controllers, costs, dispatch, network, passivity, scenario, simulator
from .errors import GridFreqError

__all__ = [
    "analysis",
    "controllers",
    "costs",
    "dispatch",
    "network",
    "passivity",
    "scenario",
    "simulator",
    "GridFreqError",
]

__version__ = "0.1.0"
