"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GridFreqError(Exception):
    """Base class for all package-specific errors."""


# --- network topology ------------------------------------------------------

class TopologyError(GridFreqError):
    pass


class DisconnectedGraph(TopologyError):
    pass


class DuplicateEdge(TopologyError):
    pass


class DanglingEndpoint(TopologyError):
    pass


class UnknownBus(GridFreqError):
    pass


# --- controller construction ------------------------------------------------

class InvalidCost(GridFreqError):
    pass


class InvalidTimeConstant(GridFreqError):
    pass


class InvalidDeadband(GridFreqError):
    pass


class InvalidDamping(GridFreqError):
    pass


# --- numerics ---------------------------------------------------------------

class NonFiniteState(GridFreqError):
    """A state left the finite domain; carries the time of first failure."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class NoConvergence(GridFreqError):
    pass


class AlgebraicSolveFailed(GridFreqError):
    pass


class Infeasible(GridFreqError):
    pass


class BalanceInfeasible(Infeasible):
    pass


class ToleranceNotMet(GridFreqError):
    pass


class AngleSolveFailed(GridFreqError):
    pass


class SecurityViolated(GridFreqError):
    """An equilibrium phase difference left the |eta| < pi/2 region."""


class AssumptionViolated(GridFreqError):
    """A model failed a decentralized solvability check and was refused."""


# --- frequency-domain analysis ----------------------------------------------

class UnstableTransferFunction(GridFreqError):
    pass


class LinearizationUnavailable(GridFreqError):
    pass


class NoStorageAvailable(GridFreqError):
    pass


# --- scenario files ----------------------------------------------------------

class SchemaError(GridFreqError):
    pass
