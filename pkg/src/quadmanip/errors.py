"""Exception hierarchy shared across the package."""

from __future__ import annotations


class QuadManipError(Exception):
    """Base class for all package errors."""


class GimbalLockError(QuadManipError):
    pass


class KinematicsError(QuadManipError):
    """Raised by inverse kinematics when a target cannot be solved."""


class NonUnitRotation(KinematicsError):
    pass


class UnreachableOrientation(KinematicsError):
    pass


class SingularMassMatrix(QuadManipError):
    pass


class InfeasibleCommand(QuadManipError):
    """Mixer command lies outside the cone of non-negative squared rotor speeds."""


class SingularMixer(QuadManipError):
    pass


class DegenerateWindow(QuadManipError):
    pass


class InsufficientData(QuadManipError):
    pass


class DegenerateRegressor(QuadManipError):
    pass


class ScenarioError(QuadManipError):
    """Scenario file failed validation; ``path`` names the offending field."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


class Diverged(QuadManipError):
    """Simulation state left the valid region.

    ``time`` is the simulated time of the offending step and ``telemetry``
    carries whatever frames were logged before the abort.
    """

    def __init__(self, time: float, reason: str, telemetry=None) -> None:
        super().__init__(f"diverged at t={time:.4f} s: {reason}")
        self.time = time
        self.reason = reason
        self.telemetry = telemetry
