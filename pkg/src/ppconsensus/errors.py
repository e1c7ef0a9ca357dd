"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ConsensusError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(ConsensusError, ValueError):
    """A graph or schedule violates its structural invariants."""


class DomainError(ConsensusError, ValueError):
    """An argument lies outside the domain of a mathematical operation."""


class GainValidationError(ConsensusError, ValueError):
    """A gain is nonpositive or the gain set breaks a type invariant."""


class ScenarioError(ConsensusError, ValueError):
    """A scenario (in memory or on disk) is invalid.

    ``line`` is the 1-based line in the source file when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FunnelViolation(ConsensusError, ArithmeticError):
    """A normalized error left the open region (-1, 1).

    Carries enough context to find the offending edge: the normalized value,
    its magnitude, and, when known, the edge index, node pair, channel and time.
    """

    def __init__(
        self,
        value: float,
        *,
        index: int | None = None,
        pair: tuple[int, int] | None = None,
        channel: str | None = None,
        t: float | None = None,
    ):
        self.value = float(value)
        self.magnitude = abs(self.value)
        self.index = index
        self.pair = pair
        self.channel = channel
        self.t = t
        super().__init__(self._describe())

    def _describe(self) -> str:
        parts = [f"normalized error {self.value:.17g} outside (-1, 1)"]
        if self.channel is not None:
            parts.append(f"channel={self.channel}")
        if self.pair is not None:
            parts.append(f"edge={self.pair[0]}-{self.pair[1]}")
        elif self.index is not None:
            parts.append(f"edge index={self.index}")
        if self.t is not None:
            parts.append(f"t={self.t:.17g}")
        return ", ".join(parts)


class InfeasibleActivation(FunnelViolation):
    """An edge is outside its funnel at the instant its graph becomes active.

    ``bound`` is the funnel value rho(t) and ``state_value`` the raw edge
    state (relative position or velocity) that breached it.
    """

    def __init__(self, value, *, bound: float, state_value: float, **kw):
        self.bound = float(bound)
        self.state_value = float(state_value)
        super().__init__(value, **kw)

    def _describe(self) -> str:
        return (
            f"infeasible activation: |{self.state_value:.17g}| >= rho = "
            f"{self.bound:.17g}; " + super()._describe()
        )


class IntegrationBlowup(ConsensusError, RuntimeError):
    """An integrator stage produced a non-finite derivative."""

    def __init__(self, message: str, *, t: float, stage: int):
        self.t = t
        self.stage = stage
        super().__init__(f"{message} (t={t:.17g}, RK4 stage {stage})")


class SimulationHalted(ConsensusError):
    """A run stopped early; ``trajectory`` holds everything recorded so far."""

    def __init__(self, trajectory, cause: Exception):
        self.trajectory = trajectory
        self.cause = cause
        super().__init__(f"simulation halted: {cause}")
