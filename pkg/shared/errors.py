"""Error hierarchy shared by every simulator component."""

from typing import Optional


class SimulatorError(Exception):
    """Base class for all simulator failures."""

    exit_code: int = 1


class InvalidConfigurationError(SimulatorError, ValueError):
    """A configuration value violates a precondition."""

    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field:
            prefix += f"{field}: "
        super().__init__(f"{prefix}{message}")


class InvalidArgumentError(SimulatorError, ValueError):
    """An operation received arguments with inconsistent shapes or contents."""


class ProtocolError(SimulatorError):
    """A federation message does not fit the current protocol state."""


class PartitionFailureError(SimulatorError):
    """No admissible partition was found within the retry budget."""

    exit_code = 2


class DivergedError(SimulatorError):
    """A non-finite value appeared during training."""

    exit_code = 3

    def __init__(
        self,
        message: str,
        iteration: Optional[int] = None,
        round: Optional[int] = None,
        client_id: Optional[int] = None,
    ):
        self.iteration = iteration
        self.round = round
        self.client_id = client_id
        self._message = message
        super().__init__(self._describe())

    def _describe(self) -> str:
        where = []
        if self.round is not None:
            where.append(f"round {self.round}")
        if self.client_id is not None:
            where.append(f"client {self.client_id}")
        if self.iteration is not None:
            where.append(f"iteration {self.iteration}")
        return f"{self._message} ({', '.join(where)})" if where else self._message

    def at(self, round: Optional[int] = None, client_id: Optional[int] = None) -> "DivergedError":
        """Attach round/client context and return self for re-raising."""
        if round is not None:
            self.round = round
        if client_id is not None:
            self.client_id = client_id
        self.args = (self._describe(),)
        return self
