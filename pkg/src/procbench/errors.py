"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(EngineError, ValueError):
    """Invalid configuration. Carries the name of the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnknownModelError(ConfigurationError):
    def __init__(self, name: str, available):
        super().__init__(
            "model", f"unknown model {name!r}; available: {', '.join(sorted(available))}"
        )


class IntegrationError(EngineError, RuntimeError):
    """Integration produced a non-finite state. Carries the failing substep."""

    def __init__(self, substep: int, message: str):
        self.substep = substep
        super().__init__(f"substep {substep}: {message}")


class EpisodeComplete(EngineError, RuntimeError):
    """A finished episode was stepped without an intervening reset."""


class UndefinedOutputError(EngineError, ValueError):
    """Derived model output is undefined for the given state."""


class RewardHookError(EngineError, RuntimeError):
    """A custom reward hook returned a non-finite value or raised."""


class PolicyError(EngineError, RuntimeError):
    """An attached policy failed to produce an action."""


class PolicyTimeoutError(PolicyError):
    """An external policy did not answer within its timeout."""


class ProtocolError(PolicyError):
    """Malformed or unexpected wire-protocol traffic. Carries the payload."""

    def __init__(self, message: str, payload: str | None = None):
        self.payload = payload
        if payload is not None:
            message = f"{message} (payload: {payload!r})"
        super().__init__(message)
