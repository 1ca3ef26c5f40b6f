"""Exception hierarchy shared by all modules."""


class PaelError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(PaelError, ValueError):
    pass


class InvalidStateError(PaelError, RuntimeError):
    pass


class ConfigError(PaelError, ValueError):
    pass


class NumericError(PaelError, ArithmeticError):
    pass


class NumericOverflowError(NumericError):
    pass


class InfeasibleDualError(NumericError):
    """A dual iterate leaves the region where ``1 + lam @ g > eps``."""


class SingularityError(NumericError):
    pass


class DegenerateRowError(PaelError, ValueError):
    """A kernel row has no mass and cannot be normalized."""


class BandwidthUndefinedError(PaelError, ValueError):
    pass


class AgentDivergenceError(NumericError):
    pass


class RunFailure(PaelError):
    """A run aborted; carries enough context to build a failure report."""

    def __init__(self, round_index, cause, detail=""):
        self.round_index = round_index
        self.cause = cause
        self.detail = detail
        super().__init__(f"run aborted at round {round_index}: {cause}" + (f" ({detail})" if detail else ""))

    def report(self):
        return {"status": "failed", "round": self.round_index, "cause": self.cause, "detail": self.detail}
