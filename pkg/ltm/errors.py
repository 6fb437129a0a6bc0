"""Domain exceptions. The CLI maps every LtmError to exit code 1."""


class LtmError(Exception):
    pass


class DomainError(LtmError, ValueError):
    """An input outside an operation's precondition (negative power, C > 1, ...)."""


class ConfigError(LtmError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParameterValidationError(LtmError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid parameters: " + "; ".join(self.violations))


class SteadyStateError(LtmError):
    pass


class DegenerateSteadyStateError(SteadyStateError):
    def __init__(self, decoupled_states: list[str], dimension: int):
        self.decoupled_states = decoupled_states
        self.dimension = dimension
        super().__init__(
            f"degenerate steady state (kernel dimension {dimension}); "
            f"decoupled states: {', '.join(decoupled_states)}"
        )


class SingularAssemblyError(SteadyStateError):
    pass


class RunawayGainError(SteadyStateError):
    def __init__(self, n_max: float):
        self.n_max = n_max
        super().__init__(f"runaway gain: no sign change below N={n_max:.3g}, check parameters")


class NonMonotoneGainError(SteadyStateError):
    def __init__(self, roots: list[float]):
        self.roots = roots
        listed = ", ".join(f"{r:.6g}" for r in roots)
        super().__init__(f"net gain is not monotone in N; candidate roots: {listed}")


class SweepError(LtmError):
    def __init__(self, pump: float, cause: Exception):
        self.pump = pump
        self.cause = cause
        super().__init__(f"at pump {pump:.6g} W: {cause}")


class ThresholdFitError(LtmError):
    pass


class FitError(LtmError):
    pass


class CalibrationError(LtmError):
    pass


class DataFileError(LtmError):
    def __init__(self, message: str, source: str = "", line: int | None = None):
        self.source = source
        self.line = line
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {message}" if where else message)
