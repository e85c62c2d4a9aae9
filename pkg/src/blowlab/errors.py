"""Exception hierarchy shared by all blowlab modules."""


class BlowlabError(Exception):
    pass


class DomainError(BlowlabError, ValueError):
    """Argument outside the domain where a function is defined."""


class ParamError(BlowlabError, ValueError):
    """Inadmissible profile parameter."""


class ConvergenceError(BlowlabError, RuntimeError):
    pass


class PoleError(BlowlabError, ZeroDivisionError):
    pass


class BudgetError(BlowlabError, RuntimeError):
    """Truncation ordinate exceeds the grid policy limit."""


class SingularityError(BlowlabError, ValueError):
    """Evaluation point too close to a kernel singularity."""


class NormBoundViolation(BlowlabError, RuntimeError):
    pass


class DivergenceGuard(BlowlabError, RuntimeError):
    pass


class IntegrabilityError(BlowlabError, ValueError):
    """A required moment integral diverges at t = T."""


class WindowError(BlowlabError, ValueError):
    pass


class FitError(BlowlabError, RuntimeError):
    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class ConfigError(BlowlabError, ValueError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.key = key


class CacheError(BlowlabError, IOError):
    pass
