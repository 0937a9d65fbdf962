"""Exception hierarchy.

Configuration problems derive from :class:`ConfigError`, numerical failures from
:class:`NumericalError` and resource caps from :class:`WorkBudgetExceeded`.  The
CLI maps these three families onto exit codes 2, 3 and 4.
"""


class NeutralGasError(Exception):
    pass


class ConfigError(NeutralGasError, ValueError):
    pass


class NumericalError(NeutralGasError, ArithmeticError):
    pass


class WorkBudgetExceeded(NeutralGasError):
    pass


class NotSymmetrizable(ConfigError):
    pass


class InvalidCutoff(ConfigError):
    pass


class InvalidU0(ConfigError):
    pass


class InvalidGeometry(ConfigError):
    pass


class NotNeutral(ConfigError):
    pass


class NoRoot(NumericalError):
    pass


class DimensionUnsupported(ConfigError):
    pass


class CutoffRequired(ConfigError):
    pass


class NonConvergence(NumericalError):
    pass


class DegenerateSystem(NumericalError):
    pass


class TooLarge(WorkBudgetExceeded):
    pass
