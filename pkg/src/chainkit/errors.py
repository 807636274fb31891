class ChainkitError(Exception):
    """Base class for all chainkit failures."""


class MeasureError(ChainkitError, ValueError):
    pass


class CouplingError(ChainkitError, ValueError):
    """A coupling was evaluated outside its domain (pole crossed, overflow)."""


class ChainSpecError(ChainkitError, ValueError):
    """One or more ChainSpec invariants failed.

    ``violations`` lists every problem found, each prefixed with the level or
    coupling it concerns.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DegenerateEnsembleError(ChainkitError, ArithmeticError):
    """A leading principal minor of the moment matrix vanished."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"leading principal minor {index} is (numerically) zero")


class PropagationError(ChainkitError, ArithmeticError):
    """Non-finite values appeared while pushing functions through the chain."""


class PositivityError(ChainkitError, ArithmeticError):
    """The product-of-determinants measure is not positive for this ensemble."""


class ConfigError(ChainkitError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
