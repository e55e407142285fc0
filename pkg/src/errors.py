# src/errors.py
"""
Exception hierarchy shared by the toolkit.

Every error carries the process exit status the command line reports for it:
- 1: numerical / verification failure
- 2: parameters outside the admissible region
- 3: file I/O
- 4: pitchfork direction disagrees with the closed form
- 5: physical-field reconstruction failed
"""


class AnnulusError(Exception):
    exit_code = 1


# ---------- parameters / configuration ----------
class ParameterDomainError(AnnulusError, ValueError):
    exit_code = 2


class InfeasibleParametersError(ParameterDomainError):
    pass


class ConfigError(AnnulusError, ValueError):
    exit_code = 2


class GridError(AnnulusError, ValueError):
    exit_code = 2


# ---------- numerics ----------
class NumericalFailure(AnnulusError, ArithmeticError):
    exit_code = 1


class BracketError(NumericalFailure):
    pass


class AtCrossingError(NumericalFailure):
    pass


class KmaxTooSmallError(NumericalFailure):
    pass


class InadmissibleStateError(NumericalFailure):
    pass


class NoConvergenceError(NumericalFailure):
    pass


class InsufficientDataError(AnnulusError, ValueError):
    exit_code = 1


# ---------- pipeline ----------
class ReconstructionError(AnnulusError):
    exit_code = 5


class StorageError(AnnulusError, OSError):
    exit_code = 3


class DirectionMismatchError(AnnulusError):
    exit_code = 4
