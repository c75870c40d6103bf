"""Exception hierarchy shared by every subsystem.

Each class carries an ``exit_code`` so the command line layer can map a
failure category to a stable process status.
"""


class ParaRepError(Exception):
    exit_code = 1
    category = "error"


class ConfigError(ParaRepError, ValueError):
    exit_code = 4
    category = "config"


class DimensionError(ParaRepError, ValueError):
    exit_code = 4
    category = "dimension"


class ContractError(ParaRepError, ValueError):
    exit_code = 4
    category = "contract"


class FormatError(ParaRepError, ValueError):
    exit_code = 5
    category = "format"


class SplitError(ParaRepError, ValueError):
    exit_code = 4
    category = "split"


class UndefinedCorrelationError(ParaRepError, ValueError):
    exit_code = 4
    category = "undefined-correlation"


class NumericalError(ParaRepError, FloatingPointError):
    exit_code = 6
    category = "numerical"
