"""Exception hierarchy.

Every error carries a short ``category`` string; the CLI prints it as the
first field of its one-line failure message so batch drivers can dispatch on
it without parsing prose.
"""


class NilmError(Exception):
    category = "error"


class InvalidArgument(NilmError, ValueError):
    category = "invalid-argument"


class RankDeficiencyError(NilmError, ValueError):
    category = "rank-deficiency"


class NumericalFailure(NilmError, ArithmeticError):
    category = "numerical-failure"


class DivergenceError(NumericalFailure):
    category = "divergence"

    def __init__(self, message, iteration=None, appliance=None):
        super().__init__(message)
        self.iteration = iteration
        self.appliance = appliance


class EmptyDataError(NilmError, ValueError):
    category = "empty-data"


class ParseError(NilmError, ValueError):
    category = "parse-error"

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class SchemaError(NilmError, ValueError):
    category = "schema-error"

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ProtocolError(NilmError, ValueError):
    category = "protocol-error"


class ConfigError(NilmError, ValueError):
    category = "config-error"


class UndefinedMetricError(NilmError, ValueError):
    category = "undefined-metric"
