"""Exception hierarchy shared across the pipeline."""


class SynthCityError(Exception):
    """Base class for all library errors."""


# roads


class EmptyNetwork(SynthCityError):
    pass


class PlanarityViolation(SynthCityError):
    def __init__(self, edge_a, edge_b, message=None):
        self.edge_a = tuple(edge_a)
        self.edge_b = tuple(edge_b)
        super().__init__(message or f"edges {self.edge_a} and {self.edge_b} cross")


# grammar


class GrammarError(SynthCityError):
    """Problem in grammar source or during derivation."""


class GrammarSyntaxError(GrammarError):
    def __init__(self, message, line, column):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class UnknownOperation(GrammarSyntaxError):
    pass


class NonPositiveWeight(GrammarSyntaxError):
    pass


class UndefinedSymbol(GrammarError):
    def __init__(self, symbol, rule=None):
        self.symbol = symbol
        self.rule = rule
        where = f" (referenced from {rule})" if rule else ""
        super().__init__(f"undefined symbol {symbol!r}{where}")


class SplitError(GrammarError):
    pass


class Overflow(SplitError):
    pass


class Underflow(SplitError):
    pass


class RecursionLimitExceeded(GrammarError):
    pass


class EmptyDerivation(GrammarError):
    pass


# render / dataset / eval


class InvalidFov(SynthCityError):
    pass


class ExportError(SynthCityError):
    pass


class EmptySubsample(SynthCityError):
    pass


class DimensionMismatch(SynthCityError):
    pass


class ConfigError(SynthCityError):
    """Config document failed validation. `key` names the offending entry."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)
