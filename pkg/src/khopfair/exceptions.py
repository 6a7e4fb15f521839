class GraphFormatError(ValueError):
    """Malformed graph, attribute, pair or score input."""


class MetricUndefinedError(ValueError):
    """The requested metric has no value on this input (e.g. a single group)."""


class DomainGapError(KeyError):
    """A score is needed for a pair the score matrix does not cover."""

    def __init__(self, i, j):
        super().__init__(f"domain gap at ({i},{j})")
        self.pair = (i, j)

    def __str__(self):
        return self.args[0]


class NonFiniteError(FloatingPointError):
    """An optimization step produced NaN or infinite values."""
