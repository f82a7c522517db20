"""Exception and warning types raised across the package."""


class ConcertError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(ConcertError, ValueError):
    pass


class BadResponse(ConcertError, ValueError):
    pass


class NonFinite(ConcertError, ValueError):
    pass


class ZeroVarianceColumn(ConcertError, ValueError):
    """A covariate column is constant within some dataset."""

    def __init__(self, column, dataset=0):
        self.column = column
        self.dataset = dataset
        super().__init__(
            f"column {column} is constant in dataset {dataset}; "
            "normalization is undefined (use on_constant='drop')"
        )


class IndexOutOfRange(ConcertError, IndexError):
    pass


class BadThreshold(ConcertError, ValueError):
    pass


class NotGaussian(ConcertError, ValueError):
    pass


class NotLogistic(ConcertError, ValueError):
    pass


class NegativeTilt(ConcertError, ValueError):
    pass


class TooLarge(ConcertError, ValueError):
    pass


class BadIterationCounts(ConcertError, ValueError):
    pass


class BadConfig(ConcertError, ValueError):
    pass


class BadGrid(ConcertError, ValueError):
    pass


class BadFolds(ConcertError, ValueError):
    pass


class LengthMismatch(ConcertError, ValueError):
    pass


class OutOfRangeIndex(ConcertError, IndexError):
    pass


class ConfigParse(ConcertError, ValueError):
    pass


class SchemaError(ConcertError, ValueError):
    pass


class IoFailure(ConcertError, OSError):
    pass


class DidNotConverge(UserWarning):
    """Soft failure: the fit hit ``max_sweeps`` before the ELBO settled."""
