"""Exception types raised by the simulation engine."""


class GridflexError(Exception):
    """Base class for all engine errors."""


class MissingFile(GridflexError):
    """A file referenced by the schema does not exist."""


class ColumnMissing(GridflexError):
    """A required column is absent from a CSV file."""


class LengthMismatch(GridflexError):
    """Two series that must share a length do not."""


class DomainViolation(GridflexError):
    """A value falls outside its documented domain."""


class NegativeIdealLoad(GridflexError):
    """A thermal device was asked to deliver a negative ideal load."""


class ActionOutOfRangeForMode(GridflexError):
    """An EV charger action is outside the range its mode allows."""


class UnknownAction(GridflexError):
    """An action name is not part of the building's active actions."""


class UnknownObservation(GridflexError):
    """An observation name is not part of the catalog."""


class WindowNotWarm(GridflexError):
    """The temperature model was called before its lookback window filled."""


class ConfigInvalid(GridflexError):
    """The district configuration cannot be simulated as given."""


class EmptyDistrict(GridflexError):
    """An aggregation was asked to run over zero buildings."""


class EmptyTrace(GridflexError):
    """A trace with no steps cannot produce summary statistics."""


class EpisodeFinished(GridflexError):
    """step() was called after the episode terminated."""


class ActionArityMismatch(GridflexError):
    """The submitted action vector has the wrong shape."""


class ZeroActual(GridflexError):
    """A relative error metric was asked to divide by a zero actual value."""
