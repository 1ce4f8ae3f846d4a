class PlotError(Exception):
    """Base class for rendering errors."""


class SchemaError(PlotError):
    """Input CSV does not carry the columns the plot kind needs."""


class EmptyInput(PlotError):
    """No rows left after selection."""
