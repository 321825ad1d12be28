"""Exception hierarchy shared by the pipeline and the CLI."""


class ReidError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ReidError, ValueError):
    """An input file or record failed validation.

    ``row`` is the 1-based line number in the source file (header is row 1)
    and ``field`` the offending column, when known.
    """

    def __init__(self, message, row=None, field=None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ConfigurationError(ReidError, ValueError):
    """Invalid or missing configuration (region boxes, taxonomy, flags)."""


class FeatureError(ReidError, ValueError):
    """A venue feature is undefined for the given input."""


class ExperimentError(ReidError, RuntimeError):
    """An experiment cannot be run, e.g. no eligible users remain."""


class UndefinedCorrelationError(ReidError, ValueError):
    """Correlation is undefined because an input has zero variance."""
