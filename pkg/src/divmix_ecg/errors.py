"""Exception types raised across the package."""


class DivMixError(Exception):
    """Base class for all package errors."""


class InvalidInput(DivMixError, ValueError):
    pass


class MissingLead(DivMixError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"record has no lead {self.name!r}"


class ShapeError(DivMixError, ValueError):
    pass


class ConfigError(DivMixError, ValueError):
    pass


class StateError(DivMixError, RuntimeError):
    pass


class DegenerateLosses(DivMixError, ValueError):
    """All per-sample losses are identical; no two-way split exists."""


class AlignmentError(DivMixError, ValueError):
    pass


class DegenerateVariance(DivMixError, ValueError):
    pass
