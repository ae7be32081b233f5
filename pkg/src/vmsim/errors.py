"""Exception hierarchy shared across the package."""

from __future__ import annotations


class VmsimError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(VmsimError):
    """A relation, attribute, or predicate does not fit its schema."""


class IntegrityError(VmsimError):
    """A multiplicity went negative where only bags are allowed."""


class CatalogError(VmsimError):
    """An operand name could not be resolved to a stored relation."""


class ConfigurationError(VmsimError):
    """A maintainer was asked to run against an incompatible warehouse setup."""


class ProtocolError(VmsimError):
    """The warehouse/source message exchange violated its own rules."""


class AnalyticError(VmsimError):
    """The closed-form cost model does not cover the requested case."""


class ScenarioError(VmsimError):
    """A scenario file or scenario object failed validation.

    ``path`` anchors the failure to the offending field when the error
    comes from a file.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
