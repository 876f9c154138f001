"""Exception hierarchy shared by every stage."""


class AnchorFitError(Exception):
    """Base class for all anchorfit failures."""


class ContractError(AnchorFitError, ValueError):
    """Inputs violate a structural precondition (shapes, counts, normalization)."""


class InvalidInputError(AnchorFitError, ValueError):
    """Non-finite or out-of-range data."""


class InvalidConfigError(AnchorFitError, ValueError):
    """A configuration value is outside its documented range."""


class UnderconstrainedError(AnchorFitError, ValueError):
    """Not enough confident observations to fit."""


class BehindCameraError(AnchorFitError, ValueError):
    """A point projects from behind the camera's near plane."""


class DivergedError(AnchorFitError, RuntimeError):
    """Optimization produced a non-finite or exploding objective."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NonFiniteError(AnchorFitError, FloatingPointError):
    """A loss term or its gradient became non-finite."""

    def __init__(self, term, message=None):
        super().__init__(message or f"non-finite value in loss term '{term}'")
        self.term = term


class ScenarioError(AnchorFitError, ValueError):
    """A synthetic scenario cannot be rendered (e.g. a joint behind a camera)."""


class SchemaError(AnchorFitError, ValueError):
    """A document does not match its file schema."""

    def __init__(self, document, field, message):
        super().__init__(f"{document}: {field}: {message}")
        self.document = document
        self.field = field


class VersionError(SchemaError):
    """Unsupported format_version."""
