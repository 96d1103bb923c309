"""Bridge-side error types."""


class BridgeError(Exception):
    """Base for everything raised on purpose by this package."""


class FormatError(BridgeError):
    """A file (.sfgw, config JSON, feature bundle, WAV) violates its layout."""


class ExportError(BridgeError):
    """A checkpoint cannot be mapped onto the engine's tensor inventory."""
