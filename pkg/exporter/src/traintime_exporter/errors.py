"""Exporter error hierarchy."""


class ExportError(Exception):
    """Base for everything this package raises on purpose."""


class TraceError(ExportError):
    """Model cannot be traced (data-dependent control flow, or an
    operation the graph format has no kind for)."""


class RuntimeUnavailable(ExportError):
    """Autocast is not available for the requested device type."""


class UnsupportedPrecision(ExportError):
    """Cast recording was requested outside mixed-precision mode."""


class DeviceError(ExportError):
    """The requested profiling device does not exist or cannot be used."""


class UnknownModel(ExportError):
    """Model name not present in the zoo."""
