"""Exception hierarchy for the harness."""
from __future__ import annotations


class CanvasFSSError(Exception):
    """Base class for all harness errors."""


class ManifestParseError(CanvasFSSError):
    """Malformed annotation document. Carries the byte offset when known."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class IntegrityError(CanvasFSSError):
    """Dangling id reference or duplicate id in a manifest."""


class CodecError(CanvasFSSError):
    """Run-length data inconsistent with the declared mask size."""


class ConfigurationError(CanvasFSSError):
    """Invalid run configuration or dataset/fold mismatch."""


class SamplingError(CanvasFSSError):
    """Episode sampling cannot satisfy its preconditions."""


class LayoutError(CanvasFSSError):
    """Layout spec violates variant/shot/ratio compatibility rules."""


class CompositionError(CanvasFSSError):
    """Raster sizes do not match the placement plan."""


class PromptError(CanvasFSSError):
    """Prompt derivation failed (e.g. no candidate instances)."""


class ScenarioError(CanvasFSSError):
    """Negative-prompt scenario cannot run on this episode."""


class MetricError(CanvasFSSError):
    """Metric preconditions violated (size mismatch, zero denominators)."""


class CapabilityError(CanvasFSSError):
    """Backend lacks a required capability. Never retried."""


class TransportError(CanvasFSSError):
    """Backend unreachable or transient failure. Retryable."""


class RegistryError(CanvasFSSError):
    """Oracle backend received a canvas it has no ground truth for."""


class ProtocolError(CanvasFSSError):
    """Wire payload violates the protocol schema."""


class ReportError(CanvasFSSError):
    """Report inputs incomplete or inconsistent."""


class RunFailure(CanvasFSSError):
    """Too many failed episodes, or the run could not start."""
