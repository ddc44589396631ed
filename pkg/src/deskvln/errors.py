"""Exception types shared across the package."""
from __future__ import annotations


class DeskvlnError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(DeskvlnError):
    """A serialized file does not match its schema; the message names the field."""


class ValidationError(DeskvlnError):
    """An in-memory object violates a structural invariant."""


class GenerationError(DeskvlnError):
    """Synthetic world generation was given infeasible parameters."""


class CollectionError(DeskvlnError):
    """Demonstration collection could not complete."""


class CommandParseError(DeskvlnError):
    """Action text matched no grammar production.  Carries the raw text."""

    def __init__(self, text: str, reason: str = "no grammar production matched"):
        super().__init__(f"unparseable action text: {text!r} ({reason})")
        self.text = text


class TripletFormatError(DeskvlnError):
    """A reasoning backend kept returning text that does not parse as a triplet."""

    def __init__(self, raw_text: str, attempts: int):
        super().__init__(
            f"reasoning response did not match the triplet template after {attempts} attempts"
        )
        self.raw_text = raw_text
        self.attempts = attempts


class RemoteCallError(DeskvlnError):
    """A remote endpoint failed after the configured retries."""


class EmissionError(DeskvlnError):
    """Training-sample emission got inconsistent inputs."""
