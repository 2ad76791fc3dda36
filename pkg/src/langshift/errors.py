"""Exception hierarchy shared by all langshift modules."""

from __future__ import annotations


class LangshiftError(Exception):
    """Base class for every error raised by this package."""


class FormatError(LangshiftError):
    """A file does not conform to the expected binary or text layout."""


class IntegrityError(LangshiftError):
    """Stored checksums do not match the data that was read."""


class DataError(LangshiftError):
    """Payload values are unusable (non-finite numbers, unknown language)."""


class ValidationError(LangshiftError):
    """An in-memory object violates one of its invariants."""


class IoError(LangshiftError):
    """Wraps an OS-level failure while writing an artifact."""


class ConfigError(LangshiftError):
    """A configuration file or argument set is malformed."""


class EmptyLanguageError(LangshiftError):
    """No tokens of the requested language are present."""


class EmptySentenceError(LangshiftError):
    """A sentence-level operation received zero tokens."""


class ShapeError(LangshiftError):
    """Vector or matrix dimensions do not line up."""


class LayerMismatchError(LangshiftError):
    """Operands were extracted from different encoder layers."""


class MissingMeanError(LangshiftError):
    """A required language mean is absent from the supplied mapping."""


class DegenerateVectorError(LangshiftError):
    """A zero-norm vector reached a cosine computation."""


class GoldMismatchError(LangshiftError):
    """Gold annotations do not cover the evaluated items."""
