"""Exception types raised across the library.

Every failure mode callers are expected to handle gets its own class so
that the CLI can map them onto stable exit codes. All of them derive from
:class:`SiamsegError`.
"""

from __future__ import annotations


class SiamsegError(Exception):
    """Base class for all library errors."""


# --- file formats -----------------------------------------------------------


class BadMagic(SiamsegError):
    """Feature file does not start with the expected magic/version."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class TruncatedFile(SiamsegError):
    """Feature file ends before the payload announced by its header."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class NonFiniteValue(SiamsegError):
    """Feature payload contains NaN or +/-Inf."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class IoFailure(SiamsegError):
    """Underlying OS write failed."""


class BadHeader(SiamsegError):
    """Mask file is not a parseable binary PGM."""


class LabelOverflow(SiamsegError):
    """Mask label does not fit the 8-bit PGM payload."""


class InvalidSpec(SiamsegError):
    """Fixture specification violates its invariants."""


# --- numerics ---------------------------------------------------------------


class ZeroVector(SiamsegError):
    """A vector that must be normalized has zero norm (degenerate token)."""


class DivergedLoss(SiamsegError):
    """Training produced a non-finite loss or parameter."""


class ShapeMismatch(SiamsegError):
    """Two operands that must share a shape/grid do not."""


class NotSymmetric(SiamsegError):
    """Matrix handed to the symmetric eigensolver is not symmetric."""


class NoConvergence(SiamsegError):
    """Eigensolver failed to converge."""


class AllZeroAffinity(SiamsegError):
    """Every affinity entry clamped to zero; no graph to cut."""


class EmptySegment(SiamsegError):
    """A segment label has no member patches."""


class TooFewPoints(SiamsegError):
    """Fewer points than requested clusters."""


class DegenerateFiedlerWarning(UserWarning):
    """The second eigenvector direction is ambiguous; mask is all background."""
