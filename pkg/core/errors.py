"""
Exceptions and warning categories shared by every proxyhash module.
"""


class ProxyHashError(Exception):
    """Base class for all proxyhash failures."""


class InvalidProxySetError(ProxyHashError, ValueError):
    """A proxy matrix violates the ProxySet invariants."""


class DimensionMismatchError(ProxyHashError, ValueError):
    """Array shapes do not agree."""


class EmptyClassError(ProxyHashError, ValueError):
    """A class has no samples."""

    def __init__(self, class_label: int):
        super().__init__(f"class {class_label} has no samples")
        self.class_label = class_label


class InvalidSimilarityError(ProxyHashError, ValueError):
    """Similarity inputs cannot produce a valid SimilarityMatrix."""


class AssignmentTooLargeError(ProxyHashError, ValueError):
    """Exhaustive assignment requested for too many classes."""


class InvalidRotationError(ProxyHashError, ValueError):
    """A matrix used as a rotation is not orthogonal."""


class TrainingDivergedError(ProxyHashError, RuntimeError):
    """Training produced a non-finite loss."""


class DatasetFormatError(ProxyHashError, ValueError):
    """
    A dataset file failed to parse or validate.

    Either `line` (text files, 1-based) or `offset` (binary files, bytes) is
    set to point at the problem.
    """

    def __init__(self, path: str, message: str, line: int | None = None, offset: int | None = None):
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (byte offset {offset})"
        super().__init__(f"{path}{where}: {message}")
        self.path = path
        self.line = line
        self.offset = offset


class ReportError(ProxyHashError, ValueError):
    """A report cannot be written or read."""


class ProxyHashWarning(UserWarning):
    """Base class for recoverable conditions."""


class ConvergenceWarning(ProxyHashWarning):
    """An iterative solver stopped at max_iters."""


class CollapsedProxiesWarning(ProxyHashWarning):
    """Binarization mapped two proxies onto the same code."""


class DegenerateSimilarityWarning(ProxyHashWarning):
    """All class means coincide; similarity falls back to all-ones."""


class NoTripletsWarning(ProxyHashWarning):
    """A batch contributed no valid triplet although λ > 0."""
