"""Exception hierarchy.

Two families matter to callers: :class:`ConfigError` for bad arguments or
configuration (CLI exit 2) and :class:`DataError` for problems with the data
being processed (CLI exit 3).
"""

from __future__ import annotations


class SmartcubeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SmartcubeError, ValueError):
    """Invalid arguments, configuration or preconditions."""


class DataError(SmartcubeError):
    """The data cannot be processed as requested."""


class FetchError(DataError):
    def __init__(self, href: str, reason: str):
        super().__init__(f"{href}: {reason}")
        self.href = href
        self.reason = reason


class NotFoundError(FetchError):
    pass


class SizeLimitError(FetchError):
    pass


class CatalogError(DataError):
    """Malformed catalog or item document; carries the document path and field."""

    def __init__(self, path: str, field: str | None, message: str):
        where = f"{path}" if field is None else f"{path} [{field}]"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.field = field


class EmptySearchError(DataError):
    pass


class EmptyIntersectionError(DataError):
    pass


class NoFramesError(DataError):
    """No frame survived planning (every item lacked a requested band)."""


class AllFramesFilteredError(DataError):
    """Quality filtering removed every frame; relax max_cloud / min_valid."""


class StoreError(DataError):
    pass


class MissingChunkError(StoreError):
    def __init__(self, path: str, chunk: tuple[int, int, int, int]):
        name = "c.{}.{}.{}.{}.bin".format(*chunk)
        super().__init__(f"{path}: missing chunk file {name}")
        self.chunk = chunk


class VersionMismatchError(StoreError):
    pass


class TaskError(SmartcubeError):
    """A task failed during graph execution."""

    def __init__(self, task_id: str, cause: BaseException):
        super().__init__(f"task {task_id[:16]} failed: {type(cause).__name__}: {cause}")
        self.task_id = task_id
        self.cause = cause
