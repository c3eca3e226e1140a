from .file_system import FileSystem
from .storage import CheckpointStorage, ResultStorage, SnapshotStorage, Storage, format_value

__all__ = ["FileSystem", "CheckpointStorage", "ResultStorage", "SnapshotStorage", "Storage", "format_value"]
