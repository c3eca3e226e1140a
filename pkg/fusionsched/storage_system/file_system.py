import os
from typing import Optional

from ..errors import StorageError
from ..lock import lock_manager


class FileSystem:
    """
    Lock-guarded file access for every artifact fusionsched writes: CSVs,
    snapshots and checkpoints. Each path has its own reader/writer lock, so
    parallel sweep cells never interleave writes to one file.
    """

    @staticmethod
    def _ensure_parent(path: str, recursive: bool) -> None:
        parent = os.path.dirname(path)
        if not parent:
            return
        if recursive:
            os.makedirs(parent, exist_ok=True)
        elif not os.path.isdir(parent):
            raise StorageError(f"Parent directory does not exist for path: {path}")

    @staticmethod
    def create_file(path: str, content: Optional[str], recursive: bool = True) -> None:
        """
        Create a text file with the given content, creating parent
        directories when `recursive` is True.
        """
        with lock_manager.writing(path):
            try:
                FileSystem._ensure_parent(path, recursive)
                if content is not None:
                    with open(path, 'w', encoding='utf-8', newline='') as f:
                        f.write(content)
            except OSError as exc:
                raise StorageError(f"Cannot write {path}: {exc}")

    @staticmethod
    def write_bytes(path: str, data: bytes, recursive: bool = True) -> None:
        with lock_manager.writing(path):
            try:
                FileSystem._ensure_parent(path, recursive)
                with open(path, 'wb') as f:
                    f.write(data)
            except OSError as exc:
                raise StorageError(f"Cannot write {path}: {exc}")

    @staticmethod
    def read_file(path: str) -> Optional[str]:
        """Read a text file; None when it does not exist."""
        with lock_manager.reading(path):
            if not os.path.exists(path):
                return None
            try:
                with open(path, 'r', encoding='utf-8', newline='') as f:
                    return f.read()
            except OSError as exc:
                raise StorageError(f"Cannot read {path}: {exc}")

    @staticmethod
    def read_bytes(path: str) -> Optional[bytes]:
        with lock_manager.reading(path):
            if not os.path.exists(path):
                return None
            try:
                with open(path, 'rb') as f:
                    return f.read()
            except OSError as exc:
                raise StorageError(f"Cannot read {path}: {exc}")
