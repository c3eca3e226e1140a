import threading
from collections import defaultdict
from contextlib import contextmanager
from typing import Dict, Iterator


class RWLock:
    """A read/write lock: many concurrent readers or a single writer."""

    def __init__(self) -> None:
        self._readers = 0
        self._writer = False
        self._cond = threading.Condition()

    def acquire_read(self) -> None:
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self) -> None:
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self) -> None:
        with self._cond:
            while self._writer or self._readers > 0:
                self._cond.wait()
            self._writer = True

    def release_write(self) -> None:
        with self._cond:
            self._writer = False
            self._cond.notify_all()

    @contextmanager
    def reading(self) -> Iterator[None]:
        self.acquire_read()
        try:
            yield
        finally:
            self.release_read()

    @contextmanager
    def writing(self) -> Iterator[None]:
        self.acquire_write()
        try:
            yield
        finally:
            self.release_write()


class LockManager:
    """Hands out one RWLock per artifact path (log files, CSVs, checkpoints)."""

    def __init__(self) -> None:
        self._locks: Dict[str, RWLock] = defaultdict(RWLock)
        self._global_lock = threading.Lock()

    def get_lock(self, path: str) -> RWLock:
        with self._global_lock:
            return self._locks[path]

    def reading(self, path: str):
        return self.get_lock(path).reading()

    def writing(self, path: str):
        return self.get_lock(path).writing()


# Singleton instance
lock_manager = LockManager()
