"""Run-directory artifacts, logging, and the single-writer lock."""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path


class RunError(RuntimeError):
    """Runtime failure; maps to exit code 1 at the CLI."""


CONFIG_FILE = "config.json"
GENOTYPE_FILE = "genotype.json"
GAMMA_FILE = "gamma_history.csv"
METRICS_FILE = "metrics.json"
LOG_FILE = "log.txt"
MODEL_FILE = "model.npz"
LOCK_FILE = ".lock"

SEARCH_ARTIFACTS = (CONFIG_FILE, GENOTYPE_FILE, GAMMA_FILE, METRICS_FILE,
                    LOG_FILE)


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class RunDirectory:
    """A run's output directory, guarded by an exclusive lock file."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock_fd: int | None = None
        self._logger: logging.Logger | None = None
        self._handler: logging.Handler | None = None

    # -- locking ---------------------------------------------------------
    def acquire(self) -> "RunDirectory":
        self.path.mkdir(parents=True, exist_ok=True)
        lock = self.path / LOCK_FILE
        try:
            self._lock_fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RunError(
                f"{self.path} is locked by another writer; remove "
                f"{lock} if that run is dead") from None
        os.write(self._lock_fd, f"{os.getpid()}\n".encode())
        return self

    def release(self) -> None:
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self._lock_fd = None
            (self.path / LOCK_FILE).unlink(missing_ok=True)
        if self._logger is not None and self._handler is not None:
            self._logger.removeHandler(self._handler)
            self._handler.close()
            self._logger = None
            self._handler = None

    def __enter__(self) -> "RunDirectory":
        return self.acquire()

    def __exit__(self, *exc) -> None:
        self.release()

    # -- artifacts ---------------------------------------------------------
    def file(self, name: str) -> Path:
        return self.path / name

    def write_json(self, name: str, obj) -> None:
        self.file(name).write_text(canonical_json(obj))

    def read_json(self, name: str):
        return json.loads(self.file(name).read_text())

    def write_text(self, name: str, text: str) -> None:
        self.file(name).write_text(text)

    def missing_artifacts(self, names=SEARCH_ARTIFACTS) -> list[str]:
        return [n for n in names if not self.file(n).is_file()]

    # -- logging -----------------------------------------------------------
    def logger(self) -> logging.Logger:
        if self._logger is None:
            logger = logging.getLogger(f"danas.run.{self.path}")
            logger.setLevel(logging.INFO)
            logger.propagate = False
            handler = logging.FileHandler(self.file(LOG_FILE))
            handler.setFormatter(
                logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
            logger.addHandler(handler)
            self._logger, self._handler = logger, handler
        return self._logger
