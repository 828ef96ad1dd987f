# internal/log.py
from __future__ import annotations
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, TextIO


class DebugLogger:
    """Console output mirrored into one run log (``<model>.log`` while training)."""

    def __init__(self):
        self.enabled = False
        self.quiet = False  # True -> nothing goes to stdout (file still written)
        self.file: Optional[TextIO] = None

    def start(self, filename: str | Path = "train.log"):
        # "w": a rerun replaces the old log so two runs can be diffed
        self.stop()
        self.enabled = True
        self.file = open(filename, "w", encoding="utf-8")

    def stop(self):
        if self.file:
            self.file.close()
            self.file = None
        self.enabled = False

    def write(self, msg: str, file_only: bool = False):
        if not self.quiet and not file_only:
            sys.stdout.write(msg)
            sys.stdout.flush()

        if self.enabled and self.file:
            self.file.write(msg)
            self.file.flush()


# Create ONE shared logger used everywhere
LOGGER = DebugLogger()


def dprint(*args, end="\n", file_only=False):
    """Print to the terminal and the run log; file_only lines skip the terminal."""
    msg = " ".join(str(a) for a in args) + end
    LOGGER.write(msg, file_only=file_only)


@contextmanager
def logging_to(path: str | Path) -> Iterator[DebugLogger]:
    LOGGER.start(path)
    try:
        yield LOGGER
    finally:
        LOGGER.stop()
