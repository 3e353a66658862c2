"""Shared error types for file parsing and evaluation."""

from __future__ import annotations


class MalformedFile(Exception):
    """Unparseable input; message carries the byte offset or line number."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class MissingMetadata(MalformedFile):
    """Structurally readable input that lacks required metadata fields."""


class PathTooShort(Exception):
    """Trajectory too short for the requested metric."""
