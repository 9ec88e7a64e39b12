"""Atomic file writes so interrupted runs never leave partial artifacts."""

from __future__ import annotations

import json
import os
import tempfile


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a sibling temp file and rename over the target."""
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
