"""Small file helpers shared by the binary and text formats."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_bytes(path: str | os.PathLike, payload) -> Path:
    """Write ``payload`` to ``path`` via a temporary sibling and a rename.

    ``payload`` is a bytes-like object or an iterable of them (written in
    order, so large files need not be joined in memory). A reader never
    observes a partially written file: either the old content (or no file)
    or the complete new content is visible.
    """
    chunks = [payload] if isinstance(payload, (bytes, bytearray, memoryview)) else payload
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        os.fchmod(fd, 0o666 & ~_umask())
        with os.fdopen(fd, "wb") as fh:
            for chunk in chunks:
                fh.write(chunk)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def pack_header(magic: bytes, header: dict) -> bytes:
    """Magic bytes, compact sorted JSON header, newline."""
    body = json.dumps(header, sort_keys=True, separators=(",", ":"))
    if "\n" in body:  # pragma: no cover - json.dumps never emits raw newlines
        raise ValueError("header must be single-line JSON")
    return magic + body.encode("utf-8") + b"\n"


def unpack_header(blob: bytes, magic: bytes) -> tuple[dict, int]:
    """Parse a ``pack_header`` prefix; return the header and payload offset."""
    if not blob.startswith(magic):
        raise ValueError(f"malformed header: bad magic (expected {magic!r})")
    end = blob.find(b"\n", len(magic))
    if end < 0:
        raise ValueError("malformed header: missing newline terminator")
    try:
        header = json.loads(blob[len(magic):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed header: {exc}") from exc
    if not isinstance(header, dict):
        raise ValueError("malformed header: expected a JSON object")
    return header, end + 1
