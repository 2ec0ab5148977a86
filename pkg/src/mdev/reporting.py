"""Atomic output files, CSV/JSON writers and run manifests."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .efficiency import config_hash


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> Path:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)  # RFC 4180: CRLF line endings, minimal quoting
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def load_json_arg(value: str):
    """Parse ``value`` as inline JSON, or as a path to a JSON file."""
    text = value.strip()
    if text.startswith(("{", "[")):
        return json.loads(text)
    with open(value, encoding="utf-8") as fh:
        return json.load(fh)


@dataclass
class RunManifest:
    subcommand: str
    arguments: dict
    master_seed: int | None = None
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished: str | None = None
    runtime_seconds: float | None = None
    outputs: list = field(default_factory=list)
    tool_version: str = __version__
    config: dict | None = None  # resolved config; hashed instead of the raw arguments when set

    @property
    def config_hash(self) -> str:
        if self.config is not None:
            return config_hash(self.config)
        return config_hash({"subcommand": self.subcommand, "arguments": self.arguments, "seed": self.master_seed})

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "subcommand": self.subcommand,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "arguments": self.arguments,
            "started": self.started,
            "finished": self.finished,
            "runtime_seconds": self.runtime_seconds,
            "outputs": self.outputs,
        } | ({"config": self.config} if self.config is not None else {})
