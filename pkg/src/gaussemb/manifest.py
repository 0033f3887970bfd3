"""Run manifests: flat key=value files recording resolved configuration.

Every training or evaluation run writes one so that silent default drift
is detectable and results stay attributable to exact inputs.
"""

from __future__ import annotations

import hashlib
import os
from datetime import datetime, timezone


def file_sha256(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(path: str | os.PathLike, entries: dict[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, value in entries.items():
            if "=" in key or "\n" in key:
                raise ValueError(f"bad manifest key {key!r}")
            value = str(value)
            if "\n" in value:
                raise ValueError(f"manifest value for {key!r} contains newline")
            f.write(f"{key}={value}\n")


def read_manifest(path: str | os.PathLike) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key] = value
    return out
