"""Content-addressed response cache.

One file per request fingerprint holding the raw validated payload text,
so warm reruns replay byte-identical responses without provider calls.
Writes are serialized and atomic (temp file + rename).
"""

from __future__ import annotations

import os
import threading
from pathlib import Path


class ResponseCache:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, fingerprint: str) -> Path:
        return self.directory / f"{fingerprint}.json"

    def get(self, fingerprint: str) -> str | None:
        path = self._path(fingerprint)
        try:
            return path.read_text("utf-8")
        except FileNotFoundError:
            return None

    def put(self, fingerprint: str, raw: str) -> None:
        path = self._path(fingerprint)
        with self._lock:
            temp = path.with_suffix(".tmp")
            temp.write_text(raw, "utf-8")
            os.replace(temp, path)

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob("*.json"))
