"""Compressed on-disk tensor cache with a single-file sqlite index.

Blobs are serialized with the package tensor layout, compressed with zlib,
and published atomically (write temp, fsync, rename); the index row is
inserted only after the blob is in place, so a crash mid-put leaves either
no visible entry or a complete one. Reads verify a sha256 checksum of the
serialized (uncompressed) bytes. Many concurrent readers are fine; writers
go one entry at a time.
"""

from __future__ import annotations

import hashlib
import os
import sqlite3
import threading
import urllib.parse
import zlib
from pathlib import Path

import numpy as np

from ..errors import CacheCorruptionError, CacheMissError
from .tensorio import deserialize_tensor, serialize_tensor

FORMAT_VERSION = "1"
CODEC = "zlib"

_SCHEMA = """
CREATE TABLE IF NOT EXISTS entries (
    sample_id TEXT PRIMARY KEY,
    path TEXT NOT NULL,
    checksum TEXT NOT NULL,
    codec TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
"""


class TensorCache:
    def __init__(self, root, level: int = 6):
        self.root = Path(root)
        self.level = level
        self.blob_dir = self.root / "blobs"
        self.blob_dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.sqlite"
        self._local = threading.local()
        con = self._con()
        with con:
            con.executescript(_SCHEMA)
            con.executemany(
                "INSERT OR REPLACE INTO meta (key, value) VALUES (?, ?)",
                [
                    ("format_version", FORMAT_VERSION),
                    ("codec", CODEC),
                    ("codec_version", zlib.ZLIB_VERSION),
                    ("serializer", "qttn-v1"),
                ],
            )

    def _con(self) -> sqlite3.Connection:
        con = getattr(self._local, "con", None)
        if con is None:
            con = sqlite3.connect(self.index_path, timeout=30.0)
            self._local.con = con
        return con

    def _blob_path(self, sample_id: str) -> Path:
        safe = urllib.parse.quote(sample_id, safe="")
        return self.blob_dir / f"{safe}.zz"

    def put(self, sample_id: str, tensor: np.ndarray) -> None:
        data = serialize_tensor(tensor)
        checksum = hashlib.sha256(data).hexdigest()
        blob = self._blob_path(sample_id)
        tmp = blob.with_name(blob.name + f".tmp{os.getpid()}")
        with open(tmp, "wb") as fh:
            fh.write(zlib.compress(data, self.level))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, blob)
        rel = str(blob.relative_to(self.root))
        con = self._con()
        with con:
            con.execute(
                "INSERT OR REPLACE INTO entries (sample_id, path, checksum, codec) "
                "VALUES (?, ?, ?, ?)",
                (sample_id, rel, checksum, f"{CODEC}-{self.level}"),
            )

    def get(self, sample_id: str) -> np.ndarray:
        row = (
            self._con()
            .execute(
                "SELECT path, checksum FROM entries WHERE sample_id = ?", (sample_id,)
            )
            .fetchone()
        )
        if row is None:
            raise CacheMissError(f"sample id {sample_id!r} not in cache")
        rel, checksum = row
        try:
            compressed = (self.root / rel).read_bytes()
        except FileNotFoundError as exc:
            raise CacheCorruptionError(
                f"index row for {sample_id!r} has no blob at {rel}"
            ) from exc
        try:
            data = zlib.decompress(compressed)
        except zlib.error as exc:
            raise CacheCorruptionError(f"blob for {sample_id!r} fails to decompress") from exc
        if hashlib.sha256(data).hexdigest() != checksum:
            raise CacheCorruptionError(f"checksum mismatch for {sample_id!r}")
        return deserialize_tensor(data)

    def __contains__(self, sample_id: str) -> bool:
        row = (
            self._con()
            .execute("SELECT 1 FROM entries WHERE sample_id = ?", (sample_id,))
            .fetchone()
        )
        return row is not None

    def ids(self) -> list:
        rows = self._con().execute("SELECT sample_id FROM entries ORDER BY sample_id")
        return [r[0] for r in rows.fetchall()]

    def close(self) -> None:
        con = getattr(self._local, "con", None)
        if con is not None:
            con.close()
            self._local.con = None
