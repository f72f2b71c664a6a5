"""Writing sibling-embedding archives.

An archive is a directory holding one ``manifest`` file (JSON) plus one
``<word>.f32`` file per word. Each payload file is the word's embedding
matrix as raw little-endian IEEE-754 float32 values, row-major, exactly
``count * dim`` of them, and the manifest records a 64-bit BLAKE2b checksum
of every payload.

This module deliberately re-states that on-disk contract instead of importing
the scoring package: the extractor and the scorer are separate installs whose
only shared surface is the archive files themselves. On top of the fields any
reader consumes, the manifest written here carries an ``extraction`` block
documenting how the vectors were produced (model, matching mode, pooling,
truncation, targets that never occurred); readers that don't know the block
can ignore it.
"""

from __future__ import annotations

import hashlib
import json
import urllib.parse
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest"

LAYER_LAST = "last"
LAYER_MEAN_LAST_FOUR = "mean-last-four"
LAYER_MODES = (LAYER_LAST, LAYER_MEAN_LAST_FOUR)


def payload_checksum(raw: bytes) -> str:
    """64-bit BLAKE2b digest of a raw byte payload, as 16 hex characters."""
    return hashlib.blake2b(raw, digest_size=8).hexdigest()


def word_filename(surface: str) -> str:
    # Percent-encoding keeps arbitrary surfaces filesystem-safe and injective.
    return urllib.parse.quote(surface, safe="") + ".f32"


@dataclass
class WordEntry:
    surface: str
    count: int
    file: str
    checksum: str


@dataclass
class ArchiveManifest:
    """What one extraction run wrote.

    ``words`` lists only targets with at least one occurrence; a valid archive
    never carries an empty payload, so targets that never matched are recorded
    under ``extraction["missing"]`` with a zero count instead.
    """

    corpus_id: str
    dim: int
    layer_mode: str
    words: list
    extraction: dict
    schema_version: int = SCHEMA_VERSION
    root: Path | None = field(default=None, compare=False)

    def entry(self, word):
        for e in self.words:
            if e.surface == word:
                return e
        raise KeyError(f"word not in archive: {word!r}")

    def word_list(self):
        return [e.surface for e in self.words]

    def __contains__(self, word) -> bool:
        return any(e.surface == word for e in self.words)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "corpus_id": self.corpus_id,
            "dim": self.dim,
            "layer_mode": self.layer_mode,
            "words": [
                {
                    "surface": e.surface,
                    "count": e.count,
                    "file": e.file,
                    "checksum": e.checksum,
                }
                for e in self.words
            ],
            "extraction": dict(self.extraction),
        }


def write_archive(vectors, path, *, corpus_id, dim, layer_mode, extraction) -> ArchiveManifest:
    """Write word embedding matrices to ``path`` as an archive directory.

    ``vectors`` maps each surface form to its float32 ``(count, dim)`` matrix;
    entries are written in iteration order. Payloads are raw little-endian
    float32 bytes, so they round-trip bit-exactly through any reader that
    honours the manifest.
    """
    if layer_mode not in LAYER_MODES:
        raise ValueError(f"unknown layer_mode {layer_mode!r}, expected one of {LAYER_MODES}")
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")

    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for surface, mat in vectors.items():
        arr = np.ascontiguousarray(mat, dtype="<f4")
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError(
                f"word {surface!r} needs a 2-D matrix with N >= 1 rows, got shape {arr.shape}"
            )
        if arr.shape[1] != dim:
            raise ValueError(
                f"word {surface!r} has width {arr.shape[1]}, archive dim is {dim}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite embedding values for word {surface!r}")
        raw = arr.tobytes()
        fname = word_filename(surface)
        (root / fname).write_bytes(raw)
        entries.append(
            WordEntry(surface=surface, count=arr.shape[0], file=fname, checksum=payload_checksum(raw))
        )

    manifest = ArchiveManifest(
        corpus_id=corpus_id,
        dim=dim,
        layer_mode=layer_mode,
        words=entries,
        extraction=dict(extraction),
        root=root,
    )
    (root / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=1) + "\n")
    return manifest
