"""On-disk sibling-embedding archives.

An archive is a directory holding one ``manifest`` file (JSON) plus one
``<word>.f32`` file per word. Each payload file is the word's embedding
matrix as raw little-endian IEEE-754 float32 values, row-major, exactly
``count * dim`` of them. The manifest records a 64-bit BLAKE2b checksum of
every raw payload so corruption is caught before any numeric parsing.
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


class ArchiveError(Exception):
    """Archive is missing, malformed, or fails validation."""


class ChecksumMismatch(ArchiveError):
    """Stored checksum does not match the bytes on disk."""


def payload_checksum(raw: bytes) -> str:
    """64-bit BLAKE2b digest of a raw byte payload, as 16 hex characters."""
    return hashlib.blake2b(raw, digest_size=8).hexdigest()


def _word_filename(surface: str) -> str:
    # Percent-encoding keeps arbitrary surfaces filesystem-safe and injective.
    return urllib.parse.quote(surface, safe="") + ".f32"


@dataclass
class SiblingSet:
    """All token embeddings of one word in one corpus: an N x d matrix."""

    word: str
    corpus_id: str
    embeddings: np.ndarray
    layer_mode: str = LAYER_LAST

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float32)
        if emb.ndim != 2:
            raise ValueError(f"embeddings must be 2-D, got shape {emb.shape}")
        if emb.shape[0] < 1 or emb.shape[1] < 1:
            raise ValueError(f"embeddings need N >= 1 and d >= 1, got {emb.shape}")
        if not np.all(np.isfinite(emb)):
            raise ValueError(f"non-finite embedding values for word {self.word!r}")
        self.embeddings = emb

    @property
    def count(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass
class WordEntry:
    surface: str
    count: int
    file: str
    checksum: str


@dataclass
class ArchiveManifest:
    corpus_id: str
    dim: int
    layer_mode: str
    words: list
    schema_version: int = SCHEMA_VERSION
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ArchiveError(f"dim must be positive, got {self.dim}")
        seen = set()
        for entry in self.words:
            if entry.surface in seen:
                raise ArchiveError(f"duplicate word in manifest: {entry.surface!r}")
            seen.add(entry.surface)
            if entry.count < 1:
                raise ArchiveError(
                    f"word {entry.surface!r} has non-positive count {entry.count}"
                )

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
        }


def archive_checksum(manifest: ArchiveManifest) -> str:
    """Stable digest of an archive's identity and per-word payload checksums."""
    h = hashlib.blake2b(digest_size=8)
    h.update(f"{manifest.corpus_id}\x1f{manifest.dim}\x1f{manifest.layer_mode}".encode())
    for e in sorted(manifest.words, key=lambda e: e.surface):
        h.update(f"\x1e{e.surface}\x1f{e.count}\x1f{e.checksum}".encode())
    return h.hexdigest()


def write_archive(sets, path, corpus_id=None, dim=None, layer_mode=None) -> ArchiveManifest:
    """Write SiblingSets to ``path`` as an archive directory.

    All sets must share corpus_id, dim, and layer_mode; keyword overrides are
    only consulted when ``sets`` is empty (an empty archive is valid).
    Payloads round-trip bit-exactly through :func:`read_sibling_set`.
    """
    sets = list(sets)
    if sets:
        corpus_id = sets[0].corpus_id
        dim = sets[0].dim
        layer_mode = sets[0].layer_mode
        for s in sets[1:]:
            if s.dim != dim:
                raise ValueError(f"dimension mismatch: {s.word!r} has d={s.dim}, expected {dim}")
            if s.corpus_id != corpus_id:
                raise ValueError(
                    f"corpus mismatch: {s.word!r} is from {s.corpus_id!r}, expected {corpus_id!r}"
                )
            if s.layer_mode != layer_mode:
                raise ValueError(
                    f"layer_mode mismatch: {s.word!r} has {s.layer_mode!r}, expected {layer_mode!r}"
                )
        surfaces = [s.word for s in sets]
        if len(set(surfaces)) != len(surfaces):
            dupes = sorted({w for w in surfaces if surfaces.count(w) > 1})
            raise ValueError(f"duplicate words: {dupes}")
    else:
        corpus_id = corpus_id if corpus_id is not None else ""
        dim = dim if dim is not None else 1
        layer_mode = layer_mode if layer_mode is not None else LAYER_LAST

    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in sets:
        raw = np.ascontiguousarray(s.embeddings, dtype="<f4").tobytes()
        fname = _word_filename(s.word)
        (root / fname).write_bytes(raw)
        entries.append(
            WordEntry(surface=s.word, count=s.count, file=fname, checksum=payload_checksum(raw))
        )

    manifest = ArchiveManifest(
        corpus_id=corpus_id, dim=dim, layer_mode=layer_mode, words=entries, root=root
    )
    (root / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=1) + "\n")
    return manifest


def read_manifest(path) -> ArchiveManifest:
    """Load and validate an archive manifest.

    Every listed payload file must exist and be exactly 4 * count * dim bytes;
    a wrong byte length is never silently reinterpreted.
    """
    root = Path(path)
    mpath = root / MANIFEST_NAME
    if not mpath.is_file():
        raise ArchiveError(f"no manifest at {mpath}")
    try:
        data = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"manifest is not valid JSON: {exc}") from exc

    try:
        words = [
            WordEntry(
                surface=w["surface"],
                count=int(w["count"]),
                file=w["file"],
                checksum=w["checksum"],
            )
            for w in data["words"]
        ]
        manifest = ArchiveManifest(
            corpus_id=data["corpus_id"],
            dim=int(data["dim"]),
            layer_mode=data["layer_mode"],
            words=words,
            schema_version=int(data["schema_version"]),
            root=root,
        )
    except (KeyError, TypeError) as exc:
        raise ArchiveError(f"manifest missing required field: {exc}") from exc

    for e in manifest.words:
        fpath = root / e.file
        if not fpath.is_file():
            raise ArchiveError(f"payload file missing: {fpath}")
        expected = 4 * e.count * manifest.dim
        actual = fpath.stat().st_size
        if actual != expected:
            raise ArchiveError(
                f"payload size mismatch for {e.surface!r}: {actual} bytes on disk, "
                f"expected {expected} (count={e.count}, dim={manifest.dim})"
            )
    return manifest


def read_sibling_set(manifest: ArchiveManifest, word: str) -> SiblingSet:
    """Read one word's embedding matrix, verifying size and checksum."""
    if manifest.root is None:
        raise ArchiveError("manifest has no root directory; load it with read_manifest")
    entry = manifest.entry(word)
    raw = (Path(manifest.root) / entry.file).read_bytes()
    expected = 4 * entry.count * manifest.dim
    if len(raw) != expected:
        raise ArchiveError(
            f"truncated payload for {word!r}: {len(raw)} bytes, expected {expected}"
        )
    if payload_checksum(raw) != entry.checksum:
        raise ChecksumMismatch(f"checksum mismatch for {word!r} in {manifest.root}")
    emb = np.frombuffer(raw, dtype="<f4").reshape(entry.count, manifest.dim)
    emb = np.ascontiguousarray(emb, dtype=np.float32)
    if not np.all(np.isfinite(emb)):
        raise ArchiveError(f"non-finite value in payload for {word!r}")
    return SiblingSet(
        word=word,
        corpus_id=manifest.corpus_id,
        embeddings=emb,
        layer_mode=manifest.layer_mode,
    )
