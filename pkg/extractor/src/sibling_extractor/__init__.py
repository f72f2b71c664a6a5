"""Extract per-occurrence contextual embeddings into sibling archives.

The package reads a one-sentence-per-line corpus, embeds every occurrence of
a target word list with a pretrained transformer encoder, and writes the
vectors in the sibling-archive directory format (JSON ``manifest`` plus one
raw float32 ``.f32`` matrix per word) that downstream scoring tools consume.
"""

from .archive_writer import (
    LAYER_LAST,
    LAYER_MEAN_LAST_FOUR,
    LAYER_MODES,
    SCHEMA_VERSION,
    ArchiveManifest,
    WordEntry,
    payload_checksum,
    word_filename,
    write_archive,
)
from .extract import MATCH_LEMMA, MATCH_SURFACE, ExtractionJob, extract

__version__ = "0.1.0"

__all__ = [
    "ArchiveManifest",
    "ExtractionJob",
    "LAYER_LAST",
    "LAYER_MEAN_LAST_FOUR",
    "LAYER_MODES",
    "MATCH_LEMMA",
    "MATCH_SURFACE",
    "SCHEMA_VERSION",
    "WordEntry",
    "extract",
    "payload_checksum",
    "word_filename",
    "write_archive",
]
