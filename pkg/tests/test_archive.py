import json

import numpy as np
import pytest

from siblingshift import archive
from siblingshift.archive import (
    ArchiveError,
    ChecksumMismatch,
    SiblingSet,
    read_manifest,
    read_sibling_set,
    write_archive,
)
from helpers import make_sets


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    clouds = {
        "plain": rng.normal(size=(5, 3)).astype(np.float32),
        "naïve": rng.normal(size=(2, 3)).astype(np.float32),
        "with/slash and space": rng.normal(size=(9, 3)).astype(np.float32),
    }
    written = write_archive(make_sets(clouds, "corpus-a"), tmp_path / "arch")
    manifest = read_manifest(tmp_path / "arch")
    assert manifest.corpus_id == "corpus-a"
    assert manifest.dim == 3
    assert manifest.layer_mode == archive.LAYER_LAST
    assert manifest.word_list() == list(clouds)
    for word, cloud in clouds.items():
        sib = read_sibling_set(manifest, word)
        assert sib.embeddings.dtype == np.float32
        assert np.array_equal(sib.embeddings, cloud)
        assert sib.count == cloud.shape[0]
        assert sib.corpus_id == "corpus-a"
    assert archive.archive_checksum(written) == archive.archive_checksum(manifest)


def test_payload_size_is_4nd(tmp_path):
    cloud = {"w": np.array([[1, 2, 3], [4, 5, 6]], dtype=np.float32)}
    manifest = write_archive(make_sets(cloud, "c"), tmp_path / "arch")
    entry = manifest.entry("w")
    payload = (tmp_path / "arch" / entry.file).read_bytes()
    assert len(payload) == 24
    assert entry.count == 2
    assert manifest.dim == 3


def test_unknown_word(tmp_path):
    manifest = write_archive(make_sets({"a": [[0.0]]}, "c"), tmp_path / "arch")
    with pytest.raises(KeyError):
        read_sibling_set(manifest, "b")


def test_corrupted_byte_raises_checksum_mismatch(tmp_path):
    cloud = {"w": np.random.default_rng(1).normal(size=(4, 2)).astype(np.float32)}
    manifest = write_archive(make_sets(cloud, "c"), tmp_path / "arch")
    fpath = tmp_path / "arch" / manifest.entry("w").file
    raw = bytearray(fpath.read_bytes())
    raw[5] ^= 0xFF
    fpath.write_bytes(bytes(raw))
    with pytest.raises(ChecksumMismatch):
        read_sibling_set(read_manifest(tmp_path / "arch"), "w")


def test_truncated_file_raises(tmp_path):
    cloud = {"w": np.random.default_rng(2).normal(size=(4, 2)).astype(np.float32)}
    manifest = write_archive(make_sets(cloud, "c"), tmp_path / "arch")
    fpath = tmp_path / "arch" / manifest.entry("w").file
    fpath.write_bytes(fpath.read_bytes()[:-4])
    with pytest.raises(ArchiveError):
        read_manifest(tmp_path / "arch")


def test_byte_length_must_match_manifest_exactly(tmp_path):
    # Appending bytes must fail too: length != 4*N*d is never reinterpreted.
    cloud = {"w": np.random.default_rng(3).normal(size=(4, 2)).astype(np.float32)}
    manifest = write_archive(make_sets(cloud, "c"), tmp_path / "arch")
    fpath = tmp_path / "arch" / manifest.entry("w").file
    fpath.write_bytes(fpath.read_bytes() + b"\x00" * 8)
    with pytest.raises(ArchiveError):
        read_manifest(tmp_path / "arch")


def test_duplicate_words_rejected(tmp_path):
    sets = make_sets({"w": [[1.0, 2.0]]}, "c") + make_sets({"w": [[3.0, 4.0]]}, "c")
    with pytest.raises(ValueError, match="duplicate"):
        write_archive(sets, tmp_path / "arch")


def test_mixed_dim_rejected(tmp_path):
    sets = make_sets({"a": [[1.0, 2.0]]}, "c") + make_sets({"b": [[1.0, 2.0, 3.0]]}, "c")
    with pytest.raises(ValueError, match="dimension"):
        write_archive(sets, tmp_path / "arch")


def test_mixed_corpus_rejected(tmp_path):
    sets = make_sets({"a": [[1.0]]}, "c1") + make_sets({"b": [[2.0]]}, "c2")
    with pytest.raises(ValueError, match="corpus"):
        write_archive(sets, tmp_path / "arch")


def test_empty_archive(tmp_path):
    write_archive([], tmp_path / "arch", corpus_id="empty", dim=4)
    manifest = read_manifest(tmp_path / "arch")
    assert manifest.word_list() == []
    assert manifest.corpus_id == "empty"
    assert "anything" not in manifest


def test_nonfinite_embeddings_rejected():
    with pytest.raises(ValueError):
        SiblingSet(
            word="w",
            corpus_id="c",
            embeddings=np.array([[np.nan, 1.0]], dtype=np.float32),
            layer_mode=archive.LAYER_LAST,
        )


def test_missing_manifest(tmp_path):
    (tmp_path / "arch").mkdir()
    with pytest.raises(ArchiveError):
        read_manifest(tmp_path / "arch")


def test_garbled_manifest(tmp_path):
    (tmp_path / "arch").mkdir()
    (tmp_path / "arch" / archive.MANIFEST_NAME).write_text("{not json")
    with pytest.raises(ArchiveError):
        read_manifest(tmp_path / "arch")


def test_manifest_schema_fields(tmp_path):
    manifest = write_archive(make_sets({"w": [[1.0, 2.0]]}, "c"), tmp_path / "arch")
    data = json.loads((tmp_path / "arch" / archive.MANIFEST_NAME).read_text())
    assert data["schema_version"] == archive.SCHEMA_VERSION
    assert data["corpus_id"] == "c"
    assert data["dim"] == 2
    assert data["layer_mode"] == archive.LAYER_LAST
    assert data["words"][0]["surface"] == "w"
    assert data["words"][0]["checksum"] == manifest.entry("w").checksum


def test_archive_checksum_tracks_payload(tmp_path):
    rng = np.random.default_rng(4)
    cloud = rng.normal(size=(6, 3)).astype(np.float32)
    m1 = write_archive(make_sets({"w": cloud}, "c"), tmp_path / "a1")
    m2 = write_archive(make_sets({"w": cloud.copy()}, "c"), tmp_path / "a2")
    changed = cloud.copy()
    changed[0, 0] += 1.0
    m3 = write_archive(make_sets({"w": changed}, "c"), tmp_path / "a3")
    assert archive.archive_checksum(m1) == archive.archive_checksum(m2)
    assert archive.archive_checksum(m1) != archive.archive_checksum(m3)


def test_single_occurrence_word_allowed(tmp_path):
    # N = 1 is a valid sibling set at the archive layer.
    manifest = write_archive(make_sets({"rare": [[0.5, -0.5]]}, "c"), tmp_path / "arch")
    sib = read_sibling_set(manifest, "rare")
    assert sib.count == 1
