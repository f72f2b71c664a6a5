"""Extraction behaviour: counts, alignment, pooling, truncation, archives.

Archives are validated with the scoring package's reader — the consumer the
files are written for — and occurrence counts are checked against ``grep``,
the plainest independent oracle for whole-word matching.
"""

import logging

import numpy as np
import pytest
import torch
from siblingshift import archive as reader

from sibling_extractor import ExtractionJob, extract, write_archive
from sibling_extractor.extract import _special_template, _strip_pos

def read_rows(manifest_root, word):
    m = reader.read_manifest(manifest_root)
    return reader.read_sibling_set(m, word).embeddings


def direct_vectors(loaded, sentence, last_four=False):
    """Reference per-position vectors from a plain single-sentence model call."""
    tokenizer, model = loaded
    enc = tokenizer(sentence, return_tensors="pt")
    with torch.no_grad():
        out = model(**enc, output_hidden_states=True)
    states = out.hidden_states
    pooled = (states[-1] + states[-2] + states[-3] + states[-4]) / 4.0 if last_four else states[-1]
    tokens = tokenizer.convert_ids_to_tokens(enc["input_ids"][0])
    return pooled[0].numpy(), tokens


# ---------------------------------------------------------------------------
# job validation


def test_job_rejects_bad_inputs(tmp_path):
    ok = dict(corpus_path="c.txt", targets=("a",), model_id="m", output_path=tmp_path)
    with pytest.raises(ValueError, match="layer_mode"):
        ExtractionJob(**ok, layer_mode="first")
    with pytest.raises(ValueError, match="no target words"):
        ExtractionJob(**{**ok, "targets": ()})
    with pytest.raises(ValueError, match="single non-empty"):
        ExtractionJob(**{**ok, "targets": ("two words",)})
    with pytest.raises(ValueError, match="single non-empty"):
        ExtractionJob(**{**ok, "targets": ("",)})
    with pytest.raises(ValueError, match="max_contexts"):
        ExtractionJob(**ok, max_contexts=0)
    with pytest.raises(ValueError, match="batch_size"):
        ExtractionJob(**ok, batch_size=0)


def test_job_deduplicates_targets_in_order(tmp_path):
    job = ExtractionJob(
        corpus_path="c.txt",
        targets=("b", "a", "b", "c", "a"),
        model_id="m",
        output_path=tmp_path,
    )
    assert job.targets == ("b", "a", "c")
    assert job.matching == "surface"
    assert ExtractionJob(
        corpus_path="c.txt", targets=("a",), model_id="m", output_path=tmp_path, lemmatized=True
    ).matching == "lemma"


def test_strip_pos_only_removes_final_tag():
    assert _strip_pos("attack_nn") == "attack"
    assert _strip_pos("x_y_z") == "x_y"
    assert _strip_pos("plain") == "plain"
    assert _strip_pos("_nn") == "_nn"
    assert _strip_pos("attack_") == "attack_"


def test_special_template_learned_from_tokenizer(loaded):
    tokenizer, _ = loaded
    prefix, suffix = _special_template(tokenizer)
    assert prefix == (tokenizer.cls_token_id,)
    assert suffix == (tokenizer.sep_token_id,)


# ---------------------------------------------------------------------------
# round trip through the consumer's reader


def test_archive_validates_under_scoring_reader(toy_archives, toy_corpus, model_spec):
    manifest = reader.read_manifest(toy_archives["last"].root)
    assert manifest.schema_version == 1
    assert manifest.dim == model_spec["hidden"]
    assert manifest.layer_mode == "last"
    assert manifest.corpus_id == toy_corpus.stem
    assert manifest.word_list() == ["river", "bank", "riverbank", "cell"]
    for word in manifest.word_list():
        sib = reader.read_sibling_set(manifest, word)
        assert sib.embeddings.dtype == np.float32
        assert sib.dim == model_spec["hidden"]
        assert sib.count >= 1
        assert np.all(np.isfinite(sib.embeddings))


def test_counts_match_grep_for_both_layer_modes(toy_archives, toy_corpus, grep_count, model_spec):
    for mode, manifest in toy_archives.items():
        loaded_manifest = reader.read_manifest(manifest.root)
        assert loaded_manifest.layer_mode == mode
        for word in model_spec["targets"]:
            expected = grep_count(toy_corpus, word)
            if expected == 0:
                assert word not in loaded_manifest
            else:
                assert loaded_manifest.entry(word).count == expected, (mode, word)
        # sanity: the corpus actually exercises every interesting count
        assert grep_count(toy_corpus, "cell") == 3
        assert grep_count(toy_corpus, "riverbank") == 3
        assert grep_count(toy_corpus, "magma") == 0


def test_layer_modes_share_counts_and_dim_but_not_payloads(toy_archives):
    last = reader.read_manifest(toy_archives["last"].root)
    four = reader.read_manifest(toy_archives["mean-last-four"].root)
    assert last.dim == four.dim
    assert [(e.surface, e.count) for e in last.words] == [
        (e.surface, e.count) for e in four.words
    ]
    for word in last.word_list():
        a = reader.read_sibling_set(last, word).embeddings
        b = reader.read_sibling_set(four, word).embeddings
        assert a.shape == b.shape
        assert not np.array_equal(a, b), word


def test_three_sentences_three_occurrences(model_dir, loaded, tmp_path):
    corpus = tmp_path / "three.txt"
    corpus.write_text(
        "the cell wall was deep\n"
        "a cell near the road\n"
        "the man in the cell\n",
        encoding="utf-8",
    )
    tokenizer, model = loaded
    job = ExtractionJob(
        corpus_path=corpus, targets=("cell",), model_id=str(model_dir), output_path=tmp_path / "out"
    )
    manifest = extract(job, tokenizer=tokenizer, model=model)
    assert reader.read_manifest(manifest.root).entry("cell").count == 3


# ---------------------------------------------------------------------------
# determinism and vector-level oracles


def test_duplicate_sentences_give_identical_rows(toy_archives):
    rows = read_rows(toy_archives["last"].root, "riverbank")
    assert rows.shape[0] == 3
    # rows 0 and 1 come from byte-identical sentences, row 2 from a different one
    assert np.array_equal(rows[0], rows[1])
    assert not np.array_equal(rows[0], rows[2])


def test_subtoken_mean_pooling_matches_direct_model_call(toy_archives, loaded):
    sentence = "the fish near the riverbank was old"
    for mode, last_four in (("last", False), ("mean-last-four", True)):
        vectors, tokens = direct_vectors(loaded, sentence, last_four=last_four)
        positions = [i for i, tok in enumerate(tokens) if tok in ("river", "##bank")]
        assert len(positions) == 2  # the word really is split in two
        expected = vectors[positions].mean(axis=0)
        rows = read_rows(toy_archives[mode].root, "riverbank")
        np.testing.assert_allclose(rows[0], expected, rtol=1e-5, atol=1e-6)


def test_rows_are_stacked_in_corpus_order(toy_archives, loaded):
    sentences = [
        "the cell wall was deep",
        "the cell wall was deep",
        "the cell was near the wall",
    ]
    rows = read_rows(toy_archives["last"].root, "cell")
    assert rows.shape[0] == 3
    for row, sentence in zip(rows, sentences):
        vectors, tokens = direct_vectors(loaded, sentence)
        expected = vectors[tokens.index("cell")]
        np.testing.assert_allclose(row, expected, rtol=1e-5, atol=1e-6)
    # the two orderings are distinguishable: row 2 differs from row 0
    assert not np.allclose(rows[0], rows[2])


def test_max_contexts_keeps_first_occurrences(model_dir, loaded, toy_corpus, toy_archives, tmp_path):
    tokenizer, model = loaded
    job = ExtractionJob(
        corpus_path=toy_corpus,
        targets=("river",),
        model_id=str(model_dir),
        output_path=tmp_path / "capped",
        max_contexts=5,
    )
    manifest = extract(job, tokenizer=tokenizer, model=model)
    capped = read_rows(manifest.root, "river")
    assert capped.shape[0] == 5
    full = read_rows(toy_archives["last"].root, "river")
    assert full.shape[0] > 5
    np.testing.assert_allclose(capped, full[:5], rtol=1e-6, atol=1e-7)
    assert reader.read_manifest(manifest.root) is not None


# ---------------------------------------------------------------------------
# truncation of over-long sentences


def test_long_sentence_window_is_centered_on_occurrence(model_dir, loaded, tmp_path, model_spec):
    tokenizer, model = loaded
    fillers = ["old", "new", "wide", "deep", "green"]
    words = [fillers[i % 5] for i in range(40)]
    words[20] = "bank"
    corpus = tmp_path / "long.txt"
    corpus.write_text(" ".join(words) + "\n", encoding="utf-8")
    job = ExtractionJob(
        corpus_path=corpus, targets=("bank",), model_id=str(model_dir), output_path=tmp_path / "out"
    )
    manifest = extract(job, tokenizer=tokenizer, model=model)
    rows = read_rows(manifest.root, "bank")
    assert rows.shape == (1, model_spec["hidden"])

    # every filler is a single subtoken, so the content ids line up with the
    # words and the 22-subtoken window around position 20 spans [9, 31)
    content_ids = tokenizer(" ".join(words), add_special_tokens=False)["input_ids"]
    assert len(content_ids) == 40
    window = content_ids[9:31]
    assert len(window) == model_spec["limit"] - 2
    ids = torch.tensor([[tokenizer.cls_token_id, *window, tokenizer.sep_token_id]])
    with torch.no_grad():
        out = model(input_ids=ids, attention_mask=torch.ones_like(ids), output_hidden_states=True)
    expected = out.hidden_states[-1][0, 1 + (20 - 9)].numpy()
    np.testing.assert_allclose(rows[0], expected, rtol=1e-5, atol=1e-6)


def test_occurrences_at_either_end_of_long_sentences_survive(model_dir, loaded, tmp_path, grep_count):
    tokenizer, model = loaded
    fillers = ["old", "new", "wide", "deep", "green"]
    tail = [fillers[i % 5] for i in range(30)]
    corpus = tmp_path / "ends.txt"
    corpus.write_text(
        " ".join(["bank", *tail]) + "\n" + " ".join([*tail, "bank"]) + "\n",
        encoding="utf-8",
    )
    job = ExtractionJob(
        corpus_path=corpus, targets=("bank",), model_id=str(model_dir), output_path=tmp_path / "out"
    )
    manifest = extract(job, tokenizer=tokenizer, model=model)
    # head- or tail-anchored truncation would lose one of the two occurrences
    assert reader.read_manifest(manifest.root).entry("bank").count == 2
    assert grep_count(corpus, "bank") == 2


# ---------------------------------------------------------------------------
# missing targets, failures, empty archives


def test_absent_target_gets_zero_count_entry_and_warning(model_dir, loaded, tmp_path, caplog):
    tokenizer, model = loaded
    corpus = tmp_path / "small.txt"
    corpus.write_text("the river was wide and deep\n\nthe sun was over the water\n", encoding="utf-8")
    job = ExtractionJob(
        corpus_path=corpus,
        targets=("river", "magma"),
        model_id=str(model_dir),
        output_path=tmp_path / "out",
    )
    with caplog.at_level(logging.WARNING, logger="sibling_extractor.extract"):
        manifest = extract(job, tokenizer=tokenizer, model=model)
    assert manifest.extraction["missing"] == [{"surface": "magma", "count": 0}]
    assert "magma" not in reader.read_manifest(manifest.root)
    assert "zero count" in caplog.text
    # the blank line is not a sentence
    assert manifest.extraction["sentences"] == 2


def test_all_targets_missing_still_writes_valid_archive(model_dir, loaded, tmp_path, model_spec):
    tokenizer, model = loaded
    corpus = tmp_path / "none.txt"
    corpus.write_text("the sun was over the water\n", encoding="utf-8")
    job = ExtractionJob(
        corpus_path=corpus, targets=("magma",), model_id=str(model_dir), output_path=tmp_path / "out"
    )
    manifest = extract(job, tokenizer=tokenizer, model=model)
    loaded_manifest = reader.read_manifest(manifest.root)
    assert loaded_manifest.word_list() == []
    assert loaded_manifest.dim == model_spec["hidden"]  # taken from the model, not the payloads


class _PoisonTokenizer:
    """Delegates everything, but fails on sentences containing a marker."""

    def __init__(self, inner, marker):
        self._inner = inner
        self._marker = marker

    def __call__(self, text, **kwargs):
        if isinstance(text, str) and self._marker in text:
            raise ValueError("poisoned sentence")
        return self._inner(text, **kwargs)

    def __getattr__(self, name):
        return getattr(self._inner, name)


def test_tokenizer_failure_skips_sentence_with_logged_count(model_dir, loaded, tmp_path, caplog):
    tokenizer, model = loaded
    corpus = tmp_path / "poisoned.txt"
    corpus.write_text(
        "the river was wide and deep\n"
        "the poison river was deep\n"
        "the river by the road\n",
        encoding="utf-8",
    )
    job = ExtractionJob(
        corpus_path=corpus, targets=("river",), model_id=str(model_dir), output_path=tmp_path / "out"
    )
    with caplog.at_level(logging.WARNING, logger="sibling_extractor.extract"):
        manifest = extract(job, tokenizer=_PoisonTokenizer(tokenizer, "poison"), model=model)
    assert reader.read_manifest(manifest.root).entry("river").count == 2
    assert manifest.extraction["skipped_sentences"] == 1
    assert "skipped 1 sentences" in caplog.text


# ---------------------------------------------------------------------------
# lemmatized corpora


def test_lemma_matching_strips_tags_and_counts_lemmas(model_dir, loaded, tmp_path):
    tokenizer, model = loaded
    corpus = tmp_path / "lemmatized.txt"
    corpus.write_text(
        "the_dt bank_nn of_in the_dt river_nn was_vbd wide_jj\n"
        "a_dt boat_nn by_in the_dt bank_nn .\n"
        "the_dt Bank_nn was_vbd green_jj\n",
        encoding="utf-8",
    )
    job = ExtractionJob(
        corpus_path=corpus,
        targets=("bank_nn",),
        model_id=str(model_dir),
        output_path=tmp_path / "lemma-out",
        lemmatized=True,
    )
    manifest = extract(job, tokenizer=tokenizer, model=model)
    assert manifest.extraction["matching"] == "lemma"
    loaded_manifest = reader.read_manifest(manifest.root)
    # the surface recorded is the target as given, tag included
    assert loaded_manifest.word_list() == ["bank_nn"]
    assert loaded_manifest.entry("bank_nn").count == 3

    # the model saw the tag-stripped text: row 0 equals a direct call on it
    rows = reader.read_sibling_set(loaded_manifest, "bank_nn").embeddings
    vectors, tokens = direct_vectors(loaded, "the bank of the river was wide")
    np.testing.assert_allclose(rows[0], vectors[tokens.index("bank")], rtol=1e-5, atol=1e-6)


def test_surface_matching_does_not_see_through_tags(model_dir, loaded, tmp_path):
    tokenizer, model = loaded
    corpus = tmp_path / "lemmatized.txt"
    corpus.write_text("the_dt bank_nn of_in the_dt river_nn\n", encoding="utf-8")
    job = ExtractionJob(
        corpus_path=corpus,
        targets=("bank",),
        model_id=str(model_dir),
        output_path=tmp_path / "surface-out",
    )
    manifest = extract(job, tokenizer=tokenizer, model=model)
    assert manifest.extraction["matching"] == "surface"
    assert manifest.extraction["missing"] == [{"surface": "bank", "count": 0}]


# ---------------------------------------------------------------------------
# writer contract


def test_writer_rejects_bad_matrices(tmp_path):
    good = {"w": np.zeros((2, 4), dtype=np.float32)}
    kwargs = dict(corpus_id="c", dim=4, layer_mode="last", extraction={})
    write_archive(good, tmp_path / "ok", **kwargs)
    with pytest.raises(ValueError, match="N >= 1"):
        write_archive({"w": np.zeros((0, 4))}, tmp_path / "a", **kwargs)
    with pytest.raises(ValueError, match="width"):
        write_archive({"w": np.zeros((2, 3))}, tmp_path / "b", **kwargs)
    with pytest.raises(ValueError, match="non-finite"):
        write_archive({"w": np.full((1, 4), np.nan)}, tmp_path / "c", **kwargs)
    with pytest.raises(ValueError, match="layer_mode"):
        write_archive(good, tmp_path / "d", corpus_id="c", dim=4, layer_mode="l", extraction={})
    with pytest.raises(ValueError, match="dim"):
        write_archive({}, tmp_path / "e", corpus_id="c", dim=0, layer_mode="last", extraction={})


def test_writer_quotes_filenames_and_round_trips(tmp_path):
    rng = np.random.default_rng(5)
    mat = rng.normal(size=(3, 4)).astype(np.float32)
    manifest = write_archive(
        {"a/b c": mat},
        tmp_path / "arch",
        corpus_id="c",
        dim=4,
        layer_mode="last",
        extraction={"note": "quoting"},
    )
    assert manifest.entry("a/b c").file == "a%2Fb%20c.f32"
    back = reader.read_manifest(tmp_path / "arch")
    got = reader.read_sibling_set(back, "a/b c").embeddings
    assert np.array_equal(got, mat)
