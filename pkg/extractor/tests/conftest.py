"""Shared fixtures: a tiny deterministic encoder on disk, a toy corpus, archives.

The model is a randomly initialised 4-layer encoder with a hand-rolled
WordPiece vocabulary, saved to a temp directory so extraction exercises the
same load-from-identifier path as a real pretrained checkpoint — no network
involved. ``riverbank`` is deliberately absent from the vocabulary so it
splits into ``river`` + ``##bank`` and exercises subtoken pooling.
"""

import subprocess

import pytest
import torch
from transformers import AutoModel, AutoTokenizer, BertConfig, BertModel, BertTokenizerFast

from sibling_extractor import ExtractionJob, extract

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "a", "an", "old", "new", "wide", "deep", "green", "stone",
    "river", "bank", "##bank", "water", "boat", "fish", "tree", "road",
    "cell", "wall", "town", "man", "dog", "sun", "moon", "light",
    "was", "is", "near", "by", "under", "over", "and", "of", "on", "in",
    ",", ".", "poison",
]

HIDDEN = 16
MODEL_LIMIT = 24  # specials included, so content windows hold 22 subtokens

TARGETS = ("river", "bank", "riverbank", "cell", "magma")


def toy_lines():
    """100 sentences with hand-placed target occurrences.

    Notable lines: 40/41 are exact duplicates (determinism check), 77 has a
    capitalised ``Bank``, the ``k == 1`` template has ``bank`` glued to a
    comma, line 33 is longer than the model limit with ``river`` as its last
    word (lost if truncation were not occurrence-centered), and ``cell``
    appears in exactly three sentences. ``magma`` never occurs.
    """
    lines = []
    for i in range(100):
        k = i % 10
        if k in (0, 3):
            lines.append("the river was wide and deep")
        elif k == 1:
            lines.append("a boat by the bank, under the sun.")
        elif k == 2:
            lines.append("the old tree was near the road")
        elif k == 4:
            lines.append("the green fish was in the water")
        elif k == 5:
            lines.append("the river by the river bank")
        elif k == 6:
            lines.append("a dog on the road was old")
        elif k == 7:
            lines.append("the town wall was under the moon")
        elif k == 8:
            lines.append("the man and the dog by the tree")
        else:
            lines.append("the sun was over the water")
    lines[10] = "the cell wall was deep"
    lines[50] = "the cell wall was deep"
    lines[90] = "the cell was near the wall"
    lines[40] = "the fish near the riverbank was old"
    lines[41] = "the fish near the riverbank was old"
    lines[60] = "the riverbank was green"
    lines[77] = "the Bank was green ."
    lines[33] = " ".join(["old", "new", "wide", "deep", "green"] * 5 + ["deep", "old", "new", "river"])
    assert len(lines) == 100
    return lines


@pytest.fixture(scope="session")
def model_spec():
    """Facts about the fixture model that assertions need."""
    return {"hidden": HIDDEN, "limit": MODEL_LIMIT, "targets": TARGETS}


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("tiny-encoder")
    tokenizer = BertTokenizerFast(vocab={w: i for i, w in enumerate(VOCAB)})
    tokenizer.model_max_length = MODEL_LIMIT
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=HIDDEN,
        num_hidden_layers=4,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=MODEL_LIMIT,
    )
    torch.manual_seed(0)
    model = BertModel(config)
    model.eval()
    tokenizer.save_pretrained(path)
    model.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def loaded(model_dir):
    tokenizer = AutoTokenizer.from_pretrained(model_dir)
    model = AutoModel.from_pretrained(model_dir)
    model.eval()
    return tokenizer, model


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "toy-corpus.txt"
    path.write_text("\n".join(toy_lines()) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def toy_archives(model_dir, loaded, toy_corpus, tmp_path_factory):
    """One extraction per layer mode over the toy corpus, shared by tests."""
    tokenizer, model = loaded
    root = tmp_path_factory.mktemp("archives")
    out = {}
    for mode in ("last", "mean-last-four"):
        job = ExtractionJob(
            corpus_path=toy_corpus,
            targets=TARGETS,
            model_id=str(model_dir),
            output_path=root / mode,
            layer_mode=mode,
        )
        out[mode] = extract(job, tokenizer=tokenizer, model=model)
    return out


@pytest.fixture(scope="session")
def grep_count():
    """Count whole-word, case-insensitive occurrences the way grep does."""

    def count(path, word):
        proc = subprocess.run(
            ["grep", "-o", "-i", "-w", "--", word, str(path)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode in (0, 1), proc.stderr
        return len(proc.stdout.splitlines())

    return count
