import itertools

import numpy as np
import pytest

from siblingshift import archive
from helpers import make_sets


@pytest.fixture
def build_archive(tmp_path):
    counter = itertools.count()

    def build(clouds, corpus_id="c", layer_mode=archive.LAYER_LAST):
        path = tmp_path / f"arch{next(counter)}"
        archive.write_archive(make_sets(clouds, corpus_id, layer_mode), path)
        return path

    return build


@pytest.fixture
def archive_pair(build_archive):
    def build(clouds1, clouds2):
        return build_archive(clouds1, "c1"), build_archive(clouds2, "c2")

    return build


@pytest.fixture
def write_gold(tmp_path):
    def write(entries, name="gold.tsv"):
        path = tmp_path / name
        lines = ["# word\tscore\tchanged"]
        for e in entries:
            if len(e) == 3:
                word, score, changed = e
                lines.append(f"{word}\t{score}\t{1 if changed else 0}")
            else:
                word, score = e
                lines.append(f"{word}\t{score}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return write


@pytest.fixture
def small_corpus_pair(archive_pair):
    """4 shared words, d=6; 'moved' points at a new anchor in corpus 2.

    Every word's cloud sits on a strong word-specific anchor direction so
    that stable cross-corpus pairs stay similar; 'moved' swaps its anchor
    for a fresh one, which every measure (including the shift-invariant
    ones) can see.
    """
    rng = np.random.default_rng(7)
    words = ["steady", "moved", "calm", "plain"]
    anchors = {w: rng.normal(size=6) * 4.0 for w in words}
    moved_anchor = rng.normal(size=6) * 4.0 + 6.0
    clouds1 = {}
    clouds2 = {}
    for i, w in enumerate(words):
        clouds1[w] = anchors[w] + rng.normal(size=(24 + 3 * i, 6))
        target = moved_anchor if w == "moved" else anchors[w]
        clouds2[w] = target + rng.normal(size=(20 + 2 * i, 6))
    return archive_pair(clouds1, clouds2)
