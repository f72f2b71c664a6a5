"""Turning raw corpora into sibling-embedding archives.

Given a one-sentence-per-line corpus, a list of target words, and a
pretrained transformer encoder, :func:`extract` collects one contextual
vector per target occurrence and writes the result as an archive directory.

Occurrence handling follows a few fixed rules:

* Matching is case-insensitive whole-word search, the same occurrences a
  word-matching ``grep`` would count. With ``lemmatized=True`` the corpus is
  taken to hold ``lemma_pos`` tokens: the trailing ``_pos`` tag is stripped
  from every token (and from the targets) before matching and before the text
  is handed to the model, and matching happens on the lemma.
* A word split into several subtokens gets the mean of its subtoken vectors.
* Sentences longer than the model limit are truncated to a window of
  subtokens centered on the occurrence, so the occurrence itself is never
  lost to truncation.
* Identical model inputs are encoded once and reused, so repeated sentences
  yield bit-identical vectors within a run.

Vectors for one word are stacked in corpus order. Inference is batched;
the archive is written single-threaded at the end.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .archive_writer import (
    LAYER_LAST,
    LAYER_MODES,
    ArchiveManifest,
    write_archive,
)

log = logging.getLogger(__name__)

MATCH_SURFACE = "surface"
MATCH_LEMMA = "lemma"

# Layer pooling that averages the last four encoder layers needs the model to
# have at least four of them (the hidden-state list also carries the embedding
# output in front, hence the +1 below).
_MIN_STATES_FOR_MEAN_FOUR = 5


@dataclass(frozen=True)
class ExtractionJob:
    """One extraction run: which corpus, which words, which model, where to.

    ``targets`` are kept in the given order (duplicates dropped) and become
    the manifest's word order. ``max_contexts`` caps how many occurrences per
    word are embedded, keeping the first ones in corpus order. ``corpus_id``
    defaults to the corpus file's stem.
    """

    corpus_path: str | Path
    targets: tuple
    model_id: str
    output_path: str | Path
    layer_mode: str = LAYER_LAST
    max_contexts: int | None = None
    lemmatized: bool = False
    corpus_id: str | None = None
    batch_size: int = 32

    def __post_init__(self):
        if self.layer_mode not in LAYER_MODES:
            raise ValueError(
                f"unknown layer_mode {self.layer_mode!r}, expected one of {LAYER_MODES}"
            )
        cleaned = []
        seen = set()
        for word in self.targets:
            if not isinstance(word, str) or not word or word.split() != [word]:
                raise ValueError(f"target words must be single non-empty tokens, got {word!r}")
            if word not in seen:
                seen.add(word)
                cleaned.append(word)
        if not cleaned:
            raise ValueError("no target words given")
        object.__setattr__(self, "targets", tuple(cleaned))
        if self.max_contexts is not None and self.max_contexts < 1:
            raise ValueError(f"max_contexts must be >= 1 or None, got {self.max_contexts}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def matching(self) -> str:
        return MATCH_LEMMA if self.lemmatized else MATCH_SURFACE


@dataclass
class _Occurrence:
    """One embedded occurrence: which cached encoding, which positions in it."""

    encoding: int
    positions: tuple


def _strip_pos(token: str) -> str:
    """Drop a trailing ``_tag`` from a ``lemma_pos`` token; keep anything else."""
    head, sep, tail = token.rpartition("_")
    if sep and head and tail:
        return head
    return token


def _lemma_text(line: str) -> str:
    return " ".join(_strip_pos(token) for token in line.split())


def _occurrence_pattern(word: str) -> re.Pattern:
    # Word-constituent boundaries: the occurrences `grep -o -i -w` would count.
    return re.compile(rf"(?<!\w){re.escape(word)}(?!\w)", re.IGNORECASE)


def _special_template(tokenizer):
    """Learn which special token ids wrap a bare id sequence.

    Returns ``(prefix, suffix)`` such that the model input for bare subtoken
    ids ``w`` is ``prefix + w + suffix``. Learned by comparing encodings of a
    probe string with and without special tokens, so it works for any
    tokenizer without relying on class-specific helpers.
    """
    empty = list(tokenizer("", add_special_tokens=True)["input_ids"])
    for probe in ("a", "x", "0", "the"):
        inner = list(tokenizer(probe, add_special_tokens=False)["input_ids"])
        if not inner:
            continue
        wrapped = list(tokenizer(probe, add_special_tokens=True)["input_ids"])
        k = len(inner)
        for cut in range(len(empty) + 1):
            if (
                wrapped[:cut] == empty[:cut]
                and wrapped[cut:cut + k] == inner
                and wrapped[cut + k:] == empty[cut:]
            ):
                return tuple(empty[:cut]), tuple(empty[cut:])
    log.debug("could not learn a special-token template; windows get no specials")
    return (), ()


def _model_limit(tokenizer, model) -> int:
    """Longest input (special tokens included) the tokenizer/model pair takes."""
    candidates = []
    mml = getattr(tokenizer, "model_max_length", None)
    if isinstance(mml, int) and 0 < mml < 1_000_000:
        candidates.append(mml)
    mpe = getattr(getattr(model, "config", None), "max_position_embeddings", None)
    if isinstance(mpe, int) and mpe > 0:
        candidates.append(mpe)
    return min(candidates) if candidates else 512


def _probe_tokenizer(tokenizer):
    """Fail fast when the tokenizer cannot produce offsets at all."""
    try:
        tokenizer(
            "a",
            add_special_tokens=True,
            return_offsets_mapping=True,
            return_special_tokens_mask=True,
        )
    except Exception as exc:
        raise ValueError(
            f"tokenizer does not support offset mappings, cannot align occurrences: {exc}"
        ) from exc


def _scan_corpus(job: ExtractionJob, tokenizer, limit: int):
    """Find target occurrences and build the unique model inputs they need.

    Returns ``(encodings, per_word, stats)`` where ``encodings`` is the list
    of unique input-id tuples, ``per_word`` maps target index to its
    occurrences in corpus order, and ``stats`` counts scanned sentences,
    sentences skipped on tokenizer failure, and occurrences dropped because
    they could not be aligned to subtokens.
    """
    prefix, suffix = _special_template(tokenizer)
    window_cap = limit - len(prefix) - len(suffix)
    if window_cap < 1:
        raise ValueError(f"model limit {limit} leaves no room for content tokens")

    patterns = [_occurrence_pattern(_strip_pos(t) if job.lemmatized else t) for t in job.targets]
    per_word = {i: [] for i in range(len(job.targets))}
    encodings = []
    enc_index = {}
    stats = {"sentences": 0, "skipped_sentences": 0, "dropped_occurrences": 0}

    def intern(ids) -> int:
        key = tuple(ids)
        idx = enc_index.get(key)
        if idx is None:
            idx = len(encodings)
            enc_index[key] = idx
            encodings.append(key)
        return idx

    def capped(t_idx) -> bool:
        return job.max_contexts is not None and len(per_word[t_idx]) >= job.max_contexts

    with open(job.corpus_path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            text = line.rstrip("\n")
            if job.lemmatized:
                text = _lemma_text(text)
            if not text.strip():
                continue
            stats["sentences"] += 1

            found = [
                (t_idx, match.start(), match.end())
                for t_idx, pattern in enumerate(patterns)
                if not capped(t_idx)
                for match in pattern.finditer(text)
            ]
            if not found:
                if job.max_contexts is not None and all(
                    capped(t) for t in range(len(job.targets))
                ):
                    break
                continue

            try:
                enc = tokenizer(
                    text,
                    add_special_tokens=True,
                    return_offsets_mapping=True,
                    return_special_tokens_mask=True,
                )
                ids = list(enc["input_ids"])
                offsets = list(enc["offset_mapping"])
                smask = list(enc["special_tokens_mask"])
            except Exception:
                stats["skipped_sentences"] += 1
                log.debug("tokenizer failed on line %d; sentence skipped", line_no)
                continue

            content = [i for i in range(len(ids)) if not smask[i]]

            if len(ids) <= limit:
                enc_idx = intern(ids)
                for t_idx, start, end in found:
                    if capped(t_idx):
                        continue
                    positions = tuple(
                        i for i in content if offsets[i][0] < end and offsets[i][1] > start
                    )
                    if not positions:
                        stats["dropped_occurrences"] += 1
                        log.debug(
                            "no subtokens align with %r on line %d; occurrence dropped",
                            job.targets[t_idx],
                            line_no,
                        )
                        continue
                    per_word[t_idx].append(_Occurrence(enc_idx, positions))
                continue

            # Sentence exceeds the model limit: cut a window of bare subtokens
            # centered on each occurrence and re-wrap it in the special tokens.
            bare_ids = [ids[i] for i in content]
            bare_offsets = [offsets[i] for i in content]
            for t_idx, start, end in found:
                if capped(t_idx):
                    continue
                span = [
                    j for j, (a, b) in enumerate(bare_offsets) if a < end and b > start
                ]
                if not span:
                    stats["dropped_occurrences"] += 1
                    log.debug(
                        "no subtokens align with %r on line %d; occurrence dropped",
                        job.targets[t_idx],
                        line_no,
                    )
                    continue
                span_lo, span_hi = span[0], span[-1]
                if span_hi - span_lo + 1 > window_cap:
                    stats["dropped_occurrences"] += 1
                    log.debug(
                        "occurrence of %r on line %d is wider than the model window",
                        job.targets[t_idx],
                        line_no,
                    )
                    continue
                center = (span_lo + span_hi + 1) // 2
                lo = center - window_cap // 2
                lo = min(lo, span_lo)
                lo = max(lo, span_hi + 1 - window_cap)
                lo = max(0, min(lo, len(bare_ids) - window_cap))
                window = bare_ids[lo:lo + window_cap]
                wrapped = list(prefix) + window + list(suffix)
                positions = tuple(len(prefix) + (p - lo) for p in span)
                per_word[t_idx].append(_Occurrence(intern(wrapped), positions))

    return encodings, per_word, stats


def _embed_encodings(encodings, needed, tokenizer, model, layer_mode, batch_size):
    """Run batched inference and pool the requested positions.

    ``needed`` maps encoding index to a list of ``(slot, positions)`` pairs;
    the returned dict maps each slot to its pooled float32 vector.
    """
    pad_id = tokenizer.pad_token_id
    if pad_id is None:
        pad_id = 0
    device = next(model.parameters()).device
    results = {}
    model.eval()
    with torch.no_grad():
        for first in range(0, len(encodings), batch_size):
            chunk = encodings[first:first + batch_size]
            width = max(len(ids) for ids in chunk)
            input_ids = torch.full((len(chunk), width), pad_id, dtype=torch.long)
            attention = torch.zeros((len(chunk), width), dtype=torch.long)
            for row, ids in enumerate(chunk):
                input_ids[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
                attention[row, : len(ids)] = 1
            outputs = model(
                input_ids=input_ids.to(device),
                attention_mask=attention.to(device),
                output_hidden_states=True,
            )
            states = outputs.hidden_states
            if layer_mode == LAYER_LAST:
                pooled = states[-1]
            else:
                if len(states) < _MIN_STATES_FOR_MEAN_FOUR:
                    raise ValueError(
                        f"layer_mode {layer_mode!r} needs a model with at least four "
                        f"encoder layers, got {len(states) - 1}"
                    )
                pooled = (states[-1] + states[-2] + states[-3] + states[-4]) / 4.0
            pooled = pooled.to(torch.float32).cpu()
            for row in range(len(chunk)):
                for slot, positions in needed.get(first + row, ()):
                    vec = pooled[row, list(positions), :].mean(dim=0)
                    results[slot] = np.array(vec.numpy(), dtype=np.float32)
    return results


def extract(job: ExtractionJob, *, tokenizer=None, model=None) -> ArchiveManifest:
    """Embed every occurrence of the job's targets and write the archive.

    ``tokenizer`` and ``model`` may be passed in to reuse an already-loaded
    pair across several jobs; by default both are loaded from
    ``job.model_id``. Returns the written manifest, whose ``extraction``
    block records the matching mode, targets that never occurred (zero
    count), and how many sentences failed tokenization.
    """
    from transformers import AutoModel, AutoTokenizer

    if tokenizer is None:
        tokenizer = AutoTokenizer.from_pretrained(job.model_id)
    if model is None:
        model = AutoModel.from_pretrained(job.model_id)
    model.eval()
    _probe_tokenizer(tokenizer)

    if job.layer_mode != LAYER_LAST:
        layers = getattr(getattr(model, "config", None), "num_hidden_layers", None)
        if isinstance(layers, int) and layers + 1 < _MIN_STATES_FOR_MEAN_FOUR:
            raise ValueError(
                f"layer_mode {job.layer_mode!r} needs a model with at least four "
                f"encoder layers, got {layers}"
            )

    limit = _model_limit(tokenizer, model)
    encodings, per_word, stats = _scan_corpus(job, tokenizer, limit)
    log.info(
        "scanned %d sentences: %d occurrences across %d unique model inputs",
        stats["sentences"],
        sum(len(v) for v in per_word.values()),
        len(encodings),
    )

    needed = {}
    for t_idx, occurrences in per_word.items():
        for o_idx, occ in enumerate(occurrences):
            needed.setdefault(occ.encoding, []).append(((t_idx, o_idx), occ.positions))
    results = _embed_encodings(
        encodings, needed, tokenizer, model, job.layer_mode, job.batch_size
    )

    corpus_id = job.corpus_id if job.corpus_id is not None else Path(job.corpus_path).stem
    vectors = {}
    missing = []
    for t_idx, target in enumerate(job.targets):
        rows = [results[(t_idx, o_idx)] for o_idx in range(len(per_word[t_idx]))]
        if rows:
            vectors[target] = np.stack(rows).astype(np.float32)
        else:
            log.warning(
                "target %r has no occurrences in %s; recorded with zero count",
                target,
                corpus_id,
            )
            missing.append({"surface": target, "count": 0})

    if vectors:
        dim = next(iter(vectors.values())).shape[1]
    else:
        dim = getattr(getattr(model, "config", None), "hidden_size", None)
        if not isinstance(dim, int) or dim < 1:
            raise ValueError("cannot determine embedding width for an empty archive")

    if stats["skipped_sentences"]:
        log.warning(
            "skipped %d sentences that failed tokenization", stats["skipped_sentences"]
        )
    if stats["dropped_occurrences"]:
        log.warning(
            "dropped %d occurrences that could not be aligned to subtokens",
            stats["dropped_occurrences"],
        )

    extraction = {
        "model": job.model_id,
        "matching": job.matching,
        "subtoken_pooling": "mean",
        "truncation": "centered-window",
        "max_contexts": job.max_contexts,
        "sentences": stats["sentences"],
        "skipped_sentences": stats["skipped_sentences"],
        "dropped_occurrences": stats["dropped_occurrences"],
        "missing": missing,
    }
    manifest = write_archive(
        vectors,
        job.output_path,
        corpus_id=corpus_id,
        dim=int(dim),
        layer_mode=job.layer_mode,
        extraction=extraction,
    )
    log.info(
        "wrote archive %s: %d words, dim %d, layer mode %s",
        manifest.root,
        len(manifest.words),
        manifest.dim,
        manifest.layer_mode,
    )
    return manifest
