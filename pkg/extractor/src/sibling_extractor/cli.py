"""Command-line entry point: extract sibling archives from a corpus."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .archive_writer import LAYER_LAST, LAYER_MEAN_LAST_FOUR
from .extract import ExtractionJob, extract

log = logging.getLogger(__name__)

_LAYER_CHOICES = {"last": LAYER_LAST, "four": LAYER_MEAN_LAST_FOUR}


def read_target_list(path) -> tuple:
    """Read one target word per line; blank lines and ``#`` comments skipped."""
    targets = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip()
        if word and not word.startswith("#"):
            targets.append(word)
    return tuple(targets)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sibling-extract",
        description=(
            "Embed every occurrence of the target words with a pretrained "
            "encoder and write the vectors as a sibling archive."
        ),
    )
    parser.add_argument("--corpus", required=True, help="text file, one sentence per line")
    parser.add_argument("--targets", required=True, help="text file, one target word per line")
    parser.add_argument("--model", required=True, help="pretrained model identifier or path")
    parser.add_argument(
        "--layers",
        choices=sorted(_LAYER_CHOICES),
        default="last",
        help="which hidden states to keep: the last layer, or the mean of the last four",
    )
    parser.add_argument("--out", required=True, help="archive directory to create")
    parser.add_argument(
        "--lemmatized",
        action="store_true",
        help="corpus tokens are lemma_pos; strip the tag and match on the lemma",
    )
    parser.add_argument(
        "--max-contexts",
        type=int,
        default=None,
        help="embed at most this many occurrences per word (first ones in corpus order)",
    )
    parser.add_argument(
        "--corpus-id",
        default=None,
        help="corpus identifier stored in the archive (default: corpus file stem)",
    )
    parser.add_argument("--batch-size", type=int, default=32, help="sentences per model batch")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        job = ExtractionJob(
            corpus_path=args.corpus,
            targets=read_target_list(args.targets),
            model_id=args.model,
            output_path=args.out,
            layer_mode=_LAYER_CHOICES[args.layers],
            max_contexts=args.max_contexts,
            lemmatized=args.lemmatized,
            corpus_id=args.corpus_id,
            batch_size=args.batch_size,
        )
        manifest = extract(job)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        log.error("%s", exc)
        return 1
    print(manifest.root)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
