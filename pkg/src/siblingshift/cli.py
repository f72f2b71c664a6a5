"""Command-line surface: archives -> distributions -> scores -> evaluation.

Every run logs its fully resolved configuration; re-running with the same
configuration against the same archives reproduces the output byte for byte
(sampled modes included, since RNG streams are derived from seed/word/corpus).
"""

import argparse
import json
import logging
import os
import sys
import urllib.parse

from .archive import ArchiveError, read_manifest, read_sibling_set
from .distribution import (
    DEFAULT_NUM_SAMPLES,
    DEFAULT_PSD_FLOOR,
    ESTIMATOR_CENTERED,
    ESTIMATORS,
    MODE_FULL,
    MODES,
    DegenerateCountError,
    covariance_rank,
    fit_distribution,
    save_distribution,
)
from .evaluation import (
    build_ablation_table,
    evaluate,
    fisher_significance,
    load_gold,
    write_ablation_tsv,
    write_eval_tsv,
)
from .measures import MeasureKind
from .scoring import (
    CLOUD_SAMPLED,
    CLOUD_SOURCES,
    VARIANT_FULL,
    VARIANT_IDENTITY_COV,
    VARIANT_MEAN_ONLY,
    ScoreConfig,
    load_report_tsv,
    score_corpus_pair,
    write_report_json,
    write_report_tsv,
)

log = logging.getLogger("siblingshift")

_VARIANT_TOKENS = {
    "full": VARIANT_FULL,
    "full-pipeline": VARIANT_FULL,
    "mean-only": VARIANT_MEAN_ONLY,
    "identity-cov": VARIANT_IDENTITY_COV,
}


def parse_measures(token: str) -> list:
    """Parse a --measure value: one token, a comma list, or 'all'."""
    token = token.strip().lower()
    if token == "all":
        return list(MeasureKind)
    parts = [p.strip() for p in token.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty measure list")
    kinds = []
    for p in parts:
        kind = MeasureKind.from_token(p)
        if kind not in kinds:
            kinds.append(kind)
    return kinds


def _add_scoring_flags(sp, with_second_archive=True):
    sp.add_argument("--archive1", required=True, help="first corpus archive directory")
    if with_second_archive:
        sp.add_argument("--archive2", required=True, help="second corpus archive directory")
    sp.add_argument("--words", help="word list file (one word per line); default: all shared words")
    sp.add_argument("--cov", choices=list(MODES), default=MODE_FULL,
                    help="covariance mode (default: full)")
    sp.add_argument("--estimator", choices=list(ESTIMATORS), default=ESTIMATOR_CENTERED,
                    help="covariance estimator (default: centered)")
    sp.add_argument("--samples", type=int, default=DEFAULT_NUM_SAMPLES, metavar="N",
                    help="Monte Carlo draws per word and corpus (default: 1000)")
    sp.add_argument("--seed", type=int, default=0, metavar="S", help="base RNG seed (default: 0)")
    sp.add_argument("--psd-floor", type=float, default=DEFAULT_PSD_FLOOR, metavar="F",
                    help="eigenvalue/variance floor for PSD repair (default: 1e-8)")
    sp.add_argument("--threads", type=int, default=None, metavar="K",
                    help="worker threads (default: SIBLINGSHIFT_THREADS or min(8, cpus))")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="siblingshift",
        description=(
            "Rank words by semantic change between two corpora: fit a Gaussian "
            "to each word's contextualised-embedding cloud per corpus and "
            "compare the two distributions."
        ),
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("score", help="score a word list across two archives")
    _add_scoring_flags(sp)
    sp.add_argument("--measure", default=MeasureKind.CHEBYSHEV.token,
                    help="measure token, comma list, or 'all' (default: chebyshev)")
    sp.add_argument("--variant", choices=sorted(_VARIANT_TOKENS), default="full",
                    help="scoring variant (default: full)")
    sp.add_argument("--cloud", choices=list(CLOUD_SOURCES), default=CLOUD_SAMPLED,
                    help="distance clouds: Monte Carlo samples or raw sibling sets")
    sp.add_argument("--ordered", action="store_true",
                    help="fix the pairwise accumulation order (bitwise-stable reruns)")
    sp.add_argument("--allow-full-divergence", action="store_true",
                    help="evaluate divergences on PSD-repaired full covariances")
    sp.add_argument("--out", help="report TSV path (default: stdout)")
    sp.add_argument("--json", dest="json_out", metavar="PATH",
                    help="also write the report as JSON")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("fit", help="fit per-word distributions and save them")
    _add_scoring_flags(sp, with_second_archive=False)
    sp.add_argument("--out", required=True, help="output directory for .dist files")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("eval", help="correlate one or two score reports with a gold ranking")
    sp.add_argument("reports", nargs="+", metavar="REPORT",
                    help="score report TSV (two reports: also run the z comparison)")
    sp.add_argument("--gold", required=True, help="gold TSV: word, graded score[, changed flag]")
    sp.add_argument("--out", help="rank table TSV for the first report")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="compare mean-only / identity-cov / full-pipeline variants")
    _add_scoring_flags(sp)
    sp.add_argument("--gold", required=True, help="gold TSV: word, graded score[, changed flag]")
    sp.add_argument("--measure", default=MeasureKind.CHEBYSHEV.token,
                    help="distance measure for all variants (default: chebyshev)")
    sp.add_argument("--ordered", action="store_true",
                    help="fix the pairwise accumulation order (bitwise-stable reruns)")
    sp.add_argument("--out", help="ablation table TSV path (default: stdout)")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("rank-analysis", help="per-word frequency and covariance rank")
    _add_scoring_flags(sp, with_second_archive=False)
    sp.add_argument("--tol", type=float, default=1e-10,
                    help="relative singular-value cutoff (default: 1e-10)")
    sp.add_argument("--out", help="output TSV path (default: stdout)")
    sp.set_defaults(func=cmd_rank_analysis)

    return parser


def _load_words(path):
    if path is None:
        return None
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if word and not word.startswith("#"):
                words.append(word)
    return words


def _score_config(args, measure: MeasureKind, variant=VARIANT_FULL,
                  cloud=CLOUD_SAMPLED, ordered=False, allow_full=False) -> ScoreConfig:
    return ScoreConfig(
        measure=measure,
        variant=variant,
        cloud_source=cloud,
        cov_mode=args.cov,
        estimator=args.estimator,
        num_samples=args.samples,
        seed=args.seed,
        psd_floor=args.psd_floor,
        ordered=ordered,
        allow_full_divergence=allow_full,
    )


def _log_config(args, config: ScoreConfig | None, extra=None):
    resolved = {"subcommand": args.subcommand}
    for key in ("archive1", "archive2", "words", "gold", "out", "tol"):
        if getattr(args, key, None) is not None:
            resolved[key] = getattr(args, key)
    if config is not None:
        resolved.update(config.to_dict())
    if getattr(args, "threads", None) is not None:
        resolved["threads"] = args.threads
    if extra:
        resolved.update(extra)
    log.info("resolved config: %s", json.dumps(resolved, sort_keys=True))


def _open_out(path):
    if path is None:
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def cmd_score(args) -> int:
    kinds = parse_measures(args.measure)
    config = _score_config(
        args,
        measure=kinds[0],
        variant=_VARIANT_TOKENS[args.variant],
        cloud=args.cloud,
        ordered=args.ordered,
        allow_full=args.allow_full_divergence,
    )
    _log_config(args, config, extra={"measures": [k.token for k in kinds]})
    words = _load_words(args.words)
    report = score_corpus_pair(
        args.archive1, args.archive2, words=words, config=config,
        measures_list=kinds, workers=args.threads,
    )
    for word, message in report.errors:
        log.warning("skipped %r: %s", word, message)
    if not report.rows:
        log.error("no words could be scored")
        return 1
    fh, own = _open_out(args.out)
    try:
        write_report_tsv(report, fh)
    finally:
        if own:
            fh.close()
    if args.json_out:
        write_report_json(report, args.json_out)
    log.info("scored %d words (%d skipped); fingerprint %s",
             len(report.rows), len(report.errors), report.fingerprint)
    return 0


def cmd_fit(args) -> int:
    config = _score_config(args, measure=MeasureKind.CHEBYSHEV)
    _log_config(args, config)
    manifest = read_manifest(args.archive1)
    words = _load_words(args.words)
    if words is None:
        words = manifest.word_list()
    os.makedirs(args.out, exist_ok=True)
    written = 0
    failed = 0
    for word in words:
        try:
            sib = read_sibling_set(manifest, word)
            dist = fit_distribution(sib, mode=args.cov, estimator=args.estimator)
        except DegenerateCountError:
            log.warning("%r has a single occurrence; skipping (no covariance)", word)
            failed += 1
            continue
        except (KeyError, ArchiveError, ValueError) as exc:
            log.warning("skipped %r: %s", word, exc)
            failed += 1
            continue
        name = urllib.parse.quote(word, safe="") + ".dist"
        save_distribution(dist, os.path.join(args.out, name))
        written += 1
    log.info("wrote %d distributions to %s (%d skipped)", written, args.out, failed)
    return 0 if written or not words else 1


def cmd_eval(args) -> int:
    if len(args.reports) > 2:
        log.error("at most two reports can be compared")
        return 1
    gold = load_gold(args.gold)
    results = []
    for path in args.reports:
        report = load_report_tsv(path)
        result = evaluate(report, gold)
        results.append(result)
        print(f"{path}: spearman {result.spearman:.6f} n {result.n}")
        if result.missing:
            log.warning("%s: %d gold words missing from report: %s",
                        path, len(result.missing), " ".join(result.missing))
    _log_config(args, None, extra={"reports": args.reports})
    if len(results) == 2:
        fr = fisher_significance(results[0].spearman, results[1].spearman,
                                 results[0].n, results[1].n)
        verdict = "significant" if fr.significant() else "not significant"
        print(f"fisher z {fr.z:.4f} p {fr.p_value:.4f} -> "
              f"difference {verdict} at alpha 0.05")
    if args.out:
        write_eval_tsv(results[0], args.out)
    return 0


def cmd_ablate(args) -> int:
    kinds = parse_measures(args.measure)
    if len(kinds) != 1 or kinds[0].is_divergence:
        log.error("ablate needs exactly one distance measure, got %r", args.measure)
        return 1
    measure = kinds[0]
    gold = load_gold(args.gold)
    variants = [
        ("mean-only", VARIANT_MEAN_ONLY),
        ("identity-cov", VARIANT_IDENTITY_COV),
        ("full-pipeline", VARIANT_FULL),
    ]
    reports = {}
    config = None
    for label, variant in variants:
        config = _score_config(args, measure=measure, variant=variant, ordered=args.ordered)
        _log_config(args, config, extra={"variant_label": label})
        report = score_corpus_pair(
            args.archive1, args.archive2, words=gold.words(), config=config,
            workers=args.threads,
        )
        for word, message in report.errors:
            log.warning("%s: skipped %r: %s", label, word, message)
        reports[label] = report
    table = build_ablation_table(gold, reports)
    fh, own = _open_out(args.out)
    try:
        write_ablation_tsv(table, fh)
    finally:
        if own:
            fh.close()
    for label in table.labels:
        log.info("%s: spearman %.6f over %d words", label, table.spearman[label], table.n)
    return 0


def cmd_rank_analysis(args) -> int:
    config = _score_config(args, measure=MeasureKind.CHEBYSHEV)
    _log_config(args, config, extra={"tol": args.tol})
    manifest = read_manifest(args.archive1)
    words = _load_words(args.words)
    if words is None:
        words = manifest.word_list()
    fh, own = _open_out(args.out)
    try:
        fh.write("word\tfrequency\tcov_rank\n")
        for word in words:
            try:
                sib = read_sibling_set(manifest, word)
            except (KeyError, ArchiveError) as exc:
                log.warning("skipped %r: %s", word, exc)
                continue
            try:
                dist = fit_distribution(sib, mode=args.cov, estimator=args.estimator)
                rank = covariance_rank(dist, tol=args.tol)
            except DegenerateCountError:
                log.warning("%r has a single occurrence; rank reported as 0", word)
                rank = 0
            fh.write(f"{word}\t{sib.count}\t{rank}\n")
    finally:
        if own:
            fh.close()
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ArchiveError, ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
