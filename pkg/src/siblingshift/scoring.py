"""Change scoring for word pairs across two corpora.

A word's score is either a closed-form divergence between the two fitted
Gaussians, or the average pairwise distance between two clouds (Monte Carlo
draws from the fitted Gaussians, or the raw sibling sets themselves). Scores
for a word list are assembled into a report, ranked most-changed first.

Reports carry a fingerprint over every result-relevant knob plus the archive
checksums, so identical configurations can be recognized across runs.
Per-word RNG streams are derived from (seed, word, corpus), which makes the
report independent of worker count and scheduling order.
"""

import concurrent.futures
import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import archive, kernels, measures
from .archive import ArchiveManifest, SiblingSet, read_manifest, read_sibling_set
from .distribution import (
    DEFAULT_NUM_SAMPLES,
    DEFAULT_PSD_FLOOR,
    ESTIMATOR_CENTERED,
    ESTIMATORS,
    MODE_DIAG,
    MODE_FULL,
    MODES,
    CovarianceRep,
    DegenerateCountError,
    SampleConfig,
    SiblingDistribution,
    fit_distribution,
    floored_identity,
    sample_siblings,
)
from .measures import MeasureKind

VARIANT_FULL = "full-pipeline"
VARIANT_MEAN_ONLY = "mean-only"
VARIANT_IDENTITY_COV = "identity-cov"
VARIANTS = (VARIANT_FULL, VARIANT_MEAN_ONLY, VARIANT_IDENTITY_COV)

CLOUD_SAMPLED = "sampled"
CLOUD_RAW = "raw-apd"
CLOUD_SOURCES = (CLOUD_SAMPLED, CLOUD_RAW)

_FLOAT_FMT = ".17g"


@dataclass(frozen=True)
class ScoreConfig:
    """Result-relevant knobs for scoring a corpus pair."""

    measure: MeasureKind = MeasureKind.CHEBYSHEV
    variant: str = VARIANT_FULL
    cloud_source: str = CLOUD_SAMPLED
    cov_mode: str = MODE_FULL
    estimator: str = ESTIMATOR_CENTERED
    num_samples: int = DEFAULT_NUM_SAMPLES
    seed: int = 0
    psd_floor: float = DEFAULT_PSD_FLOOR
    ordered: bool = False
    allow_full_divergence: bool = False

    def __post_init__(self):
        if not isinstance(self.measure, MeasureKind):
            object.__setattr__(self, "measure", MeasureKind.from_token(self.measure))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.cloud_source not in CLOUD_SOURCES:
            raise ValueError(
                f"unknown cloud source {self.cloud_source!r}; expected one of {CLOUD_SOURCES}"
            )
        if self.cov_mode not in MODES:
            raise ValueError(f"unknown covariance mode {self.cov_mode!r}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.psd_floor <= 0:
            raise ValueError("psd_floor must be positive")

    @property
    def sample_config(self) -> SampleConfig:
        return SampleConfig(
            num_samples=self.num_samples, seed=self.seed, psd_floor=self.psd_floor
        )

    def to_dict(self) -> dict:
        return {
            "measure": self.measure.token,
            "variant": self.variant,
            "cloud_source": self.cloud_source,
            "cov_mode": self.cov_mode,
            "estimator": self.estimator,
            "num_samples": self.num_samples,
            "seed": self.seed,
            "psd_floor": self.psd_floor,
            "ordered": self.ordered,
            "allow_full_divergence": self.allow_full_divergence,
        }


def validate_measures(config: ScoreConfig, kinds) -> None:
    """Reject measure/variant/cloud combinations that have no meaning."""
    div = [k for k in kinds if k.is_divergence]
    if div and config.variant != VARIANT_FULL:
        raise ValueError(
            f"variant {config.variant!r} applies to distance measures only; "
            f"got divergence {div[0].token!r}"
        )
    if config.variant == VARIANT_IDENTITY_COV and config.cloud_source == CLOUD_RAW:
        raise ValueError(
            "identity-cov scores sampled clouds; it cannot be combined with raw-apd"
        )


@dataclass
class ScoreRow:
    word: str
    scores: dict
    n1: int
    n2: int
    warnings: list = field(default_factory=list)

    @property
    def primary(self) -> float:
        return next(iter(self.scores.values()))


@dataclass
class ScoreReport:
    measures: list
    config: dict
    fingerprint: str
    archives: dict
    rows: list
    errors: list = field(default_factory=list)

    def score_map(self, token=None) -> dict:
        token = token or self.measures[0].token
        return {row.word: row.scores[token] for row in self.rows}

    def ranked_words(self) -> list:
        return [row.word for row in self.rows]

    def row(self, word: str) -> ScoreRow:
        for r in self.rows:
            if r.word == word:
                return r
        raise KeyError(word)


class _WordSide:
    """One corpus' view of a word: a raw sibling set or a fitted distribution."""

    def __init__(self, obj, config: ScoreConfig, label: str):
        if isinstance(obj, SiblingSet):
            self.sib, self.dist = obj, None
        elif isinstance(obj, SiblingDistribution):
            self.sib, self.dist = None, obj
        else:
            raise TypeError(f"expected SiblingSet or SiblingDistribution, got {type(obj)!r}")
        self.config = config
        self.label = label

    @property
    def count(self) -> int:
        return self.sib.count if self.sib is not None else self.dist.count

    @property
    def word(self) -> str:
        return (self.sib or self.dist).word

    @property
    def corpus_id(self) -> str:
        return (self.sib or self.dist).corpus_id

    def mean(self) -> np.ndarray:
        if self.dist is not None:
            return self.dist.mean
        return np.asarray(self.sib.embeddings, dtype=np.float64).mean(axis=0)

    def rows(self) -> np.ndarray:
        if self.sib is None:
            raise ValueError(
                f"{self.label}: raw-apd needs the sibling set for {self.word!r}, "
                "not a fitted distribution"
            )
        return np.asarray(self.sib.embeddings, dtype=np.float64)

    def distribution(self, mode: str, warnings: list) -> SiblingDistribution:
        if self.dist is not None:
            have = self.dist.covariance.mode
            if have == mode:
                return self.dist
            if have == MODE_FULL and mode == MODE_DIAG:
                cov = CovarianceRep(
                    mode=MODE_DIAG,
                    data=self.dist.covariance.diagonal(),
                    estimator=self.dist.covariance.estimator,
                )
                return replace(self.dist, covariance=cov)
            raise ValueError(
                f"{self.label}: have diag covariance for {self.word!r} but full is required"
            )
        try:
            return fit_distribution(self.sib, mode=mode, estimator=self.config.estimator)
        except DegenerateCountError:
            warnings.append(
                f"{self.label}: single occurrence of {self.word!r}; "
                "using floored identity covariance"
            )
            cov = floored_identity(
                self.sib.dim, mode, self.config.psd_floor, self.config.estimator
            )
            return SiblingDistribution(
                word=self.sib.word,
                corpus_id=self.sib.corpus_id,
                mean=self.mean(),
                covariance=cov,
                count=self.sib.count,
            )

    def identity_distribution(self) -> SiblingDistribution:
        # V = I expressed in diag form: the sampling transform is exactly
        # mean + z, with no matrix factorization in the way.
        cov = CovarianceRep(
            mode=MODE_DIAG,
            data=np.ones(self.dim()),
            estimator=self.config.estimator,
        )
        return SiblingDistribution(
            word=self.word,
            corpus_id=self.corpus_id,
            mean=self.mean(),
            covariance=cov,
            count=self.count,
        )

    def dim(self) -> int:
        return self.sib.dim if self.sib is not None else self.dist.dim


def _compute_scores(side1: _WordSide, side2: _WordSide, config: ScoreConfig,
                    kinds, warnings: list) -> dict:
    values = {}
    div_kinds = [k for k in kinds if k.is_divergence]
    dist_kinds = [k for k in kinds if not k.is_divergence]

    if div_kinds:
        # Closed form on the fitted Gaussians. Diagonal covariances unless the
        # full form was explicitly requested, in which case the matrices get a
        # PSD repair inside the divergence.
        allow_full = config.allow_full_divergence and config.cov_mode == MODE_FULL
        mode = MODE_FULL if allow_full else MODE_DIAG
        p1 = side1.distribution(mode, warnings)
        p2 = side2.distribution(mode, warnings)
        for kind in div_kinds:
            if kind is MeasureKind.KL_1_2:
                val = measures.kl_divergence(p1, p2, config.psd_floor, allow_full)
            elif kind is MeasureKind.KL_2_1:
                val = measures.kl_divergence(p2, p1, config.psd_floor, allow_full)
            else:
                val = measures.jeffreys_divergence(p1, p2, config.psd_floor, allow_full)
            values[kind.token] = val

    if dist_kinds:
        if config.variant == VARIANT_MEAN_ONLY:
            mu1, mu2 = side1.mean(), side2.mean()
            for kind in dist_kinds:
                values[kind.token] = measures.distance(kind, mu1, mu2)
        elif config.cloud_source == CLOUD_RAW:
            a, b = side1.rows(), side2.rows()
            for kind in dist_kinds:
                values[kind.token] = kernels.mean_pairwise(kind, a, b, ordered=config.ordered)
        else:
            if config.variant == VARIANT_IDENTITY_COV:
                d1 = side1.identity_distribution()
                d2 = side2.identity_distribution()
            else:
                d1 = side1.distribution(config.cov_mode, warnings)
                d2 = side2.distribution(config.cov_mode, warnings)
            cloud1 = sample_siblings(d1, config.sample_config)
            cloud2 = sample_siblings(d2, config.sample_config)
            for kind in dist_kinds:
                values[kind.token] = kernels.mean_pairwise(
                    kind, cloud1, cloud2, ordered=config.ordered
                )

    out = {k.token: values[k.token] for k in kinds}
    for token, val in out.items():
        if not np.isfinite(val):
            raise ValueError(f"non-finite {token} score for {side1.word!r}")
    return out


def score_word(obj1, obj2, config: ScoreConfig = ScoreConfig(), measures_list=None):
    """Score one word from its two per-corpus sibling sets or distributions.

    Returns a float for a single measure, or a token-keyed dict when a list
    of measures is given.
    """
    kinds = _resolve_kinds(config, measures_list)
    validate_measures(config, kinds)
    side1 = _WordSide(obj1, config, "corpus1")
    side2 = _WordSide(obj2, config, "corpus2")
    if side1.dim() != side2.dim():
        raise ValueError(f"dimension mismatch: {side1.dim()} vs {side2.dim()}")
    warnings: list = []
    scores = _compute_scores(side1, side2, config, kinds, warnings)
    if measures_list is None:
        return scores[config.measure.token]
    return scores


def _resolve_kinds(config: ScoreConfig, measures_list):
    if measures_list is None:
        return [config.measure]
    kinds = []
    for m in measures_list:
        kind = m if isinstance(m, MeasureKind) else MeasureKind.from_token(m)
        if kind not in kinds:
            kinds.append(kind)
    if not kinds:
        raise ValueError("empty measure list")
    return kinds


def _as_manifest(obj) -> ArchiveManifest:
    if isinstance(obj, ArchiveManifest):
        return obj
    return read_manifest(obj)


def default_workers() -> int:
    env = os.environ.get("SIBLINGSHIFT_THREADS", "")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ValueError(f"SIBLINGSHIFT_THREADS must be an integer, got {env!r}") from None
        if cap < 1:
            raise ValueError("SIBLINGSHIFT_THREADS must be >= 1")
        return cap
    return min(8, os.cpu_count() or 1)


def config_fingerprint(config: ScoreConfig, kinds, manifest1, manifest2) -> str:
    payload = {
        "config": config.to_dict(),
        "measures": [k.token for k in kinds],
        "archive1": archive.archive_checksum(manifest1),
        "archive2": archive.archive_checksum(manifest2),
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.blake2b(blob, digest_size=16).hexdigest()


def score_corpus_pair(archive1, archive2, words=None, config: ScoreConfig = ScoreConfig(),
                      measures_list=None, workers=None) -> ScoreReport:
    """Score a word list across two archives and rank by descending change.

    Per-word failures (missing word, corrupt payload) become report errors
    instead of aborting the run. Configuration-level problems (dimension
    mismatch, meaningless measure/variant combinations) raise immediately.
    """
    m1 = _as_manifest(archive1)
    m2 = _as_manifest(archive2)
    if m1.dim != m2.dim:
        raise ValueError(f"archive dimension mismatch: {m1.dim} vs {m2.dim}")
    kinds = _resolve_kinds(config, measures_list)
    validate_measures(config, kinds)

    if words is None:
        words = [w for w in m1.word_list() if w in m2]
    else:
        seen = set()
        words = [w for w in words if not (w in seen or seen.add(w))]

    def _one(word: str):
        sib1 = read_sibling_set(m1, word)
        sib2 = read_sibling_set(m2, word)
        side1 = _WordSide(sib1, config, f"corpus1 ({m1.corpus_id})")
        side2 = _WordSide(sib2, config, f"corpus2 ({m2.corpus_id})")
        warnings: list = []
        scores = _compute_scores(side1, side2, config, kinds, warnings)
        return ScoreRow(
            word=word, scores=scores, n1=sib1.count, n2=sib2.count, warnings=warnings
        )

    rows = []
    errors = []
    max_workers = workers if workers is not None else default_workers()
    if max_workers <= 1 or len(words) <= 1:
        results = ((w, _run_safely(_one, w)) for w in words)
    else:
        pool = concurrent.futures.ThreadPoolExecutor(max_workers=max_workers)
        with pool:
            futures = [(w, pool.submit(_run_safely, _one, w)) for w in words]
            results = ((w, f.result()) for w, f in futures)
    for word, (row, err) in results:
        if err is not None:
            errors.append((word, err))
        else:
            rows.append(row)

    rows.sort(key=lambda r: (-r.primary, r.word))
    fingerprint = config_fingerprint(config, kinds, m1, m2)
    return ScoreReport(
        measures=kinds,
        config=config.to_dict(),
        fingerprint=fingerprint,
        archives={
            "archive1": archive.archive_checksum(m1),
            "archive2": archive.archive_checksum(m2),
        },
        rows=rows,
        errors=errors,
    )


def _run_safely(func, word):
    try:
        return func(word), None
    except KeyError:
        return None, f"word {word!r} missing from archive"
    except (archive.ArchiveError, ValueError, OSError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def write_report_tsv(report: ScoreReport, dest) -> None:
    """Write a report as TSV with config header comments; deterministic bytes."""
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", encoding="utf-8") if own else dest
    try:
        fh.write(f"# fingerprint: {report.fingerprint}\n")
        fh.write(f"# archive1: {report.archives.get('archive1', '')}\n")
        fh.write(f"# archive2: {report.archives.get('archive2', '')}\n")
        fh.write(f"# config: {json.dumps(report.config, sort_keys=True)}\n")
        tokens = [k.token for k in report.measures]
        fh.write("\t".join(["word", *tokens, "n1", "n2", "warnings"]) + "\n")
        for row in report.rows:
            cells = [row.word]
            cells.extend(format(row.scores[t], _FLOAT_FMT) for t in tokens)
            cells.extend([str(row.n1), str(row.n2), ";".join(row.warnings)])
            fh.write("\t".join(cells) + "\n")
        for word, message in report.errors:
            fh.write(f"# error: {word}\t{message}\n")
    finally:
        if own:
            fh.close()


def write_report_json(report: ScoreReport, dest) -> None:
    payload = {
        "fingerprint": report.fingerprint,
        "config": report.config,
        "measures": [k.token for k in report.measures],
        "archives": report.archives,
        "rows": [
            {
                "word": row.word,
                "scores": row.scores,
                "n1": row.n1,
                "n2": row.n2,
                "warnings": row.warnings,
            }
            for row in report.rows
        ],
        "errors": [{"word": w, "message": m} for w, m in report.errors],
    }
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", encoding="utf-8") if own else dest
    try:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    finally:
        if own:
            fh.close()


def load_report_tsv(path) -> ScoreReport:
    """Parse a TSV report back into a ScoreReport (inverse of write_report_tsv)."""
    fingerprint = ""
    archives = {}
    config: dict = {}
    rows = []
    errors = []
    header = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("fingerprint:"):
                    fingerprint = body.split(":", 1)[1].strip()
                elif body.startswith("archive1:"):
                    archives["archive1"] = body.split(":", 1)[1].strip()
                elif body.startswith("archive2:"):
                    archives["archive2"] = body.split(":", 1)[1].strip()
                elif body.startswith("config:"):
                    config = json.loads(body.split(":", 1)[1].strip())
                elif body.startswith("error:"):
                    payload = body.split(":", 1)[1].strip()
                    word, _, message = payload.partition("\t")
                    errors.append((word, message))
                continue
            cells = line.split("\t")
            if header is None:
                header = cells
                if header[0] != "word" or header[-3:] != ["n1", "n2", "warnings"]:
                    raise ValueError(f"unrecognized report header: {header!r}")
                continue
            if len(cells) != len(header):
                raise ValueError(f"malformed report row: {line!r}")
            tokens = header[1:-3]
            scores = {t: float(v) for t, v in zip(tokens, cells[1:-3])}
            warnings = cells[-1].split(";") if cells[-1] else []
            rows.append(
                ScoreRow(
                    word=cells[0],
                    scores=scores,
                    n1=int(cells[-3]),
                    n2=int(cells[-2]),
                    warnings=warnings,
                )
            )
    if header is None:
        raise ValueError(f"no header row found in report {path!r}")
    if not fingerprint or not config or set(archives) != {"archive1", "archive2"}:
        raise ValueError(
            f"report {path!r} is missing its fingerprint/config/archive headers"
        )
    kinds = [MeasureKind.from_token(t) for t in header[1:-3]]
    return ScoreReport(
        measures=kinds,
        config=config,
        fingerprint=fingerprint,
        archives=archives,
        rows=rows,
        errors=errors,
    )
