"""Semantic-change ranking from per-corpus Gaussian word distributions.

Each word's contextualised embeddings in one corpus form a sibling set; a
multivariate Gaussian fitted to that set is the word's sibling distribution.
Comparing a word's two distributions — by closed-form divergence or by the
average pairwise distance between clouds drawn from them — yields a change
score, and scores over a word list yield a ranking that can be evaluated
against gold judgements.
"""

from .archive import (
    ArchiveError,
    ArchiveManifest,
    ChecksumMismatch,
    SiblingSet,
    read_manifest,
    read_sibling_set,
    write_archive,
)
from .distribution import (
    CovarianceRep,
    DegenerateCountError,
    SampleConfig,
    SiblingDistribution,
    covariance_rank,
    fit_distribution,
    matrix_rank,
    repair_covariance,
    sample_siblings,
)
from .evaluation import (
    EvalResult,
    GoldRanking,
    evaluate,
    fisher_significance,
    load_gold,
    spearman,
)
from .kernels import HAVE_EXT, mean_pairwise
from .measures import (
    DISTANCES,
    DIVERGENCES,
    MeasureKind,
    distance,
    jeffreys_divergence,
    kl_divergence,
)
from .scoring import (
    ScoreConfig,
    ScoreReport,
    ScoreRow,
    load_report_tsv,
    score_corpus_pair,
    score_word,
    write_report_json,
    write_report_tsv,
)

__version__ = "0.1.0"

__all__ = [
    "ArchiveError",
    "ArchiveManifest",
    "ChecksumMismatch",
    "CovarianceRep",
    "DISTANCES",
    "DIVERGENCES",
    "DegenerateCountError",
    "EvalResult",
    "GoldRanking",
    "HAVE_EXT",
    "MeasureKind",
    "SampleConfig",
    "ScoreConfig",
    "ScoreReport",
    "ScoreRow",
    "SiblingDistribution",
    "SiblingSet",
    "covariance_rank",
    "distance",
    "evaluate",
    "fisher_significance",
    "fit_distribution",
    "jeffreys_divergence",
    "kl_divergence",
    "load_gold",
    "load_report_tsv",
    "matrix_rank",
    "mean_pairwise",
    "read_manifest",
    "read_sibling_set",
    "repair_covariance",
    "sample_siblings",
    "score_corpus_pair",
    "score_word",
    "spearman",
    "write_archive",
    "write_report_json",
    "write_report_tsv",
    "__version__",
]
