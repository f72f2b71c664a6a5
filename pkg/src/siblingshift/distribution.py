"""Gaussian summaries of sibling-embedding clouds.

A word's cloud in one corpus is summarised as N(mean, covariance). Two
covariance estimators are provided: ``centered`` is the standard sample
covariance (divisor N - 1) of mean-centered rows, and ``literal`` scales
the uncentered second-moment sum by 1 / (N (N - 1)) instead. Centered is
the default: a Gaussian's covariance is a central second moment, and only
the centered estimator makes the fitted density track the cloud's spread
around its own mean. The literal variant is kept behind a flag for
fidelity experiments.

Sampling reproducibility is seed-level: one base seed plus the word and
corpus identity determine the draw bitwise, independent of scheduling.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_PSD_FLOOR = 1e-8
DEFAULT_NUM_SAMPLES = 1000

MODE_DIAG = "diag"
MODE_FULL = "full"
MODES = (MODE_DIAG, MODE_FULL)

ESTIMATOR_CENTERED = "centered"
ESTIMATOR_LITERAL = "literal"
ESTIMATORS = (ESTIMATOR_CENTERED, ESTIMATOR_LITERAL)


class DegenerateCountError(ValueError):
    """Covariance estimation requested for a single-occurrence cloud."""


@dataclass
class CovarianceRep:
    """Covariance in ``diag`` (d-vector) or ``full`` (d x d matrix) form."""

    mode: str
    data: np.ndarray
    estimator: str = ESTIMATOR_CENTERED

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown covariance mode {self.mode!r}")
        data = np.asarray(self.data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise ValueError("covariance has non-finite entries")
        if self.mode == MODE_DIAG:
            if data.ndim != 1:
                raise ValueError(f"diag covariance must be 1-D, got shape {data.shape}")
            if np.any(data < 0):
                raise ValueError("diag covariance has negative entries")
        else:
            if data.ndim != 2 or data.shape[0] != data.shape[1]:
                raise ValueError(f"full covariance must be square, got shape {data.shape}")
            scale = np.max(np.abs(data))
            if scale > 0 and np.max(np.abs(data - data.T)) > 1e-12 * scale:
                raise ValueError("full covariance is not symmetric")
        self.data = data

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def diagonal(self) -> np.ndarray:
        return self.data if self.mode == MODE_DIAG else np.diag(self.data).copy()


@dataclass
class SiblingDistribution:
    word: str
    corpus_id: str
    mean: np.ndarray
    covariance: CovarianceRep
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        if not np.all(np.isfinite(mean)):
            raise ValueError(f"non-finite mean for word {self.word!r}")
        if mean.shape[0] != self.covariance.dim:
            raise ValueError(
                f"mean dim {mean.shape[0]} does not match covariance dim {self.covariance.dim}"
            )
        self.mean = mean

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass
class SampleConfig:
    num_samples: int = DEFAULT_NUM_SAMPLES
    seed: int = 0
    psd_floor: float = DEFAULT_PSD_FLOOR

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.psd_floor <= 0:
            raise ValueError("psd_floor must be positive")


def derive_seed(seed, word, corpus_id) -> int:
    """Per-word RNG seed: base seed XORed with a stable hash of (word, corpus)."""
    digest = hashlib.blake2b(f"{word}\x1f{corpus_id}".encode(), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) & 0xFFFFFFFFFFFFFFFF


def fit_distribution(sib, mode=MODE_FULL, estimator=ESTIMATOR_CENTERED) -> SiblingDistribution:
    """Fit N(mean, covariance) to a sibling set.

    Mean is the arithmetic mean of the rows. The centered estimator divides
    the centered cross-product sum by N - 1; the literal estimator divides
    the raw cross-product sum by N (N - 1). Diag mode keeps only the
    per-coordinate variances. N = 1 cannot support either estimator and
    raises DegenerateCountError; the scoring layer substitutes a floored
    identity covariance instead of dropping the word.
    """
    if mode not in MODES:
        raise ValueError(f"unknown covariance mode {mode!r}")
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    x = np.asarray(sib.embeddings, dtype=np.float64)
    n, d = x.shape
    mean = x.mean(axis=0)
    if n < 2:
        raise DegenerateCountError(
            f"word {sib.word!r} has a single sibling; covariance is undefined"
        )
    if estimator == ESTIMATOR_CENTERED:
        rows = x - mean
        denom = n - 1
    else:
        rows = x
        denom = n * (n - 1)
    if mode == MODE_DIAG:
        data = np.einsum("ij,ij->j", rows, rows) / denom
        data[data < 0] = 0.0
    else:
        data = rows.T @ rows / denom
        data = (data + data.T) / 2.0
    cov = CovarianceRep(mode=mode, data=data, estimator=estimator)
    return SiblingDistribution(
        word=sib.word, corpus_id=sib.corpus_id, mean=mean, covariance=cov, count=n
    )


def floored_identity(dim, mode, psd_floor=DEFAULT_PSD_FLOOR, estimator=ESTIMATOR_CENTERED):
    """psd_floor * I, the substitute covariance for single-occurrence words."""
    if mode == MODE_DIAG:
        data = np.full(dim, psd_floor)
    else:
        data = np.eye(dim) * psd_floor
    return CovarianceRep(mode=mode, data=data, estimator=estimator)


def _repair_full(data, psd_floor):
    # Symmetrize, then raise eigenvalues below the floor; returns the repaired
    # matrix together with a factor A such that A @ A.T reproduces it. A matrix
    # whose spectrum already clears the floor is passed through (symmetrized
    # only), not round-tripped through the eigenbasis.
    sym = (data + data.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] >= psd_floor:
        return sym, eigvecs * np.sqrt(eigvals)
    clipped = np.maximum(eigvals, psd_floor)
    factor = eigvecs * np.sqrt(clipped)
    repaired = (eigvecs * clipped) @ eigvecs.T
    repaired = (repaired + repaired.T) / 2.0
    return repaired, factor


def repair_covariance(cov: CovarianceRep, psd_floor=DEFAULT_PSD_FLOOR) -> CovarianceRep:
    """PSD repair: symmetrize and floor the spectrum (or the diagonal) at psd_floor.

    Idempotent up to floating-point reconstruction error, and leaves a matrix
    whose smallest eigenvalue already exceeds the floor unchanged apart from
    symmetrization.
    """
    if cov.mode == MODE_DIAG:
        return CovarianceRep(
            mode=MODE_DIAG, data=np.maximum(cov.data, psd_floor), estimator=cov.estimator
        )
    repaired, _ = _repair_full(cov.data, psd_floor)
    return CovarianceRep(mode=MODE_FULL, data=repaired, estimator=cov.estimator)


def sample_siblings(dist: SiblingDistribution, cfg: SampleConfig) -> np.ndarray:
    """Draw cfg.num_samples rows from N(mean, repaired covariance).

    Standard-normal draws are pushed through an affine transform built from a
    PSD factor of the repaired covariance. The RNG stream is derived from
    (cfg.seed, word, corpus_id), so a fixed config reproduces the matrix
    bitwise regardless of scheduling order.
    """
    rng = np.random.default_rng(derive_seed(cfg.seed, dist.word, dist.corpus_id))
    z = rng.standard_normal((cfg.num_samples, dist.dim))
    cov = dist.covariance
    if cov.mode == MODE_DIAG:
        out = dist.mean + z * np.sqrt(np.maximum(cov.data, cfg.psd_floor))
    else:
        _, factor = _repair_full(cov.data, cfg.psd_floor)
        out = dist.mean + z @ factor.T
    if not np.all(np.isfinite(out)):
        raise ValueError(f"non-finite samples for word {dist.word!r}")
    return out


def matrix_rank(matrix, tol=1e-10) -> int:
    """Numerical rank: singular values above tol times the largest one."""
    s = np.linalg.svd(np.asarray(matrix, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def covariance_rank(dist: SiblingDistribution, tol=1e-10) -> int:
    """Numerical rank of the covariance; diag mode counts entries above tolerance."""
    cov = dist.covariance
    if cov.mode == MODE_DIAG:
        top = float(np.max(cov.data)) if cov.data.size else 0.0
        if top <= 0:
            return 0
        return int(np.sum(cov.data > tol * top))
    return matrix_rank(cov.data, tol=tol)


def save_distribution(dist: SiblingDistribution, path) -> None:
    """Persist a distribution: one JSON header line + float32 mean and covariance."""
    header = {
        "format": "sibling-distribution",
        "schema_version": 1,
        "word": dist.word,
        "corpus_id": dist.corpus_id,
        "dim": dist.dim,
        "count": dist.count,
        "mode": dist.covariance.mode,
        "estimator": dist.covariance.estimator,
    }
    payload = (
        np.ascontiguousarray(dist.mean, dtype="<f4").tobytes()
        + np.ascontiguousarray(dist.covariance.data, dtype="<f4").tobytes()
    )
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(payload)


def load_distribution(path) -> SiblingDistribution:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode())
    if header.get("format") != "sibling-distribution":
        raise ValueError(f"not a distribution cache file: {path}")
    d = int(header["dim"])
    body = raw[nl + 1 :]
    expected = 4 * d + (4 * d if header["mode"] == MODE_DIAG else 4 * d * d)
    if len(body) != expected:
        raise ValueError(
            f"distribution cache {path} has {len(body)} payload bytes, expected {expected}"
        )
    mean = np.frombuffer(body[: 4 * d], dtype="<f4").astype(np.float64)
    cov_bytes = body[4 * d :]
    if header["mode"] == MODE_DIAG:
        data = np.frombuffer(cov_bytes[: 4 * d], dtype="<f4").astype(np.float64)
    else:
        data = np.frombuffer(cov_bytes[: 4 * d * d], dtype="<f4").astype(np.float64)
        data = data.reshape(d, d)
        data = (data + data.T) / 2.0
    cov = CovarianceRep(mode=header["mode"], data=data, estimator=header["estimator"])
    return SiblingDistribution(
        word=header["word"],
        corpus_id=header["corpus_id"],
        mean=mean,
        covariance=cov,
        count=int(header["count"]),
    )
