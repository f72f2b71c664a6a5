"""Divergence and distance measures for comparing sibling distributions.

Two families:

* divergences between Gaussian pairs, computed in closed form:
  KL(N1 || N2) = 1/2 (tr(V2^-1 V1) - d - log det(V1)/det(V2)
                      + (mu2 - mu1)^T V2^-1 (mu2 - mu1))
  and Jeffrey's divergence, the symmetrized average of the two KL
  directions. By default divergences accept diagonal covariances only:
  an N x d cloud with N < d yields a singular full covariance whose
  inverse does not exist, so the full-matrix route is opt-in and runs on
  the PSD-repaired matrix.

* distances between two d-vectors: Bray-Curtis, Canberra, Chebyshev,
  City Block, Correlation, Cosine, Euclidean. Correlation first subtracts
  each vector's own mean over dimensions, then applies the cosine form.

Determinants are handled in log space and inverses are applied through
triangular solves; a 768-dimensional covariance is never inverted
explicitly. Degenerate denominators are totalized (see the individual
functions) so no input produces a non-finite result.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .distribution import MODE_DIAG, MODE_FULL, DEFAULT_PSD_FLOOR, _repair_full


class MeasureKind(enum.Enum):
    """The two divergences and seven distances, keyed by CLI token."""

    KL_1_2 = "kl12"
    KL_2_1 = "kl21"
    JEFFREYS = "jeffreys"
    BRAY_CURTIS = "braycurtis"
    CANBERRA = "canberra"
    CHEBYSHEV = "chebyshev"
    CITY_BLOCK = "cityblock"
    CORRELATION = "correlation"
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"

    @property
    def token(self) -> str:
        return self.value

    @property
    def is_divergence(self) -> bool:
        return self in (MeasureKind.KL_1_2, MeasureKind.KL_2_1, MeasureKind.JEFFREYS)

    @classmethod
    def from_token(cls, token: str) -> "MeasureKind":
        try:
            return cls(token.lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown measure {token!r}; expected one of: {valid}") from None


DIVERGENCES = tuple(m for m in MeasureKind if m.is_divergence)
DISTANCES = tuple(m for m in MeasureKind if not m.is_divergence)


def _check_pair(p, q):
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    if p.covariance.mode != q.covariance.mode:
        raise ValueError(
            f"covariance mode mismatch: {p.covariance.mode!r} vs {q.covariance.mode!r}"
        )


def _kl_diag(mu1, v1, mu2, v2, psd_floor):
    v1 = np.maximum(v1, psd_floor)
    v2 = np.maximum(v2, psd_floor)
    d = mu1.shape[0]
    trace = float(np.sum(v1 / v2))
    logdet = float(np.sum(np.log(v1)) - np.sum(np.log(v2)))
    diff = mu2 - mu1
    maha = float(np.sum(diff * diff / v2))
    return 0.5 * (trace - d - logdet + maha)


def _kl_full(mu1, c1, mu2, c2, psd_floor):
    c1, _ = _repair_full(c1, psd_floor)
    c2, _ = _repair_full(c2, psd_floor)
    d = mu1.shape[0]
    try:
        factor2 = cho_factor(c2, lower=True)
        chol1 = np.linalg.cholesky(c1)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"covariance not invertible after PSD repair: {exc}") from exc
    trace = float(np.trace(cho_solve(factor2, c1)))
    logdet1 = 2.0 * float(np.sum(np.log(np.diag(chol1))))
    logdet2 = 2.0 * float(np.sum(np.log(np.diag(factor2[0]))))
    diff = mu2 - mu1
    maha = float(diff @ cho_solve(factor2, diff))
    return 0.5 * (trace - d - (logdet1 - logdet2) + maha)


def kl_divergence(p, q, psd_floor=DEFAULT_PSD_FLOOR, allow_full=False) -> float:
    """KL(p || q) between two Gaussian sibling distributions.

    Diagonal covariances by default; pass allow_full=True to evaluate on
    PSD-repaired full matrices. Tiny negative results from rounding are
    clamped to zero.
    """
    _check_pair(p, q)
    if p.covariance.mode == MODE_FULL and not allow_full:
        raise ValueError(
            "divergences default to diag covariances; pass allow_full=True to "
            "use the PSD-repaired full matrix"
        )
    if p.covariance.mode == MODE_DIAG:
        kl = _kl_diag(p.mean, p.covariance.data, q.mean, q.covariance.data, psd_floor)
    else:
        kl = _kl_full(p.mean, p.covariance.data, q.mean, q.covariance.data, psd_floor)
    return max(0.0, kl)


def jeffreys_divergence(p, q, psd_floor=DEFAULT_PSD_FLOOR, allow_full=False) -> float:
    """Jeffrey's divergence: the mean of KL(p || q) and KL(q || p). Symmetric."""
    return 0.5 * kl_divergence(p, q, psd_floor, allow_full) + 0.5 * kl_divergence(
        q, p, psd_floor, allow_full
    )


def _cosine_form(a, b):
    # Shared by cosine and correlation. Degenerate norms: one zero vector is
    # maximally dissimilar (1), two zero vectors are identical (0).
    na2 = float(a @ a)
    nb2 = float(b @ b)
    if na2 == 0.0 and nb2 == 0.0:
        return 0.0
    if na2 == 0.0 or nb2 == 0.0:
        return 1.0
    val = 1.0 - float(a @ b) / (math.sqrt(na2) * math.sqrt(nb2))
    return min(2.0, max(0.0, val))


def _braycurtis(a, b):
    num = float(np.sum(np.abs(a - b)))
    den = float(np.sum(np.abs(a + b)))
    if den == 0.0:
        return 0.0 if num == 0.0 else 1.0
    return num / den


def _canberra(a, b):
    num = np.abs(a - b)
    den = np.abs(a) + np.abs(b)
    mask = den > 0
    return float(np.sum(num[mask] / den[mask]))


def _correlation(a, b):
    return _cosine_form(a - a.mean(), b - b.mean())


_DISTANCE_FUNCS = {
    MeasureKind.BRAY_CURTIS: _braycurtis,
    MeasureKind.CANBERRA: _canberra,
    MeasureKind.CHEBYSHEV: lambda a, b: float(np.max(np.abs(a - b))),
    MeasureKind.CITY_BLOCK: lambda a, b: float(np.sum(np.abs(a - b))),
    MeasureKind.CORRELATION: _correlation,
    MeasureKind.COSINE: _cosine_form,
    MeasureKind.EUCLIDEAN: lambda a, b: float(np.linalg.norm(a - b)),
}


def distance(kind: MeasureKind, w1, w2) -> float:
    """Distance between two equal-length vectors under the given measure.

    Equal inputs return exactly 0.0 for every measure. Output is always
    finite and nonnegative.
    """
    if kind.is_divergence:
        raise ValueError(f"{kind.token} is a divergence, not a vector distance")
    a = np.asarray(w1, dtype=np.float64).ravel()
    b = np.asarray(w2, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite input vector")
    if np.array_equal(a, b):
        return 0.0
    return _DISTANCE_FUNCS[kind](a, b)
