"""Kernel selection for the average-pairwise-distance hot loop.

The compiled extension is preferred when it imported cleanly; otherwise a
vectorized numpy fallback handles the common case. `ordered=True` requests
the accumulation-order-fixed path (naive double loop, one scalar
accumulator), whose result is bitwise reproducible; the compiled kernels
already accumulate in that order, so only the no-extension case pays for a
slow scalar loop. Setting the environment variable SIBLINGSHIFT_PURE to a
non-empty value other than "0" before import forces the fallback.
"""

import math
import os

import numpy as np

from . import _pairwise_np
from .measures import DISTANCES, MeasureKind

if os.environ.get("SIBLINGSHIFT_PURE", "") not in ("", "0"):
    _ext = None
else:
    try:
        from . import _pairwise as _ext
    except ImportError:
        _ext = None

HAVE_EXT = _ext is not None

_KIND_CODES = {
    MeasureKind.BRAY_CURTIS: 0,
    MeasureKind.CANBERRA: 1,
    MeasureKind.CHEBYSHEV: 2,
    MeasureKind.CITY_BLOCK: 3,
    MeasureKind.CORRELATION: 4,
    MeasureKind.COSINE: 5,
    MeasureKind.EUCLIDEAN: 6,
}


def active_backend() -> str:
    """Name of the backend `mean_pairwise` will use for unordered calls."""
    return "compiled" if _ext is not None else "numpy"


def mean_pairwise(kind: MeasureKind, a, b, ordered: bool = False) -> float:
    """Average distance over all (row of a, row of b) pairs.

    With ordered=True the naive double-loop accumulation order is
    guaranteed, making reruns (and the compiled/pure pair) bitwise
    identical; without the compiled extension that path drops to a scalar
    Python loop meant for verification-sized inputs, not production runs.
    """
    if kind not in _KIND_CODES:
        raise ValueError(f"no pairwise kernel for measure {kind.token!r}")
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("clouds must be 2-D arrays")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("clouds must contain at least one row")
    if not np.isfinite(a).all() or not np.isfinite(b).all():
        raise ValueError("clouds must be finite")
    if _ext is not None:
        return _ext.mean_pairwise(_KIND_CODES[kind], a, b)
    if ordered:
        return _mean_pairwise_seq(kind, a, b)
    return _pairwise_np.mean_pairwise(kind, a, b)


def _pair_cityblock(ra, rb):
    s = 0.0
    for x, y in zip(ra, rb):
        s += abs(x - y)
    return s


def _pair_euclidean(ra, rb):
    s = 0.0
    for x, y in zip(ra, rb):
        diff = x - y
        s += diff * diff
    return math.sqrt(s)


def _pair_chebyshev(ra, rb):
    mx = 0.0
    for x, y in zip(ra, rb):
        v = abs(x - y)
        if v > mx:
            mx = v
    return mx


def _pair_canberra(ra, rb):
    s = 0.0
    for x, y in zip(ra, rb):
        num = abs(x - y)
        den = abs(x) + abs(y)
        if den != 0.0:
            s += num / den
    return s


def _pair_braycurtis(ra, rb):
    sn = 0.0
    sd = 0.0
    for x, y in zip(ra, rb):
        sn += abs(x - y)
        sd += abs(x + y)
    if sd == 0.0:
        return 0.0 if sn == 0.0 else 1.0
    return sn / sd


def _sumsq(row):
    s = 0.0
    for x in row:
        s += x * x
    return s


def _pair_cosine(ra, rb, na2, nb2):
    if na2 == 0.0 and nb2 == 0.0:
        return 0.0
    if na2 == 0.0 or nb2 == 0.0:
        return 1.0
    dot = 0.0
    for x, y in zip(ra, rb):
        dot += x * y
    psi = 1.0 - dot / (math.sqrt(na2) * math.sqrt(nb2))
    if psi < 0.0:
        return 0.0
    if psi > 2.0:
        return 2.0
    return psi


def _center_row(row):
    s = 0.0
    for x in row:
        s += x
    mu = s / float(len(row))
    return [x - mu for x in row]


def _mean_pairwise_seq(kind: MeasureKind, a: np.ndarray, b: np.ndarray) -> float:
    rows_a = a.tolist()
    rows_b = b.tolist()
    if kind is MeasureKind.CORRELATION:
        rows_a = [_center_row(r) for r in rows_a]
        rows_b = [_center_row(r) for r in rows_b]
        kind = MeasureKind.COSINE
    total = 0.0
    if kind is MeasureKind.COSINE:
        na2 = [_sumsq(r) for r in rows_a]
        nb2 = [_sumsq(r) for r in rows_b]
        for i, ra in enumerate(rows_a):
            for j, rb in enumerate(rows_b):
                total += _pair_cosine(ra, rb, na2[i], nb2[j])
    else:
        pair = {
            MeasureKind.BRAY_CURTIS: _pair_braycurtis,
            MeasureKind.CANBERRA: _pair_canberra,
            MeasureKind.CHEBYSHEV: _pair_chebyshev,
            MeasureKind.CITY_BLOCK: _pair_cityblock,
            MeasureKind.EUCLIDEAN: _pair_euclidean,
        }[kind]
        for ra in rows_a:
            for rb in rows_b:
                total += pair(ra, rb)
    return total / float(len(rows_a) * len(rows_b))


__all__ = ["HAVE_EXT", "active_backend", "mean_pairwise", "DISTANCES"]
