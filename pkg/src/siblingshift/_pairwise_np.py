"""Vectorized numpy fallback for the mean-pairwise kernels.

Used when the compiled extension is unavailable. Works blockwise over rows
of the first cloud so the (block, n, d) scratch tensor stays within a fixed
memory budget. Results agree with the compiled kernels to floating-point
reassociation (the scoring layer promises 1e-9 relative, not bitwise).
"""

import numpy as np

from .measures import MeasureKind

# Keep the largest scratch tensor around this many bytes per block.
_BLOCK_BYTES = 64 * 2**20


def _row_step(n: int, d: int) -> int:
    return max(1, _BLOCK_BYTES // (8 * max(1, n * d)))


def _mean_cityblock(a, b):
    total = 0.0
    step = _row_step(b.shape[0], a.shape[1])
    for s in range(0, a.shape[0], step):
        diff = np.abs(a[s:s + step, None, :] - b[None, :, :])
        total += float(diff.sum())
    return total / float(a.shape[0] * b.shape[0])


def _mean_euclidean(a, b):
    total = 0.0
    step = _row_step(b.shape[0], a.shape[1])
    for s in range(0, a.shape[0], step):
        diff = a[s:s + step, None, :] - b[None, :, :]
        total += float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).sum())
    return total / float(a.shape[0] * b.shape[0])


def _mean_chebyshev(a, b):
    total = 0.0
    step = _row_step(b.shape[0], a.shape[1])
    for s in range(0, a.shape[0], step):
        diff = np.abs(a[s:s + step, None, :] - b[None, :, :])
        total += float(diff.max(axis=2).sum())
    return total / float(a.shape[0] * b.shape[0])


def _mean_canberra(a, b):
    total = 0.0
    step = _row_step(b.shape[0], a.shape[1])
    for s in range(0, a.shape[0], step):
        blk = a[s:s + step, None, :]
        num = np.abs(blk - b[None, :, :])
        den = np.abs(blk) + np.abs(b[None, :, :])
        terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        total += float(terms.sum())
    return total / float(a.shape[0] * b.shape[0])


def _mean_braycurtis(a, b):
    total = 0.0
    step = _row_step(b.shape[0], a.shape[1])
    for s in range(0, a.shape[0], step):
        blk = a[s:s + step, None, :]
        num = np.abs(blk - b[None, :, :]).sum(axis=2)
        den = np.abs(blk + b[None, :, :]).sum(axis=2)
        psi = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        degenerate = den == 0
        if degenerate.any():
            psi[degenerate & (num > 0)] = 1.0
        total += float(psi.sum())
    return total / float(a.shape[0] * b.shape[0])


def _cosine_total(a, b):
    na2 = np.einsum("ij,ij->i", a, a)
    nb2 = np.einsum("ij,ij->i", b, b)
    norm_a = np.sqrt(na2)
    norm_b = np.sqrt(nb2)
    total = 0.0
    step = max(1, _BLOCK_BYTES // (8 * max(1, b.shape[0])))
    for s in range(0, a.shape[0], step):
        dots = a[s:s + step] @ b.T
        denom = norm_a[s:s + step, None] * norm_b[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            psi = 1.0 - dots / denom
        psi = np.clip(psi, 0.0, 2.0)
        a_zero = na2[s:s + step] == 0
        b_zero = nb2 == 0
        if a_zero.any() or b_zero.any():
            one_zero = a_zero[:, None] ^ b_zero[None, :]
            both_zero = a_zero[:, None] & b_zero[None, :]
            psi = np.where(one_zero, 1.0, psi)
            psi = np.where(both_zero, 0.0, psi)
        total += float(psi.sum())
    return total


def _mean_cosine(a, b):
    return _cosine_total(a, b) / float(a.shape[0] * b.shape[0])


def _mean_correlation(a, b):
    ca = a - a.mean(axis=1, keepdims=True)
    cb = b - b.mean(axis=1, keepdims=True)
    return _cosine_total(ca, cb) / float(a.shape[0] * b.shape[0])


_FUNCS = {
    MeasureKind.BRAY_CURTIS: _mean_braycurtis,
    MeasureKind.CANBERRA: _mean_canberra,
    MeasureKind.CHEBYSHEV: _mean_chebyshev,
    MeasureKind.CITY_BLOCK: _mean_cityblock,
    MeasureKind.CORRELATION: _mean_correlation,
    MeasureKind.COSINE: _mean_cosine,
    MeasureKind.EUCLIDEAN: _mean_euclidean,
}


def mean_pairwise(kind: MeasureKind, a: np.ndarray, b: np.ndarray) -> float:
    """Mean pairwise distance over the cross product of two float64 clouds."""
    try:
        func = _FUNCS[kind]
    except KeyError:
        raise ValueError(f"no pairwise kernel for measure {kind.token!r}") from None
    return func(a, b)
