"""Shared fixtures data and independent reference implementations.

Everything here is deliberately written from the definitions, not by calling
the package, so tests compare two separately-derived answers.
"""

import numpy as np

from siblingshift import archive

# Ablation-study excerpt used as an evaluation fixture:
# (word, gold_rank, changed, mean_only_rank, identity_cov_rank, full_rank)
ABLATION_EXCERPT = [
    ("plane", 1, True, 3, 18, 15),
    ("tip", 2, True, 7, 9, 7),
    ("prop", 3, True, 16, 1, 4),
    ("graft", 4, True, 2, 36, 36),
    ("record", 5, True, 15, 12, 14),
    ("stab", 7, True, 31, 10, 11),
    ("bit", 9, True, 27, 11, 9),
    ("head", 10, True, 23, 28, 28),
    ("multitude", 30, False, 24, 35, 35),
    ("savage", 31, False, 20, 26, 26),
    ("contemplation", 32, False, 1, 37, 37),
    ("tree", 33, False, 33, 31, 30),
    ("relationship", 34, False, 26, 34, 34),
    ("fiction", 35, False, 21, 29, 29),
    ("chairman", 36, False, 5, 32, 33),
    ("risk", 37, False, 10, 19, 21),
]


def make_sets(clouds, corpus_id, layer_mode=archive.LAYER_LAST):
    return [
        archive.SiblingSet(
            word=w,
            corpus_id=corpus_id,
            embeddings=np.asarray(x, dtype=np.float32),
            layer_mode=layer_mode,
        )
        for w, x in clouds.items()
    ]


# ---------------------------------------------------------------------------
# Reference vector distances, straight from the formulas.

def ref_braycurtis(a, b):
    num = float(np.sum(np.abs(a - b)))
    den = float(np.sum(np.abs(a + b)))
    if den == 0.0:
        return 0.0 if num == 0.0 else 1.0
    return num / den


def ref_canberra(a, b):
    total = 0.0
    for x, y in zip(a, b):
        den = abs(x) + abs(y)
        if den != 0.0:
            total += abs(x - y) / den
    return total


def ref_chebyshev(a, b):
    return float(np.max(np.abs(a - b)))


def ref_cityblock(a, b):
    return float(np.sum(np.abs(a - b)))


def ref_cosine(a, b):
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 0.0
    if na == 0.0 or nb == 0.0:
        return 1.0
    val = 1.0 - float(np.dot(a, b)) / (na * nb)
    return min(2.0, max(0.0, val))


def ref_correlation(a, b):
    return ref_cosine(a - np.mean(a), b - np.mean(b))


def ref_euclidean(a, b):
    return float(np.sqrt(np.sum((a - b) ** 2)))


REF_DISTANCES = {
    "braycurtis": ref_braycurtis,
    "canberra": ref_canberra,
    "chebyshev": ref_chebyshev,
    "cityblock": ref_cityblock,
    "correlation": ref_correlation,
    "cosine": ref_cosine,
    "euclidean": ref_euclidean,
}


def ref_mean_pairwise(token, a, b):
    """Brute-force double loop over the cross product."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    func = REF_DISTANCES[token]
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            total += func(a[i], b[j])
    return total / float(a.shape[0] * b.shape[0])


# ---------------------------------------------------------------------------
# Reference rank statistics.

def ref_average_ranks(values):
    """Average ranks computed by explicit grouping of sorted ties."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    sv = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def ref_spearman_no_ties(x, y):
    """Textbook 1 - 6*sum(d^2)/(n(n^2-1)); valid only when neither input ties."""
    rx = ref_average_ranks(x)
    ry = ref_average_ranks(y)
    n = len(rx)
    d2 = float(np.sum((rx - ry) ** 2))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0))


def ref_spearman_ties(x, y):
    """Pearson correlation of average ranks, via np.corrcoef."""
    rx = ref_average_ranks(x)
    ry = ref_average_ranks(y)
    return float(np.corrcoef(rx, ry)[0, 1])


# ---------------------------------------------------------------------------
# Gaussian helpers for Monte Carlo cross-checks.

def mc_kl_diag(mu1, v1, mu2, v2, n_samples, seed):
    """Monte Carlo E_p[log p - log q] for diagonal Gaussians."""
    from scipy.stats import norm

    rng = np.random.default_rng(seed)
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    s1 = np.sqrt(np.asarray(v1, dtype=np.float64))
    s2 = np.sqrt(np.asarray(v2, dtype=np.float64))
    x = rng.normal(loc=mu1, scale=s1, size=(n_samples, len(mu1)))
    logp = norm.logpdf(x, loc=mu1, scale=s1).sum(axis=1)
    logq = norm.logpdf(x, loc=mu2, scale=s2).sum(axis=1)
    return float(np.mean(logp - logq))
