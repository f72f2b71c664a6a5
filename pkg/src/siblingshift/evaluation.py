"""Evaluation against a gold ranking.

Predicted change scores are compared to gold scores with Spearman's rank
correlation (Pearson correlation of average-tied ranks). Two correlations
obtained on the same word list can be compared with a Fisher z test on the
difference of their atanh-transformed values.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .scoring import ScoreReport


@dataclass(frozen=True)
class GoldEntry:
    word: str
    score: float
    changed: bool | None = None


@dataclass
class GoldRanking:
    entries: list

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.word in seen:
                raise ValueError(f"duplicate word {e.word!r} in gold ranking")
            seen.add(e.word)
            if not math.isfinite(e.score):
                raise ValueError(f"non-finite gold score for {e.word!r}")

    def words(self) -> list:
        return [e.word for e in self.entries]

    def score_map(self) -> dict:
        return {e.word: e.score for e in self.entries}

    def changed_map(self) -> dict:
        return {e.word: e.changed for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)


_TRUE_TOKENS = {"1", "true", "yes", "y"}
_FALSE_TOKENS = {"0", "false", "no", "n"}


def _parse_flag(token: str, lineno: int) -> bool:
    low = token.strip().lower()
    if low in _TRUE_TOKENS:
        return True
    if low in _FALSE_TOKENS:
        return False
    raise ValueError(f"line {lineno}: cannot parse change flag {token!r}")


def load_gold(path) -> GoldRanking:
    """Read a gold ranking: TSV of word, score, optional binary change flag.

    Blank lines and lines starting with '#' are skipped.
    """
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cells = line.split("\t")
            if len(cells) < 2:
                raise ValueError(f"line {lineno}: expected word<TAB>score, got {line!r}")
            word = cells[0].strip()
            try:
                score = float(cells[1])
            except ValueError:
                raise ValueError(f"line {lineno}: bad score {cells[1]!r}") from None
            changed = _parse_flag(cells[2], lineno) if len(cells) > 2 and cells[2].strip() else None
            entries.append(GoldEntry(word=word, score=score, changed=changed))
    if not entries:
        raise ValueError(f"gold ranking {path!r} is empty")
    return GoldRanking(entries=entries)


def spearman(x, y) -> float:
    """Spearman rank correlation: Pearson correlation of average-tied ranks.

    Identical orderings give exactly 1.0 and reversed orderings exactly -1.0;
    constant input has no defined rank correlation and raises.
    """
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.size < 2:
        raise ValueError("need at least two observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite input")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ValueError("constant input: rank correlation is undefined")
    ra = rankdata(a)
    rb = rankdata(b)
    ra -= ra.mean()
    rb -= rb.mean()
    return float((ra @ rb) / math.sqrt((ra @ ra) * (rb @ rb)))


@dataclass(frozen=True)
class FisherResult:
    z: float
    p_value: float

    def significant(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha


def fisher_significance(r1: float, r2: float, n1: int, n2: int) -> FisherResult:
    """Two-sided Fisher z test for the difference of two independent correlations.

    z = (atanh(r1) - atanh(r2)) / sqrt(1/(n1-3) + 1/(n2-3)); the p-value is
    the two-sided normal tail. Equal correlations give z = 0, p = 1 exactly.
    """
    for r in (r1, r2):
        if not math.isfinite(r) or abs(r) >= 1.0:
            raise ValueError(f"correlation {r!r} outside (-1, 1)")
    if n1 <= 3 or n2 <= 3:
        raise ValueError("need more than three observations per sample")
    z = (math.atanh(r1) - math.atanh(r2)) / math.sqrt(1.0 / (n1 - 3) + 1.0 / (n2 - 3))
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return FisherResult(z=z, p_value=p)


@dataclass(frozen=True)
class RankedWord:
    word: str
    gold_rank: float
    predicted_rank: float
    gold_score: float
    predicted_score: float
    changed: bool | None = None


@dataclass
class EvalResult:
    spearman: float
    n: int
    ranks: list
    missing: list = field(default_factory=list)


def _predicted_map(report) -> dict:
    if isinstance(report, ScoreReport):
        return report.score_map()
    return dict(report)


def evaluate(report, gold: GoldRanking) -> EvalResult:
    """Spearman correlation between a report's scores and a gold ranking.

    Only words present in both are ranked; gold words without a prediction
    are listed in `missing`. Higher score = more change = better (lower)
    rank on both sides.
    """
    predicted = _predicted_map(report)
    present = [e for e in gold.entries if e.word in predicted]
    missing = [e.word for e in gold.entries if e.word not in predicted]
    if len(present) < 2:
        raise ValueError("fewer than two gold words have predictions")
    g = np.array([e.score for e in present], dtype=np.float64)
    p = np.array([predicted[e.word] for e in present], dtype=np.float64)
    rho = spearman(g, p)
    gold_ranks = rankdata(-g)
    pred_ranks = rankdata(-p)
    ranks = [
        RankedWord(
            word=e.word,
            gold_rank=float(gr),
            predicted_rank=float(pr),
            gold_score=e.score,
            predicted_score=float(pv),
            changed=e.changed,
        )
        for e, gr, pr, pv in zip(present, gold_ranks, pred_ranks, p)
    ]
    return EvalResult(spearman=rho, n=len(present), ranks=ranks, missing=missing)


def write_eval_tsv(result: EvalResult, dest) -> None:
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", encoding="utf-8") if own else dest
    try:
        fh.write(f"# spearman: {result.spearman:.6f}\n")
        fh.write(f"# n: {result.n}\n")
        if result.missing:
            fh.write(f"# missing: {' '.join(result.missing)}\n")
        fh.write("word\tgold_rank\tpredicted_rank\tgold_score\tpredicted_score\tchanged\n")
        for r in sorted(result.ranks, key=lambda r: r.gold_rank):
            flag = "" if r.changed is None else ("1" if r.changed else "0")
            fh.write(
                f"{r.word}\t{r.gold_rank:g}\t{r.predicted_rank:g}"
                f"\t{r.gold_score:.17g}\t{r.predicted_score:.17g}\t{flag}\n"
            )
    finally:
        if own:
            fh.close()


@dataclass
class AblationTable:
    """Per-word predicted ranks for several scoring variants, plus summary rows."""

    labels: list
    rows: list  # (word, gold_rank, changed, {label: predicted_rank})
    spearman: dict
    n: int


def build_ablation_table(gold: GoldRanking, reports: dict) -> AblationTable:
    """Rank the same gold words under several reports (label -> report).

    Words must be present in every report so the per-variant ranks are
    comparable; gold words missing anywhere are dropped from the table.
    """
    if not reports:
        raise ValueError("no reports given")
    labels = list(reports)
    maps = {label: _predicted_map(r) for label, r in reports.items()}
    present = [e for e in gold.entries if all(e.word in m for m in maps.values())]
    if len(present) < 2:
        raise ValueError("fewer than two gold words are present in every report")
    g = np.array([e.score for e in present], dtype=np.float64)
    gold_ranks = rankdata(-g)
    variant_ranks = {}
    rho = {}
    for label in labels:
        p = np.array([maps[label][e.word] for e in present], dtype=np.float64)
        variant_ranks[label] = rankdata(-p)
        rho[label] = spearman(g, p)
    rows = []
    for i, e in enumerate(present):
        rows.append(
            (
                e.word,
                float(gold_ranks[i]),
                e.changed,
                {label: float(variant_ranks[label][i]) for label in labels},
            )
        )
    rows.sort(key=lambda row: row[1])
    return AblationTable(labels=labels, rows=rows, spearman=rho, n=len(present))


def write_ablation_tsv(table: AblationTable, dest) -> None:
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", encoding="utf-8") if own else dest
    try:
        fh.write("word\tgold_rank\tchanged\t" + "\t".join(table.labels) + "\n")
        for word, gold_rank, changed, ranks in table.rows:
            flag = "" if changed is None else ("1" if changed else "0")
            cells = [word, f"{gold_rank:g}", flag]
            cells.extend(f"{ranks[label]:g}" for label in table.labels)
            fh.write("\t".join(cells) + "\n")
        spearman_cells = ["# spearman", "", ""]
        spearman_cells.extend(f"{table.spearman[label]:.6f}" for label in table.labels)
        fh.write("\t".join(spearman_cells) + "\n")
    finally:
        if own:
            fh.close()
