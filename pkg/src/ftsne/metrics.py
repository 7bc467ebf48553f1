"""Neighbourhood-retrieval metrics and the binary-neighbourhood analysis.

Threshold metrics compare neighbour sets N_eps(i) = {j != i : s_{j|i} > eps}
between a reference space (data X or latent Z) and the embedding Y. Points with
an empty retrieved set score precision 1, and points with an empty reference
set score recall 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import ConditionalAffinity, squared_distances
from .divergence import Divergence, parse_divergence, pair_terms

__all__ = [
    "RetrievalCurves",
    "BinaryNeighborhood",
    "threshold_neighbors",
    "epsilon_grid",
    "pr_curve",
    "pr_curve_xy",
    "pr_curve_zy",
    "knn_kfn_curve",
    "fscore",
    "binary_divergence",
    "proposition1_prediction",
]


@dataclass(frozen=True)
class RetrievalCurves:
    """Precision/recall swept over a threshold or neighbourhood size.

    For K-nearest/K-farthest curves ``precision`` holds NN-precision and
    ``recall`` holds FN-precision.
    """

    params: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    fscore: np.ndarray

    @property
    def max_fscore(self) -> float:
        return float(np.max(self.fscore)) if len(self.fscore) else 0.0

    def rows(self):
        return zip(self.params, self.precision, self.recall, self.fscore)


def fscore(precision, recall):
    precision = np.asarray(precision, dtype=float)
    recall = np.asarray(recall, dtype=float)
    denom = precision + recall
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(denom > 0, 2.0 * precision * recall / safe, 0.0)


def _rows(cond):
    return cond.rows if isinstance(cond, ConditionalAffinity) else np.asarray(cond, dtype=float)


def threshold_neighbors(cond, eps: float) -> np.ndarray:
    """Boolean m x m matrix; entry (i, j) is True when j is in N_eps(i)."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    rows = _rows(cond)
    nb = rows > eps
    np.fill_diagonal(nb, False)
    return nb


def epsilon_grid(*conds, n: int = 50, lo_pct: float = 1.0, hi_pct: float = 99.0) -> np.ndarray:
    """Log-spaced thresholds over the range where every matrix discriminates.

    Each matrix contributes the [lo_pct, hi_pct] percentile range of its
    positive off-diagonal entries, and the grid spans the intersection of
    those ranges. Matrices with a single positive level (uniform class
    rows, say) carry no range and are skipped. If the ranges do not overlap
    the pooled percentiles are used instead.
    """
    vals = []
    for c in conds:
        rows = _rows(c)
        off = rows[~np.eye(rows.shape[0], dtype=bool)]
        vals.append(off[off > 0])
    pooled = np.concatenate(vals)
    if pooled.size == 0:
        raise ValueError("no positive similarities to build a threshold grid from")
    ranges = [np.percentile(v, [lo_pct, hi_pct]) for v in vals if v.size and np.ptp(v) > 0]
    lo = max((r[0] for r in ranges), default=None)
    hi = min((r[1] for r in ranges), default=None)
    if lo is None or not hi > lo:
        lo, hi = np.percentile(pooled, [lo_pct, hi_pct])
    if hi <= lo:
        hi = lo * (1.0 + 1e-9)
    return np.geomspace(lo, hi, n)


def pr_curve(true_cond, emb_cond, eps_grid, exclude=None) -> RetrievalCurves:
    """Mean per-point precision and recall of embedding neighbour sets against
    reference neighbour sets, at every threshold in ``eps_grid``."""
    true_rows = _rows(true_cond)
    emb_rows = _rows(emb_cond)
    if true_rows.shape != emb_rows.shape:
        raise ValueError(f"row count mismatch: {true_rows.shape[0]} vs {emb_rows.shape[0]}")
    m = true_rows.shape[0]
    keep = np.ones(m, dtype=bool)
    if exclude is not None:
        keep &= ~np.asarray(exclude, dtype=bool)
    if isinstance(true_cond, ConditionalAffinity):
        keep &= ~true_cond.flagged
    if not keep.any():
        raise ValueError("every row is excluded from the metric")
    eps_grid = np.asarray(eps_grid, dtype=float)
    prec = np.empty(eps_grid.size)
    rec = np.empty(eps_grid.size)
    for k, eps in enumerate(eps_grid):
        nx = threshold_neighbors(true_rows, eps)[keep]
        ny = threshold_neighbors(emb_rows, eps)[keep]
        hit = np.count_nonzero(nx & ny, axis=1)
        kx = np.count_nonzero(nx, axis=1)
        ky = np.count_nonzero(ny, axis=1)
        prec[k] = np.mean(np.where(ky > 0, hit / np.maximum(ky, 1), 1.0))
        rec[k] = np.mean(np.where(kx > 0, hit / np.maximum(kx, 1), 1.0))
    return RetrievalCurves(eps_grid, prec, rec, fscore(prec, rec))


def pr_curve_xy(p_cond, q_cond, eps_grid) -> RetrievalCurves:
    """Precision_X / Recall_X: data-space neighbours as ground truth."""
    return pr_curve(p_cond, q_cond, eps_grid)


def pr_curve_zy(r_cond, q_cond, eps_grid) -> RetrievalCurves:
    """Precision_Z / Recall_Z: latent-space neighbours as ground truth; flagged rows are skipped."""
    return pr_curve(r_cond, q_cond, eps_grid)


def _neighbor_ranks(points, farthest=False):
    """rank[i, j] = position of j in i's ordering by (distance, index), self excluded."""
    d2 = squared_distances(points)
    m = d2.shape[0]
    key = -d2 if farthest else d2.copy()
    np.fill_diagonal(key, np.inf)
    order = np.argsort(key, axis=1, kind="stable")
    ranks = np.empty((m, m), dtype=np.int64)
    ranks[np.arange(m)[:, None], order] = np.arange(m)[None, :]
    return ranks


def knn_kfn_curve(data, emb, k_grid) -> RetrievalCurves:
    """NN-precision(K) and FN-precision(K) over Euclidean neighbour rankings.

    Distance ties break towards the lower index.
    """
    x = getattr(data, "points", data)
    y = getattr(emb, "coords", emb)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"row count mismatch: {x.shape[0]} vs {y.shape[0]}")
    m = x.shape[0]
    k_grid = np.asarray(k_grid, dtype=int)
    if np.any((k_grid < 1) | (k_grid >= m)):
        raise ValueError(f"K must satisfy 1 <= K < m={m}")
    out = []
    for farthest in (False, True):
        # j is in both top-K sets iff its worse rank is < K.
        worst = np.maximum(_neighbor_ranks(x, farthest), _neighbor_ranks(y, farthest))
        np.fill_diagonal(worst, m)
        counts = np.bincount(worst.ravel(), minlength=m + 1)[:m]
        cum = np.cumsum(counts)
        out.append(cum[k_grid - 1] / (m * k_grid))
    nn, fn = out
    return RetrievalCurves(k_grid, nn, fn, fscore(nn, fn))


@dataclass(frozen=True)
class BinaryNeighborhood:
    """Two-level affinities: every row puts mass 1 - delta on its r true
    neighbours (p = a) and delta on the rest (p = b); likewise the embedding
    with k retrieved neighbours (q = c or d). Per-point fields broadcast."""

    m: int
    r: np.ndarray
    k: np.ndarray
    n_tp: np.ndarray
    delta: float

    def __post_init__(self):
        r, k, n_tp = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (self.r, self.k, self.n_tp))
        r, k, n_tp = np.broadcast_arrays(r, k, n_tp)
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 0.5)")
        if np.any(r < 1) or np.any(k < 1) or np.any(r > self.m - 2) or np.any(k > self.m - 2):
            raise ValueError("neighbourhood sizes must lie in [1, m-2]")
        if np.any(n_tp < 0) or np.any(n_tp > np.minimum(r, k)):
            raise ValueError("n_tp must lie in [0, min(r, k)]")
        if np.any(self.m - 1 - r - k + n_tp < 0):
            raise ValueError("true-negative count would be negative")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "n_tp", n_tp)

    @property
    def n_fn(self):
        return self.r - self.n_tp

    @property
    def n_fp(self):
        return self.k - self.n_tp

    @property
    def n_tn(self):
        return self.m - 1 - self.r - self.k + self.n_tp

    def levels(self):
        """(a, b, c, d): in/out affinity levels for P and for Q."""
        d = self.delta
        return (
            (1 - d) / self.r,
            d / (self.m - self.r - 1),
            (1 - d) / self.k,
            d / (self.m - self.k - 1),
        )


def binary_divergence(bn: BinaryNeighborhood, div) -> float:
    """Exact sum of q f(p/q) over the four cell types, summed over points."""
    div = div if isinstance(div, Divergence) else parse_divergence(div)
    a, b, c, d = bn.levels()
    total = (
        bn.n_tp * pair_terms(div, a, c)
        + bn.n_fn * pair_terms(div, a, d)
        + bn.n_fp * pair_terms(div, b, c)
        + bn.n_tn * pair_terms(div, b, d)
    )
    return float(np.sum(total))


def proposition1_prediction(bn: BinaryNeighborhood, div) -> float:
    """Leading-order closed form of the binary-neighbourhood divergence.

    KL: (n_FN / r) log((1-delta)/delta), i.e. (1 - recall) C0; RKL: (1 - precision) C0;
    JS: the mean of those two; CH and HL: the three-term precision / recall /
    neighbourhood-size expressions. Summed over points.
    """
    div = div if isinstance(div, Divergence) else parse_divergence(div)
    delta, m = bn.delta, bn.m
    r, k = bn.r, bn.k
    miss = bn.n_fn / r
    false_pos = bn.n_fp / k
    precision = bn.n_tp / k
    c0 = np.log((1 - delta) / delta)
    kind = div.kind
    if kind == "KL":
        per_point = miss * c0
    elif kind == "RKL":
        per_point = false_pos * c0
    elif kind == "JS":
        per_point = 0.5 * (miss + false_pos) * c0
    elif kind == "CH":
        size = (r / k - 1.0) ** 2
        recall_weight = (1 - delta) / delta * (m - k - 1) / r - 2.0
        per_point = (1 - delta) * (precision * size + miss * recall_weight + false_pos)
    elif kind == "HL":
        size = (np.sqrt(r / k) - 1.0) ** 2
        recall_weight = 1.0 - 2.0 * np.sqrt(k * delta / (1 - delta))
        precision_weight = 1.0 - 2.0 * np.sqrt(r * delta / (1 - delta))
        per_point = (1 - delta) * (precision * size + miss * recall_weight + false_pos * precision_weight)
    else:
        raise ValueError("no closed form for interpolated divergences")
    return float(np.sum(per_point))
