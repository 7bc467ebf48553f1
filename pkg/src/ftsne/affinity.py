"""High-dimensional neighbour distributions.

Builds perplexity-calibrated Gaussian conditionals p_{j|i}, their symmetric
joint p_ij, and latent-space similarities r_{j|i} used for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._threads import map_blocks

__all__ = [
    "Dataset",
    "ConditionalAffinity",
    "AffinityMatrix",
    "DegenerateInputError",
    "squared_distances",
    "conditional_affinities",
    "symmetrize",
    "joint_affinities",
    "latent_affinity",
    "student_conditional",
    "row_perplexity",
]

MAX_BISECT = 64
MAX_DOUBLING = 64


class DegenerateInputError(ValueError):
    """Raised when a row of the distance matrix carries no information."""


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ValueError("dataset needs at least 2 points arranged as an m x D matrix")
        if not np.all(np.isfinite(pts)):
            raise ValueError("dataset coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.array(self.labels)
            if labels.shape[0] != pts.shape[0]:
                raise ValueError(f"expected {pts.shape[0]} labels, got {labels.shape[0]}")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class ConditionalAffinity:
    """Row-stochastic neighbour distribution; ``rows[i, j]`` is p_{j|i}.

    ``flagged`` marks rows that are identically zero (singleton classes in a
    discrete latent space); such rows are excluded from Z-space metrics.
    """

    rows: np.ndarray
    sigmas: np.ndarray | None = None
    perplexity: float | None = None
    flagged: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.flagged is None:
            object.__setattr__(self, "flagged", np.zeros(self.rows.shape[0], dtype=bool))
        for arr in (self.rows, self.sigmas, self.flagged):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def m(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric joint distribution over ordered pairs i != j."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs.setflags(write=False)

    @property
    def m(self) -> int:
        return self.probs.shape[0]


def squared_distances(x):
    """Dense matrix of squared Euclidean distances with an exact zero diagonal."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    # Recompute pairs where cancellation dominates.
    tiny = d2 <= 1e-9 * (sq[:, None] + sq[None, :])
    if tiny.any():
        ii, jj = np.nonzero(tiny)
        diff = x[ii] - x[jj]
        d2[ii, jj] = np.einsum("ij,ij->i", diff, diff)
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    return d2


def _row_stats(d2, log_sigma):
    """Row distributions and base-2 entropies for per-row bandwidths.

    ``d2`` holds off-diagonal squared distances only (shape b x (m-1)), shifted
    so each row's minimum is zero; the shift cancels in the normalization.
    """
    beta = 0.5 * np.exp(-2.0 * log_sigma)
    logits = -d2 * beta[:, None]
    w = np.exp(logits)
    z = w.sum(axis=1)
    p = w / z[:, None]
    # H = log Z + beta * E_p[d2] in nats
    h = np.log(z) + beta * np.einsum("ij,ij->i", p, d2)
    return p, h / np.log(2.0)


def _calibrate_block(d2_off, target_bits, tol):
    """Bisection on log(sigma) for a block of rows."""
    n = d2_off.shape[0]
    shifted = d2_off - d2_off.min(axis=1, keepdims=True)
    # Scale-aware start: mean squared distance of the row.
    scale = d2_off.mean(axis=1)
    log_sigma = 0.5 * np.log(scale)
    log_target = target_bits

    def converged(h):
        return np.abs(np.exp2(h - log_target) - 1.0) < tol

    p, h = _row_stats(shifted, log_sigma)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    done = converged(h)
    step = np.log(2.0)
    # Bracket by doubling or halving sigma; rows whose entropy saturates
    # (e.g. a single neighbour) never bracket and keep their last state.
    for _ in range(MAX_DOUBLING):
        below = h < log_target
        lo = np.where(~done & below, log_sigma, lo)
        hi = np.where(~done & ~below, log_sigma, hi)
        active = ~done & (np.isinf(lo) | np.isinf(hi))
        if not active.any():
            break
        log_sigma[active] += np.where(np.isinf(hi[active]), step, -step)
        p[active], h[active] = _row_stats(shifted[active], log_sigma[active])
        done |= converged(h)
    for _ in range(MAX_BISECT):
        active = ~done & np.isfinite(lo) & np.isfinite(hi)
        if not active.any():
            break
        idx = np.flatnonzero(active)
        mid = 0.5 * (lo[idx] + hi[idx])
        log_sigma[idx] = mid
        p_new, h_new = _row_stats(shifted[idx], mid)
        p[idx] = p_new
        h[idx] = h_new
        below = h_new < log_target
        lo[idx[below]] = mid[below]
        hi[idx[~below]] = mid[~below]
        done[idx] = converged(h_new)
    return p, np.exp(log_sigma)


def conditional_affinities(data, perplexity: float, tol: float = 1e-4) -> ConditionalAffinity:
    """Perplexity-calibrated Gaussian conditionals p_{j|i}.

    Each bandwidth sigma_i is found by bisection on log(sigma_i) until
    ``2**H(p_{.|i})`` is within relative ``tol`` of ``perplexity`` (entropy in
    bits). Rows are independent and calibrated in parallel blocks.

    Parameters
    ----------
    data : Dataset or array of shape (m, D)
    perplexity : float
        Effective number of neighbours, ``1 < perplexity < m``.
    tol : float
        Relative tolerance on the achieved perplexity.
    """
    points = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    m = points.shape[0]
    if m < 2:
        raise ValueError("need at least 2 points")
    if not 1.0 < perplexity < m:
        raise ValueError(f"perplexity must satisfy 1 < perplexity < m={m}, got {perplexity}")
    d2 = squared_distances(points)
    offmask = ~np.eye(m, dtype=bool)
    d2_off = d2[offmask].reshape(m, m - 1)
    dead = np.flatnonzero(d2_off.max(axis=1) == 0.0)
    if dead.size:
        raise DegenerateInputError(
            f"row {dead[0]} has zero distance to every other point (duplicate points); "
            f"{dead.size} such rows"
        )
    target_bits = np.log2(perplexity)

    def block(start, stop):
        return _calibrate_block(d2_off[start:stop], target_bits, tol)

    parts = map_blocks(block, m)
    p_off = np.concatenate([p for p, _ in parts])
    sigmas = np.concatenate([s for _, s in parts])
    rows = np.zeros((m, m))
    rows[offmask] = p_off.ravel()
    rows /= rows.sum(axis=1, keepdims=True)
    return ConditionalAffinity(rows=rows, sigmas=sigmas, perplexity=float(perplexity))


def row_perplexity(rows):
    """2**H of every row, entropy in bits; zero entries contribute nothing."""
    rows = np.asarray(rows, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rows > 0, rows * np.log2(np.where(rows > 0, rows, 1.0)), 0.0)
    return np.exp2(-terms.sum(axis=1))


def symmetrize(cond: ConditionalAffinity) -> AffinityMatrix:
    """p_ij = (p_{j|i} + p_{i|j}) / 2m."""
    rows = cond.rows
    m = rows.shape[0]
    probs = (rows + rows.T) / (2.0 * m)
    np.fill_diagonal(probs, 0.0)
    return AffinityMatrix(probs)


def joint_affinities(data, perplexity: float, tol: float = 1e-4) -> AffinityMatrix:
    return symmetrize(conditional_affinities(data, perplexity, tol=tol))


def student_conditional(coords) -> ConditionalAffinity:
    """Row-normalized Student-t kernel (1 + ||y_i - y_j||^2)^-1 over j != i."""
    w = 1.0 / (1.0 + squared_distances(coords))
    np.fill_diagonal(w, 0.0)
    return ConditionalAffinity(rows=w / w.sum(axis=1, keepdims=True))


def latent_affinity(labels, kind: str = "discrete") -> ConditionalAffinity:
    """Latent-space similarities r_{j|i}.

    ``discrete`` spreads each row uniformly over the other members of the
    point's class; a singleton class yields a zero row that is flagged.
    ``continuous`` uses the row-normalized Student-t kernel on the label vectors.
    """
    labels = np.asarray(labels)
    if kind == "discrete":
        same = labels[:, None] == labels[None, :]
        if same.ndim > 2:
            same = same.all(axis=tuple(range(2, same.ndim)))
        np.fill_diagonal(same, False)
        counts = same.sum(axis=1)
        flagged = counts == 0
        rows = same / np.where(flagged, 1, counts)[:, None]
        return ConditionalAffinity(rows=rows.astype(float), flagged=flagged)
    if kind == "continuous":
        return student_conditional(np.asarray(labels, dtype=float))
    raise ValueError(f"latent kind must be 'discrete' or 'continuous', got {kind!r}")
