"""Student-t embedding distribution, primal f-divergence loss and its gradient,
and the momentum gradient-descent driver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import AffinityMatrix, squared_distances
from .divergence import (
    Divergence,
    DivergenceDomainError,
    NumericalError,
    f,
    f_at_zero,
    f_prime,
    parse_divergence,
    primal_divergence,
)

__all__ = [
    "Embedding",
    "OptimizerSchedule",
    "LowDimAffinity",
    "NumericalAbort",
    "PrimalResult",
    "init_embedding",
    "low_dim_affinity",
    "primal_loss",
    "primal_gradient",
    "kernel_chain_gradient",
    "clip_point_gradients",
    "run_primal",
    "GRAD_CLIP",
]

GRAD_CLIP = 1e6
INIT_STD = 1e-4


class NumericalAbort(ArithmeticError):
    """Non-finite loss or coordinates; carries the last finite embedding."""

    def __init__(self, message, step, last_good):
        super().__init__(message)
        self.step = step
        self.last_good = last_good


@dataclass
class Embedding:
    coords: np.ndarray
    velocity: np.ndarray = None
    epoch: int = 0

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if self.velocity is None:
            self.velocity = np.zeros_like(self.coords)

    @property
    def m(self):
        return self.coords.shape[0]

    @property
    def d(self):
        return self.coords.shape[1]

    def copy(self):
        return Embedding(self.coords.copy(), self.velocity.copy(), self.epoch)


@dataclass(frozen=True)
class OptimizerSchedule:
    """Momentum gradient-descent schedule.

    ``decay="inverse"`` uses lr_t = lr0 / (1 + t / lr_decay) (and likewise for
    the momentum); ``decay="recursive"`` applies lr_{t+1} = lr_t / (1 + t / lr_decay)
    step by step, which shrinks the step size geometrically fast.
    """

    lr0: float = 100.0
    momentum0: float = 0.5
    lr_decay: float = 500.0
    momentum_decay: float = 500.0
    epochs: int = 1000
    seed: int = 0
    decay: str = "inverse"
    exaggeration: float = 1.0
    exaggeration_epochs: int = 0

    def __post_init__(self):
        for name in ("lr0", "momentum0", "lr_decay", "momentum_decay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.decay not in ("inverse", "recursive"):
            raise ValueError(f"unknown decay {self.decay!r}")
        if self.exaggeration <= 0 or self.exaggeration_epochs < 0:
            raise ValueError("exaggeration factor must be positive and its epoch count >= 0")

    def rates(self, n_steps):
        """Learning rate and momentum for steps 0..n_steps-1."""
        t = np.arange(n_steps, dtype=float)
        if self.decay == "inverse":
            return self.lr0 / (1.0 + t / self.lr_decay), self.momentum0 / (1.0 + t / self.momentum_decay)
        lr = np.empty(n_steps)
        mom = np.empty(n_steps)
        lr_t, mom_t = self.lr0, self.momentum0
        for s in range(n_steps):
            lr[s], mom[s] = lr_t, mom_t
            lr_t = lr_t / (1.0 + s / self.lr_decay)
            mom_t = mom_t / (1.0 + s / self.momentum_decay)
        return lr, mom


@dataclass(frozen=True)
class LowDimAffinity:
    probs: np.ndarray
    kernels: np.ndarray
    normalizer: float


def init_embedding(m: int, d: int = 2, seed: int = 0, rng=None) -> Embedding:
    """Coordinates drawn i.i.d. from N(0, 1e-4^2), zero velocity."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    rng = np.random.default_rng(seed) if rng is None else rng
    return Embedding(rng.normal(0.0, INIT_STD, size=(m, d)))


def _coords(emb):
    return emb.coords if isinstance(emb, Embedding) else np.asarray(emb, dtype=float)


def low_dim_affinity(emb) -> LowDimAffinity:
    """Joint Student-t affinities normalized over all ordered pairs k != l."""
    y = _coords(emb)
    w = 1.0 / (1.0 + squared_distances(y))
    np.fill_diagonal(w, 0.0)
    z = float(np.sum(w))
    return LowDimAffinity(probs=w / z, kernels=w, normalizer=z)


def _probs(P):
    return P.probs if isinstance(P, AffinityMatrix) else np.asarray(P, dtype=float)


def primal_loss(div, P, emb) -> float:
    """D_f(P || Q(y))."""
    return primal_divergence(div, _probs(P), low_dim_affinity(emb).probs)


def _q_sensitivity(div, p, q):
    """d[q f(p/q)]/dq = f(r) - r f'(r) with r = p / q, using the r -> 0 limit where p = 0."""
    g = np.empty_like(q)
    off = ~np.eye(q.shape[0], dtype=bool)
    pos = off & (p > 0)
    r = p[pos] / q[pos]
    g[pos] = f(div, r) - r * f_prime(div, r)
    zero = off & ~(p > 0)
    if zero.any():
        f0 = f_at_zero(div)
        if not np.isfinite(f0):
            raise ValueError(f"{div.name} gradient is undefined where p = 0")
        g[zero] = f0
    np.fill_diagonal(g, 0.0)
    return g


def kernel_chain_gradient(sens, low: LowDimAffinity, y):
    """Gradient wrt coordinates of a loss whose sensitivity to q_ij is ``sens``.

    Differentiating through q_ij = W_ij / Z and W_ij = (1 + ||y_i - y_j||^2)^-1
    gives -4 sum_j (sens_ij - <sens>_q) W_ij^2 / Z (y_i - y_j).
    """
    w, q, z = low.kernels, low.probs, low.normalizer
    mean = float(np.sum(sens * q))
    coef = (sens - mean) * (w * w) / z
    np.fill_diagonal(coef, 0.0)
    return -4.0 * (coef.sum(axis=1)[:, None] * y - coef @ y)


def primal_gradient(div, P, emb):
    """Analytic gradient of D_f(P || Q(y)) with respect to the coordinates."""
    y = _coords(emb)
    low = low_dim_affinity(y)
    sens = _q_sensitivity(div if isinstance(div, Divergence) else parse_divergence(div), _probs(P), low.probs)
    return kernel_chain_gradient(sens, low, y)


def clip_point_gradients(grad, limit=GRAD_CLIP):
    """Rescale per-point gradient rows whose norm exceeds ``limit``; returns (grad, n_clipped)."""
    norms = np.sqrt(np.einsum("ij,ij->i", grad, grad))
    over = norms > limit
    if over.any():
        grad = grad.copy()
        grad[over] *= (limit / norms[over])[:, None]
    return grad, int(over.sum())


@dataclass
class PrimalResult:
    embedding: Embedding
    epochs: np.ndarray
    losses: np.ndarray
    initial_loss: float
    clip_events: int = 0

    @property
    def final_loss(self):
        return float(self.losses[-1]) if len(self.losses) else self.initial_loss


def run_primal(div, P, schedule: OptimizerSchedule = OptimizerSchedule(), d: int = 2,
               trace_every: int = 1, init: Embedding | None = None) -> PrimalResult:
    """Momentum gradient descent on the primal loss.

    Each epoch applies v <- momentum_t * v - lr_t * grad and y <- y + v. The
    loss is recorded after every ``trace_every``-th update.
    """
    div = div if isinstance(div, Divergence) else parse_divergence(div)
    probs = _probs(P)
    m = probs.shape[0]
    emb = init.copy() if init is not None else init_embedding(m, d, schedule.seed)
    if emb.m != m or not np.all(np.isfinite(emb.coords)):
        raise ValueError(f"initial embedding must be a finite {m} x d array")
    lrs, moms = schedule.rates(schedule.epochs)
    initial_loss = primal_divergence(div, probs, low_dim_affinity(emb).probs)
    exaggerated = probs * schedule.exaggeration
    epochs, losses = [], []
    clips = 0
    for t in range(schedule.epochs):
        target = exaggerated if t < schedule.exaggeration_epochs else probs
        grad = primal_gradient(div, target, emb.coords)
        if not np.all(np.isfinite(grad)):
            raise NumericalAbort(f"non-finite gradient at epoch {t + 1}", t + 1, emb.copy())
        grad, n = clip_point_gradients(grad)
        clips += n
        last_good = emb.copy()
        emb.velocity = moms[t] * emb.velocity - lrs[t] * grad
        emb.coords = emb.coords + emb.velocity
        emb.epoch = t + 1
        if not np.all(np.isfinite(emb.coords)):
            raise NumericalAbort(f"non-finite coordinates at epoch {t + 1}", t + 1, last_good)
        if (t + 1) % trace_every == 0:
            try:
                loss = primal_divergence(div, probs, low_dim_affinity(emb).probs)
            except (NumericalError, DivergenceDomainError):
                loss = np.nan
            if not np.isfinite(loss):
                raise NumericalAbort(f"non-finite loss at epoch {t + 1}", t + 1, last_good)
            epochs.append(t + 1)
            losses.append(loss)
    return PrimalResult(emb, np.array(epochs, dtype=int), np.array(losses), initial_loss, clips)
