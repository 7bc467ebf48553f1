"""Variational (conjugate-dual) embedding objective and the alternating
minimax optimizer.

The witness function is a small order-invariant network

    score(x_i, x_j) = head([enc(x_i) + enc(x_j); enc(x_i) * enc(x_j)])

evaluated only on pairs i < j and mirrored, so score matrices are exactly
symmetric. Gradients are computed by hand-written reverse mode.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .affinity import AffinityMatrix, Dataset
from .divergence import (
    Divergence,
    NumericalError,
    activation,
    activation_derivatives,
    conjugate,
    conjugate_of_activation,
    parse_divergence,
    primal_divergence,
)
from .primal import (
    Embedding,
    NumericalAbort,
    OptimizerSchedule,
    clip_point_gradients,
    init_embedding,
    kernel_chain_gradient,
    low_dim_affinity,
)

__all__ = [
    "Discriminator",
    "MinimaxConfig",
    "UnsupportedConfiguration",
    "VariationalResult",
    "init_discriminator",
    "score_pairs",
    "variational_objective",
    "variational_bound",
    "discriminator_gradient",
    "embedding_gradient_variational",
    "run_variational",
    "SCORE_CLAMP",
]

log = logging.getLogger(__name__)

SCORE_CLAMP = 500.0


class UnsupportedConfiguration(ValueError):
    pass


@dataclass
class Discriminator:
    """Weights of the encoder and head networks.

    ``enc_w[l]`` has shape (fan_in, fan_out); the head ends in a single linear
    unit. ``center``/``scale`` standardize raw inputs before the encoder.
    """

    enc_w: list
    enc_b: list
    head_w: list
    head_b: list
    center: np.ndarray
    scale: np.ndarray

    @property
    def params(self):
        return self.enc_w + self.enc_b + self.head_w + self.head_b

    @property
    def widths(self):
        return [w.shape[1] for w in self.enc_w], [w.shape[1] for w in self.head_w[:-1]]

    def copy(self):
        return Discriminator(
            [w.copy() for w in self.enc_w], [b.copy() for b in self.enc_b],
            [w.copy() for w in self.head_w], [b.copy() for b in self.head_b],
            self.center.copy(), self.scale.copy(),
        )

    def step(self, grads, lr):
        """In-place ascent: every parameter moves by +lr * grad."""
        for p, g in zip(self.params, grads.params):
            p += lr * g


def _glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_discriminator(dim, enc_widths=(10,), head_widths=(20,), seed=0, data=None, rng=None):
    """Glorot-uniform weights and zero biases.

    When ``data`` is given its per-feature mean and standard deviation are
    stored and used to standardize inputs.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    enc_w, enc_b, head_w, head_b = [], [], [], []
    fan = dim
    for width in enc_widths:
        enc_w.append(_glorot(rng, fan, width))
        enc_b.append(np.zeros(width))
        fan = width
    fan = 2 * fan
    for width in list(head_widths) + [1]:
        head_w.append(_glorot(rng, fan, width))
        head_b.append(np.zeros(width))
        fan = width
    if data is not None:
        x = np.asarray(getattr(data, "points", data), dtype=float)
        center = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    else:
        center, scale = np.zeros(dim), np.ones(dim)
    return Discriminator(enc_w, enc_b, head_w, head_b, center, scale)


@dataclass(frozen=True)
class MinimaxConfig:
    j_steps: int = 10
    k_steps: int = 10
    disc_lr: float = 1e-3
    emb_schedule: OptimizerSchedule = field(default_factory=OptimizerSchedule)
    rounds: int = 100
    enc_widths: tuple = (10,)
    head_widths: tuple = (20,)
    plateau: bool = False
    plateau_tol: float = 1e-6
    plateau_window: int = 20

    def __post_init__(self):
        if self.j_steps < 1 or self.k_steps < 1:
            raise ValueError("j_steps and k_steps must be >= 1")
        if not self.disc_lr > 0:
            raise ValueError("disc_lr must be positive")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")


def _points(data):
    return np.asarray(getattr(data, "points", data), dtype=float)


@lru_cache(maxsize=8)
def _pairs(m):
    iu, ju = np.triu_indices(m, 1)
    iu.flags.writeable = False
    ju.flags.writeable = False
    return iu, ju


def _scatter_rows(values, index, m):
    """out[k] = sum of values[r] over rows r with index[r] == k."""
    return np.stack([np.bincount(index, weights=col, minlength=m) for col in values.T], axis=1)


def _forward(disc, x, keep=False):
    """Scores for all pairs i < j; with ``keep`` also the activations for backprop."""
    m = x.shape[0]
    iu, ju = _pairs(m)
    h = (x - disc.center) / disc.scale
    enc_pre, enc_act = [], [h]
    for w, b in zip(disc.enc_w, disc.enc_b):
        z = h @ w + b
        h = np.maximum(z, 0.0)
        enc_pre.append(z)
        enc_act.append(h)
    e_i, e_j = h[iu], h[ju]
    g = np.concatenate([e_i + e_j, e_i * e_j], axis=1)
    head_pre, head_act = [], [g]
    n_head = len(disc.head_w)
    for layer, (w, b) in enumerate(zip(disc.head_w, disc.head_b)):
        z = g @ w + b
        head_pre.append(z)
        g = z if layer == n_head - 1 else np.maximum(z, 0.0)
        head_act.append(g)
    scores = g[:, 0]
    if keep:
        return scores, (iu, ju, enc_pre, enc_act, head_pre, head_act)
    return scores


def _clamp(scores):
    clamped = np.clip(scores, -SCORE_CLAMP, SCORE_CLAMP)
    return clamped, int(np.count_nonzero(clamped != scores))


def _mirror(values, m, iu, ju, diag=0.0):
    out = np.full((m, m), diag)
    out[iu, ju] = values
    out[ju, iu] = values
    return out


def score_pairs(disc: Discriminator, data) -> np.ndarray:
    """Symmetric m x m matrix of raw scores; the diagonal is unused and set to 0."""
    x = _points(data)
    m = x.shape[0]
    iu, ju = _pairs(m)
    return _mirror(_forward(disc, x), m, iu, ju)


def _probs(P):
    return P.probs if isinstance(P, AffinityMatrix) else np.asarray(P, dtype=float)


def _div(div):
    div = div if isinstance(div, Divergence) else parse_divergence(div)
    if div.interpolated:
        raise UnsupportedConfiguration(
            f"{div.name}: the variational form needs a Fenchel conjugate, which interpolated "
            "divergences do not provide"
        )
    return div


def variational_bound(div, P, Q, witness) -> float:
    """sum_{i != j} [T_ij p_ij - f*(T_ij) q_ij] for a witness matrix T already in f*'s domain."""
    div = _div(div)
    p, q, t = (np.asarray(a, dtype=float) for a in (_probs(P), _probs(Q), witness))
    off = ~np.eye(p.shape[0], dtype=bool)
    val = float(np.sum(t[off] * p[off]) - np.sum(conjugate(div, t[off]) * q[off]))
    if np.isnan(val):
        raise NumericalError("variational bound is NaN")
    return val


def _pair_values(div, p_u, q_u, raw):
    """Per-pair objective terms from raw scores (upper triangle)."""
    t = activation(div, raw)
    c = conjugate_of_activation(div, raw)
    return t * p_u - c * q_u, c


def variational_objective(div, P, emb, disc, data) -> float:
    """Lower bound on D_f(P || Q(y)) realised by the discriminator."""
    div = _div(div)
    x = _points(data)
    p = _probs(P)
    q = low_dim_affinity(emb).probs
    iu, ju = _pairs(x.shape[0])
    raw, _ = _clamp(_forward(disc, x))
    terms, _ = _pair_values(div, p[iu, ju], q[iu, ju], raw)
    val = 2.0 * float(np.sum(terms))
    if np.isnan(val):
        raise NumericalError("variational objective is NaN")
    return val


def discriminator_gradient(div, P, emb, disc, data):
    """Gradient of the variational objective with respect to every weight.

    Returned as a :class:`Discriminator` whose arrays hold the gradients.
    """
    div = _div(div)
    x = _points(data)
    m = x.shape[0]
    p = _probs(P)
    q = low_dim_affinity(emb).probs
    scores, (iu, ju, enc_pre, enc_act, head_pre, head_act) = _forward(disc, x, keep=True)
    raw, _ = _clamp(scores)
    dt, dc = activation_derivatives(div, raw)
    inside = (scores >= -SCORE_CLAMP) & (scores <= SCORE_CLAMP)
    # Each unordered pair stands for (i, j) and (j, i).
    upstream = 2.0 * (p[iu, ju] * dt - q[iu, ju] * dc) * inside
    grad = upstream[:, None]
    n_head = len(disc.head_w)
    head_gw = [None] * n_head
    head_gb = [None] * n_head
    for layer in range(n_head - 1, -1, -1):
        if layer < n_head - 1:
            grad = grad * (head_pre[layer] > 0)
        head_gw[layer] = head_act[layer].T @ grad
        head_gb[layer] = grad.sum(axis=0)
        grad = grad @ disc.head_w[layer].T
    width = grad.shape[1] // 2
    g_sum, g_prod = grad[:, :width], grad[:, width:]
    e = enc_act[-1]
    de = _scatter_rows(g_sum + g_prod * e[ju], iu, m) + _scatter_rows(g_sum + g_prod * e[iu], ju, m)
    n_enc = len(disc.enc_w)
    enc_gw = [None] * n_enc
    enc_gb = [None] * n_enc
    grad = de
    for layer in range(n_enc - 1, -1, -1):
        grad = grad * (enc_pre[layer] > 0)
        enc_gw[layer] = enc_act[layer].T @ grad
        enc_gb[layer] = grad.sum(axis=0)
        grad = grad @ disc.enc_w[layer].T
    return Discriminator(enc_gw, enc_gb, head_gw, head_gb, np.zeros_like(disc.center), np.zeros_like(disc.scale))


def _conjugate_matrix(div, disc, x):
    m = x.shape[0]
    iu, ju = _pairs(m)
    raw, clipped = _clamp(_forward(disc, x))
    return _mirror(conjugate_of_activation(div, raw), m, iu, ju), clipped


def embedding_gradient_variational(div, P, emb, disc, data, conj=None):
    """Gradient of the variational objective with respect to the coordinates.

    Only the -f*(T) q term depends on the embedding, through q's
    normalization. ``conj`` may carry a precomputed f*(T) matrix.
    """
    div = _div(div)
    y = emb.coords if isinstance(emb, Embedding) else np.asarray(emb, dtype=float)
    if conj is None:
        conj, _ = _conjugate_matrix(div, disc, _points(data))
    low = low_dim_affinity(y)
    return kernel_chain_gradient(-conj, low, y)


@dataclass
class VariationalResult:
    embedding: Embedding
    discriminator: Discriminator
    rounds: np.ndarray
    objectives: np.ndarray
    primal_losses: np.ndarray
    clip_events: np.ndarray
    initial_loss: float
    stopped_early: bool = False

    @property
    def final_loss(self):
        return float(self.primal_losses[-1]) if len(self.primal_losses) else self.initial_loss


def run_variational(div, P, data, config: MinimaxConfig = MinimaxConfig(), d: int = 2,
                    trace_every: int = 1, init: Embedding | None = None,
                    disc: Discriminator | None = None) -> VariationalResult:
    """Alternating minimax optimization.

    Every round takes ``j_steps`` gradient-ascent steps on the discriminator
    at constant rate ``disc_lr`` and then ``k_steps`` momentum-descent steps on
    the embedding. The embedding schedule's step counter and velocity persist
    across rounds. Both the variational objective and the primal loss are
    recorded after every ``trace_every``-th round.
    """
    div = _div(div)
    x = _points(data)
    p = _probs(P)
    m = p.shape[0]
    if x.shape[0] != m:
        raise ValueError(f"data has {x.shape[0]} points but P is {m} x {m}")
    sched = config.emb_schedule
    rng = np.random.default_rng(sched.seed)
    emb = init.copy() if init is not None else init_embedding(m, d, rng=rng)
    disc = disc.copy() if disc is not None else init_discriminator(
        x.shape[1], config.enc_widths, config.head_widths, rng=rng, data=x)
    total_steps = config.rounds * config.k_steps
    lrs, moms = sched.rates(total_steps)
    initial_loss = primal_divergence(div, p, low_dim_affinity(emb).probs)
    rounds, objectives, losses, clips = [], [], [], []
    step = 0
    stopped = False
    for r in range(config.rounds):
        n_clip = 0
        for _ in range(config.j_steps):
            grads = discriminator_gradient(div, p, emb.coords, disc, x)
            disc.step(grads, config.disc_lr)
        if not all(np.all(np.isfinite(w)) for w in disc.params):
            raise NumericalAbort(f"non-finite discriminator weights in round {r + 1}", r + 1, emb.copy())
        conj, c = _conjugate_matrix(div, disc, x)
        n_clip += c
        for _ in range(config.k_steps):
            grad = embedding_gradient_variational(div, p, emb.coords, disc, x, conj=conj)
            grad, c = clip_point_gradients(grad)
            n_clip += c
            last_good = emb.copy()
            emb.velocity = moms[step] * emb.velocity - lrs[step] * grad
            emb.coords = emb.coords + emb.velocity
            step += 1
            emb.epoch = step
            if not np.all(np.isfinite(emb.coords)):
                raise NumericalAbort(f"non-finite coordinates in round {r + 1}", r + 1, last_good)
        if (r + 1) % trace_every == 0:
            loss = primal_divergence(div, p, low_dim_affinity(emb).probs)
            obj = variational_objective(div, p, emb.coords, disc, x)
            if not (np.isfinite(loss) and np.isfinite(obj)):
                raise NumericalAbort(f"non-finite loss in round {r + 1}", r + 1, emb.copy())
            rounds.append(r + 1)
            objectives.append(obj)
            losses.append(loss)
            clips.append(n_clip)
            if config.plateau and _plateaued(losses, config.plateau_window, config.plateau_tol):
                log.info("primal loss plateaued after round %d", r + 1)
                stopped = True
                break
    return VariationalResult(emb, disc, np.array(rounds, dtype=int), np.array(objectives),
                             np.array(losses), np.array(clips, dtype=int), initial_loss, stopped)


def _plateaued(losses, window, tol):
    if len(losses) <= window:
        return False
    old, new = losses[-window - 1], losses[-1]
    return abs(old - new) <= tol * abs(old)
