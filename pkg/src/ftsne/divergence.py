"""f-divergence family used by the embedding objectives.

Each divergence bundles its generating function ``f``, the derivative ``f'``,
the Fenchel conjugate ``f*`` and the output activation ``h`` that maps an
unconstrained discriminator score into the domain of ``f*``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KINDS",
    "Divergence",
    "DivergenceDomainError",
    "NumericalError",
    "parse_divergence",
    "f",
    "f_prime",
    "f_at_zero",
    "conjugate",
    "activation",
    "conjugate_of_activation",
    "activation_derivatives",
    "primal_divergence",
    "heatmap_grids",
]

KINDS = ("KL", "RKL", "JS", "CH", "HL")
LOG2 = np.log(2.0)

_ALIASES = {"CS": "CH", "CHI2": "CH", "HELLINGER": "HL", "REVERSE_KL": "RKL"}


class DivergenceDomainError(ValueError):
    """Argument outside the domain of f, f' or f*."""


class NumericalError(ArithmeticError):
    """NaN produced while evaluating a divergence."""


@dataclass(frozen=True)
class Divergence:
    kind: str
    alpha: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        kind = _ALIASES.get(kind, kind)
        if kind in ("INTERP", "INTERPOLATED"):
            kind = "INTERP"
            if self.alpha is None or not 0.0 <= self.alpha <= 1.0:
                raise ValueError(f"interpolated divergence needs alpha in [0, 1], got {self.alpha}")
        elif kind in KINDS:
            if self.alpha is not None:
                raise ValueError(f"alpha is only meaningful for interpolated divergences, not {kind}")
        else:
            raise ValueError(f"unknown divergence kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)

    @property
    def interpolated(self) -> bool:
        return self.kind == "INTERP"

    @property
    def name(self) -> str:
        if self.interpolated:
            return f"interp:{self.alpha:g}"
        return self.kind.lower()

    def __str__(self):
        return self.name

    @classmethod
    def interpolate(cls, alpha: float) -> "Divergence":
        """alpha * KL + (1 - alpha) * RKL, defined on the generating function."""
        return cls("INTERP", float(alpha))


def parse_divergence(text: str) -> Divergence:
    """Parse ``kl``, ``rkl``, ``js``, ``ch`` (or ``cs``), ``hl`` or ``interp:<alpha>``."""
    text = text.strip()
    if ":" in text:
        head, _, tail = text.partition(":")
        if head.lower() not in ("interp", "interpolated"):
            raise ValueError(f"unknown divergence {text!r}")
        try:
            alpha = float(tail)
        except ValueError:
            raise ValueError(f"bad interpolation weight in {text!r}") from None
        return Divergence.interpolate(alpha)
    return Divergence(text)


def _as_div(div) -> Divergence:
    return div if isinstance(div, Divergence) else parse_divergence(div)


def _check_positive(div, t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DivergenceDomainError(f"{_as_div(div).name}: argument must be > 0")
    return t


def _mix(alpha, a, b):
    # Skip a zero-weighted component so alpha in {0, 1} reproduces KL/RKL exactly.
    if alpha == 1.0:
        return a()
    if alpha == 0.0:
        return b()
    return alpha * a() + (1.0 - alpha) * b()


def _f(kind, t):
    if kind == "KL":
        return t * np.log(t)
    if kind == "RKL":
        return -np.log(t)
    if kind == "JS":
        return (t + 1.0) * np.log(2.0 / (t + 1.0)) + t * np.log(t)
    if kind == "CH":
        return (t - 1.0) ** 2
    if kind == "HL":
        return (np.sqrt(t) - 1.0) ** 2
    raise AssertionError(kind)


def _fp(kind, t):
    if kind == "KL":
        return 1.0 + np.log(t)
    if kind == "RKL":
        return -1.0 / t
    if kind == "JS":
        return np.log(2.0 * t / (1.0 + t))
    if kind == "CH":
        return 2.0 * (t - 1.0)
    if kind == "HL":
        return 1.0 - 1.0 / np.sqrt(t)
    raise AssertionError(kind)


def f(div, t):
    """Generating function evaluated at ``t > 0``."""
    div = _as_div(div)
    t = _check_positive(div, t)
    if div.interpolated:
        return _mix(div.alpha, lambda: _f("KL", t), lambda: _f("RKL", t))
    return _f(div.kind, t)


def f_prime(div, t):
    """Analytic derivative of the generating function."""
    div = _as_div(div)
    t = _check_positive(div, t)
    if div.interpolated:
        return _mix(div.alpha, lambda: _fp("KL", t), lambda: _fp("RKL", t))
    return _fp(div.kind, t)


def f_at_zero(div) -> float:
    """Limit of f(t) as t -> 0+ (``inf`` for RKL and any interpolation with alpha < 1)."""
    div = _as_div(div)
    limits = {"KL": 0.0, "RKL": np.inf, "JS": LOG2, "CH": 1.0, "HL": 1.0}
    if div.interpolated:
        return 0.0 if div.alpha == 1.0 else np.inf
    return limits[div.kind]


def _require_plain(div, what):
    if div.interpolated:
        raise DivergenceDomainError(f"{what} is not defined for interpolated divergences")


def conjugate(div, u):
    """Fenchel conjugate f*(u).

    Domains: KL and CH accept all reals, RKL needs u < 0, JS needs u < log 2
    and HL needs u < 1.
    """
    div = _as_div(div)
    _require_plain(div, "the Fenchel conjugate")
    u = np.asarray(u, dtype=float)
    kind = div.kind
    if kind == "KL":
        return np.exp(u - 1.0)
    if kind == "CH":
        return 0.25 * u * u + u
    if kind == "RKL":
        bad = ~(u < 0)
        bound = "u < 0"
    elif kind == "JS":
        bad = ~(u < LOG2)
        bound = "u < log 2"
    else:
        bad = ~(u < 1.0)
        bound = "u < 1"
    if np.any(bad):
        raise DivergenceDomainError(f"conjugate of {div.name} requires {bound}")
    if kind == "RKL":
        return -1.0 - np.log(-u)
    if kind == "JS":
        return -np.log(2.0 - np.exp(u))
    return u / (1.0 - u)


def activation(div, raw):
    """Map raw scores into the conjugate's domain.

    At very large positive scores the JS and HL outputs round to their
    suprema (log 2 and 1); use :func:`conjugate_of_activation` when the
    conjugate of the activated value is what you need.
    """
    div = _as_div(div)
    _require_plain(div, "the output activation")
    x = np.asarray(raw, dtype=float)
    kind = div.kind
    if kind in ("KL", "CH"):
        return x.copy()
    if kind == "RKL":
        return -np.exp(-x)
    if kind == "JS":
        return LOG2 - np.logaddexp(0.0, -x)
    return -np.expm1(-x)


def conjugate_of_activation(div, raw):
    """f*(h(raw)) in closed form, finite for every finite ``raw``."""
    div = _as_div(div)
    _require_plain(div, "the output activation")
    x = np.asarray(raw, dtype=float)
    kind = div.kind
    if kind == "KL":
        return np.exp(x - 1.0)
    if kind == "RKL":
        return x - 1.0
    if kind == "JS":
        return np.logaddexp(0.0, x) - LOG2
    if kind == "HL":
        return np.expm1(x)
    return 0.25 * x * x + x


def activation_derivatives(div, raw):
    """Derivatives of h(raw) and f*(h(raw)) with respect to ``raw``."""
    div = _as_div(div)
    _require_plain(div, "the output activation")
    x = np.asarray(raw, dtype=float)
    kind = div.kind
    if kind == "KL":
        return np.ones_like(x), np.exp(x - 1.0)
    if kind == "RKL":
        return np.exp(-x), np.ones_like(x)
    if kind == "JS":
        sig_neg = np.exp(-np.logaddexp(0.0, x))
        sig_pos = np.exp(-np.logaddexp(0.0, -x))
        return sig_neg, sig_pos
    if kind == "HL":
        return np.exp(-x), np.exp(x)
    return np.ones_like(x), 0.5 * x + 1.0


def _offdiag(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2 and a.shape[0] == a.shape[1]:
        return a[~np.eye(a.shape[0], dtype=bool)]
    return a.ravel()


def pair_terms(div, p, q):
    """Elementwise q * f(p / q) with the p = 0 limit q * f(0+)."""
    div = _as_div(div)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = p > 0
    out = np.empty(np.broadcast(p, q).shape)
    pb, qb = np.broadcast_arrays(p, q)
    out[pos] = qb[pos] * f(div, pb[pos] / qb[pos])
    f0 = f_at_zero(div)
    out[~pos] = qb[~pos] * f0 if np.isfinite(f0) else np.inf
    return out


def primal_divergence(div, P, Q) -> float:
    """Sum over off-diagonal pairs of q * f(p / q).

    Returns ``inf`` (with a RuntimeWarning) when some p is zero and the
    divergence has an infinite limit there, as RKL does.
    """
    div = _as_div(div)
    p = _offdiag(P)
    q = _offdiag(Q)
    if p.shape != q.shape:
        raise ValueError("P and Q must have the same shape")
    if np.isnan(p).any() or np.isnan(q).any():
        raise NumericalError("NaN in affinities")
    if np.any(~(q > 0)):
        raise DivergenceDomainError("Q must be strictly positive off the diagonal")
    terms = pair_terms(div, p, q)
    if np.isinf(terms).any():
        n = int(np.isinf(terms).sum())
        warnings.warn(f"{div.name} divergence is infinite: {n} pairs have p = 0", RuntimeWarning, stacklevel=2)
        return float("inf")
    total = float(np.sum(terms))
    if np.isnan(total):
        raise NumericalError(f"{div.name} divergence evaluated to NaN")
    return total


def heatmap_grids(div, p_range=(1e-4, 1e-1), q_range=(1e-4, 1e-1), resolution=100):
    """Loss and d(loss)/dq over a log-spaced (p, q) grid.

    Returns ``(p_values, q_values, loss, grad)``; ``loss[i, j]`` and
    ``grad[i, j]`` belong to ``p_values[i]`` and ``q_values[j]``.
    """
    div = _as_div(div)
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if min(p_range) <= 0 or min(q_range) <= 0:
        raise ValueError("ranges must be positive")
    ps = np.geomspace(p_range[0], p_range[1], resolution)
    qs = np.geomspace(q_range[0], q_range[1], resolution)
    pg, qg = np.meshgrid(ps, qs, indexing="ij")
    t = pg / qg
    ft = f(div, t)
    loss = qg * ft
    grad = ft - t * f_prime(div, t)
    return ps, qs, loss, grad
