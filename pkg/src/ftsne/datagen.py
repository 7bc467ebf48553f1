"""Synthetic benchmark datasets with known latent structure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import Dataset

__all__ = ["SyntheticSpec", "swiss_roll", "gaussian_blobs", "generate", "blob_centers"]

T_MIN = 1.5 * np.pi
T_MAX = 4.5 * np.pi
HEIGHT = 21.0


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    m: int
    noise: float = 0.0
    separation: float = 10.0
    std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("swiss_roll", "gaussian_blobs"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.m < 10:
            raise ValueError("m must be >= 10")
        if self.noise < 0 or self.std < 0:
            raise ValueError("noise and std must be non-negative")


def swiss_roll(m: int, noise: float = 0.0, seed: int = 0) -> Dataset:
    """3-D Swiss roll; the label is the unrolled angle t in [1.5 pi, 4.5 pi]."""
    if m < 10:
        raise ValueError("m must be >= 10")
    rng = np.random.default_rng(seed)
    t = rng.uniform(T_MIN, T_MAX, size=m)
    h = rng.uniform(0.0, HEIGHT, size=m)
    pts = np.column_stack([t * np.cos(t), h, t * np.sin(t)])
    if noise > 0:
        pts = pts + rng.normal(0.0, noise, size=pts.shape)
    return Dataset(pts, t)


def blob_centers(separation: float) -> np.ndarray:
    """Vertices of an equilateral triangle with the given side, centred at the origin."""
    radius = separation / np.sqrt(3.0)
    angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def gaussian_blobs(m: int, separation: float = 10.0, std: float = 1.0, seed: int = 0) -> Dataset:
    """Three isotropic 2-D Gaussian clusters; labels are the blob indices 0, 1, 2.

    Blob sizes are m // 3, with the remainder handed out round-robin from blob 0.
    """
    if m < 10:
        raise ValueError("m must be >= 10")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(3), m // 3)
    labels = np.concatenate([labels, np.arange(m % 3)])
    labels.sort(kind="stable")
    pts = blob_centers(separation)[labels] + rng.normal(0.0, std, size=(m, 2))
    return Dataset(pts, labels)


def generate(spec: SyntheticSpec) -> Dataset:
    if spec.kind == "swiss_roll":
        return swiss_roll(spec.m, spec.noise, spec.seed)
    return gaussian_blobs(spec.m, spec.separation, spec.std, spec.seed)
