import numpy as np
import pytest

from ftsne.datagen import SyntheticSpec, blob_centers, gaussian_blobs, generate, swiss_roll


def test_swiss_roll_on_surface():
    data = swiss_roll(500, noise=0.0, seed=3)
    t = data.labels
    x, h, z = data.points.T
    assert np.max(np.abs(x - t * np.cos(t))) < 1e-12
    assert np.max(np.abs(z - t * np.sin(t))) < 1e-12
    assert np.all((h >= 0) & (h <= 21))


def test_swiss_roll_covers_range():
    t = swiss_roll(2000, seed=0).labels
    span = 3 * np.pi
    assert t.min() <= 1.5 * np.pi + 0.01 * span
    assert t.max() >= 4.5 * np.pi - 0.01 * span
    assert t.min() >= 1.5 * np.pi and t.max() <= 4.5 * np.pi


def test_swiss_roll_noise_and_determinism():
    a = swiss_roll(100, noise=0.5, seed=1)
    b = swiss_roll(100, noise=0.5, seed=1)
    assert np.array_equal(a.points, b.points)
    clean = swiss_roll(100, seed=1)
    assert not np.array_equal(a.points, clean.points)
    assert np.array_equal(a.labels, clean.labels)


def test_blob_centers_equilateral():
    c = blob_centers(10.0)
    d = np.linalg.norm(c[:, None] - c[None], axis=-1)
    np.testing.assert_allclose(d[~np.eye(3, dtype=bool)], 10.0)
    np.testing.assert_allclose(c.mean(axis=0), 0.0, atol=1e-12)


def test_blobs_zero_std_sit_on_centers():
    data = gaussian_blobs(30, std=0.0)
    np.testing.assert_array_equal(data.points, blob_centers(10.0)[data.labels])


def test_blobs_sizes():
    data = gaussian_blobs(301, seed=2)
    counts = np.bincount(data.labels)
    assert counts.tolist() == [101, 100, 100]
    assert np.all(np.diff(data.labels) >= 0)


def test_blobs_recoverable_by_nearest_center():
    data = gaussian_blobs(300, separation=10, std=1, seed=0)
    c = blob_centers(10)
    nearest = np.argmin(np.linalg.norm(data.points[:, None] - c[None], axis=-1), axis=1)
    assert np.mean(nearest == data.labels) >= 0.99


def test_blobs_deterministic():
    assert np.array_equal(gaussian_blobs(60, seed=5).points, gaussian_blobs(60, seed=5).points)


def test_spec_validation_and_dispatch():
    with pytest.raises(ValueError):
        SyntheticSpec("moons", 100)
    with pytest.raises(ValueError):
        SyntheticSpec("swiss_roll", 5)
    with pytest.raises(ValueError):
        SyntheticSpec("swiss_roll", 100, noise=-1)
    assert generate(SyntheticSpec("swiss_roll", 50, seed=2)).dim == 3
    assert generate(SyntheticSpec("gaussian_blobs", 50, seed=2)).dim == 2
