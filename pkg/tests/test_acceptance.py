"""End-to-end acceptance checks.

Each test records a ``[PASS]``/``[FAIL]`` line with the measured numbers;
the lines are printed in an "acceptance criteria" section at the end of the
pytest run. ``python tests/test_acceptance.py`` runs just this file.
"""

import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ftsne.affinity import conditional_affinities, joint_affinities, latent_affinity, student_conditional
from ftsne.cli import main
from ftsne.datagen import gaussian_blobs, swiss_roll
from ftsne.divergence import f_prime, primal_divergence
from ftsne.metrics import (
    BinaryNeighborhood,
    binary_divergence,
    epsilon_grid,
    knn_kfn_curve,
    pr_curve,
    pr_curve_xy,
    pr_curve_zy,
    proposition1_prediction,
)
from ftsne.primal import OptimizerSchedule, low_dim_affinity, primal_gradient, primal_loss, run_primal
from ftsne.variational import (
    MinimaxConfig,
    init_discriminator,
    run_variational,
    score_pairs,
    variational_bound,
    variational_objective,
)

SEEDS = (0, 1, 2)


def report(ok, label, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _fd_gradient(div, P, y, h=1e-5):
    g = np.zeros_like(y)
    for idx in np.ndindex(y.shape):
        old = y[idx]
        y[idx] = old + h
        up = primal_loss(div, P, y)
        y[idx] = old - h
        down = primal_loss(div, P, y)
        y[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def _random_joint(rng, m):
    a = rng.uniform(0.05, 1.0, size=(m, m))
    a = a + a.T
    np.fill_diagonal(a, 0)
    return a / a.sum()


def test_1_gradient_suite():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = {}
    for div in ("KL", "RKL", "JS", "CH", "HL", "interp:0.05", "interp:0.1", "interp:0.5"):
        errs = []
        for _ in range(20):
            P = _random_joint(rng, 8)
            y = rng.normal(size=(8, 2))
            g = primal_gradient(div, P, y)
            fd = _fd_gradient(div, P, y.copy())
            errs.append(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)))
        worst[div] = max(errs)
    elapsed = time.time() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert report(ok, "1 gradient suite (max rel err < 1e-4, < 1 min)", f"{detail}; {elapsed:.1f}s")


def test_2_duality_suite():
    t0 = time.time()
    rng = np.random.default_rng(7)
    tight = {}
    for div in ("KL", "RKL", "JS", "CH", "HL"):
        err = 0.0
        for _ in range(50):
            m = int(rng.integers(5, 12))
            P = _random_joint(rng, m)
            Q = low_dim_affinity(rng.normal(size=(m, 2))).probs
            off = ~np.eye(m, dtype=bool)
            T = np.zeros((m, m))
            T[off] = f_prime(div, P[off] / Q[off])
            err = max(err, abs(variational_bound(div, P, Q, T) - primal_divergence(div, P, Q)))
        tight[div] = err
    slack = np.inf
    for trial in range(1000):
        div = ("KL", "RKL", "JS", "CH", "HL")[trial % 5]
        m = 8
        P = _random_joint(rng, m)
        y = rng.normal(size=(m, 2))
        x = rng.normal(size=(m, 3))
        disc = init_discriminator(3, (10,), (20,), rng=rng, data=x)
        for w in disc.params:
            w += rng.normal(scale=0.5, size=w.shape)
        gap = primal_divergence(div, P, low_dim_affinity(y).probs) - variational_objective(div, P, y, disc, x)
        slack = min(slack, gap)
    elapsed = time.time() - t0
    ok_a = max(tight.values()) < 1e-9
    ok_b = slack >= -1e-7
    detail = ", ".join(f"{k} {v:.1e}" for k, v in tight.items())
    ok = ok_a and ok_b and elapsed < 120
    assert report(ok, "2 duality suite (tight < 1e-9, bound holds +1e-7, < 2 min)",
                  f"tight witness err {detail}; min primal - bound over 1000 nets {slack:.3e}; {elapsed:.1f}s")


def test_3_binary_neighbourhood():
    ratios = {}
    for div in ("KL", "RKL"):
        ratios[div] = []
        for delta in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9):
            bn = BinaryNeighborhood(1000, 50, 50, 25, delta)
            ratios[div].append(binary_divergence(bn, div) / proposition1_prediction(bn, div))
    at_1e8 = {d: r[5] for d, r in ratios.items()}
    within = all(abs(r - 1) < 0.05 for r in at_1e8.values())
    monotone = all(np.all(np.diff(np.abs(np.array(r) - 1)) < 0) for r in ratios.values())
    sweep = "; ".join(f"{d} " + " ".join(f"{v:.3f}" for v in r) for d, r in ratios.items())
    report(monotone, "3b closed form: ratio -> 1 monotonically as delta 1e-3 -> 1e-9", sweep)
    ok = report(within and monotone, "3 closed form within 5% at delta=1e-8",
                f"exact/prediction KL {at_1e8['KL']:.4f}, RKL {at_1e8['RKL']:.4f}")
    assert ok


def _brute_pr(true_rows, emb_rows, eps, keep):
    precs, recs = [], []
    m = true_rows.shape[0]
    for i in range(m):
        if not keep[i]:
            continue
        nx = {j for j in range(m) if j != i and true_rows[i, j] > eps}
        ny = {j for j in range(m) if j != i and emb_rows[i, j] > eps}
        precs.append(len(nx & ny) / len(ny) if ny else 1.0)
        recs.append(len(nx & ny) / len(nx) if nx else 1.0)
    return np.mean(precs), np.mean(recs)


def _brute_knn(x, y, K, farthest):
    m = len(x)
    hits = 0
    for i in range(m):
        def top(pts):
            d = sorted(((float(np.sum((pts[i] - pts[j]) ** 2)), j) for j in range(m) if j != i),
                       key=lambda t: (-t[0] if farthest else t[0], t[1]))
            return {j for _, j in d[:K]}
        hits += len(top(x) & top(y))
    return hits / (m * K)


def test_6_metric_oracles():
    t0 = time.time()
    rng = np.random.default_rng(606)
    mismatches = 0
    for _ in range(50):
        m = int(rng.integers(6, 31))
        x = rng.normal(size=(m, 3))
        y = rng.normal(size=(m, 2))
        labels = rng.integers(0, 4, size=m)
        p = conditional_affinities(x, min(5.0, m / 3))
        q = student_conditional(y)
        r = latent_affinity(labels, "discrete")
        grid = epsilon_grid(p, q, n=15)
        xy = pr_curve_xy(p, q, grid)
        zy = pr_curve_zy(r, q, grid)
        for k, eps in enumerate(grid):
            bp, br = _brute_pr(p.rows, q.rows, eps, np.ones(m, dtype=bool))
            mismatches += (xy.precision[k] != bp) + (xy.recall[k] != br)
            if not r.flagged.all():
                bp, br = _brute_pr(r.rows, q.rows, eps, ~r.flagged)
                mismatches += (zy.precision[k] != bp) + (zy.recall[k] != br)
        ks = np.arange(1, m)
        kk = knn_kfn_curve(x, y, ks)
        for idx, K in enumerate(ks):
            mismatches += (kk.precision[idx] != _brute_knn(x, y, K, False))
            mismatches += (kk.recall[idx] != _brute_knn(x, y, K, True))
    elapsed = time.time() - t0
    ok = mismatches == 0 and elapsed < 60
    assert report(ok, "6 metric oracles (exact equality, 50 instances, < 1 min)",
                  f"{mismatches} mismatches; {elapsed:.1f}s")


def test_7_invariances(tmp_path):
    rng = np.random.default_rng(77)
    checks = {}
    P = _random_joint(rng, 12)
    y = rng.normal(size=(12, 2))
    theta = 0.7
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    base = {div: primal_loss(div, P, y) for div in ("KL", "RKL", "JS", "CH", "HL")}
    checks["loss translation/rotation"] = max(
        max(abs(primal_loss(d, P, y + np.array([3.0, -5.0])) - v), abs(primal_loss(d, P, y @ rot.T) - v))
        for d, v in base.items())
    checks["gradient zero-sum"] = max(np.abs(primal_gradient(d, P, y).sum(axis=0)).max() for d in base)
    x = rng.normal(size=(40, 5))
    checks["affinity scale"] = np.abs(joint_affinities(x, 8.0).probs - joint_affinities(7.3 * x, 8.0).probs).max()
    disc = init_discriminator(5, (10,), (20,), seed=3, data=x)
    s = score_pairs(disc, x)
    sym = bool(np.array_equal(s, s.T))

    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        assert main(["gen", "--kind", "gaussian_blobs", "--m", "60", "--seed", "4", "-o", str(d / "data.csv")]) == 0
        assert main(["embed", "--input", str(d / "data.csv"), "--output", str(d / "emb.csv"),
                     "--trace", str(d / "trace.csv"), "--perplexity", "10", "--epochs", "50", "--seed", "4"]) == 0
        outputs.append([(d / f).read_bytes() for f in ("data.csv", "emb.csv", "trace.csv")])
    same = outputs[0] == outputs[1]

    limits = {"loss translation/rotation": 1e-10, "gradient zero-sum": 1e-9, "affinity scale": 1e-8}
    ok = all(checks[k] < limits[k] for k in limits) and sym and same
    detail = ", ".join(f"{k} {v:.1e}" for k, v in checks.items())
    assert report(ok, "7 invariances", f"{detail}; discriminator symmetric {sym}; seeded CLI rerun identical {same}")


def _max_f(ref, coords):
    q = student_conditional(coords)
    return pr_curve(ref, q, epsilon_grid(ref, q)).max_fscore


@pytest.mark.slow
def test_4_structure_vs_divergence():
    t0 = time.time()
    blob_scores = {"KL": [], "RKL": []}
    for seed in SEEDS:
        data = gaussian_blobs(300, separation=10, std=1, seed=seed)
        P = joint_affinities(data, 100.0)
        ref = latent_affinity(data.labels, "discrete")
        for div in blob_scores:
            res = run_primal(div, P, OptimizerSchedule(epochs=1000, seed=seed), trace_every=1000)
            blob_scores[div].append(_max_f(ref, res.embedding.coords))
    swiss_scores = {"KL": [], "RKL": []}
    for seed in SEEDS:
        data = swiss_roll(1000, seed=seed)
        cond = conditional_affinities(data, 10.0)
        P = joint_affinities(data, 10.0)
        for div in swiss_scores:
            res = run_primal(div, P, OptimizerSchedule(epochs=1000, seed=seed), trace_every=1000)
            swiss_scores[div].append(_max_f(cond, res.embedding.coords))
    elapsed = time.time() - t0
    med = lambda v: float(np.median(v))
    ok_blobs = med(blob_scores["KL"]) >= med(blob_scores["RKL"])
    ok_swiss = med(swiss_scores["RKL"]) >= med(swiss_scores["KL"])
    fmt = lambda s: ", ".join(f"{k} {med(v):.4f} {np.round(v, 4).tolist()}" for k, v in s.items())
    report(ok_blobs, "4a blobs: median max F_Z of KL >= RKL", fmt(blob_scores))
    report(ok_swiss, "4b swiss roll: median max F_X of RKL >= KL", fmt(swiss_scores))
    ok = report(ok_blobs and ok_swiss and elapsed < 900, "4 structure vs divergence (< 15 min)",
                f"{elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_5_variational_vs_primal():
    t0 = time.time()
    rows = []
    for seed in SEEDS:
        data = gaussian_blobs(300, seed=seed)
        P = joint_affinities(data, 10.0)
        schedule = OptimizerSchedule(epochs=5000, seed=seed)
        primal = run_primal("KL", P, schedule, trace_every=5000).final_loss
        # disc_lr 0.1: best of the swept 0.01 / 0.03 / 0.1 / 0.3
        cfg = MinimaxConfig(j_steps=10, k_steps=10, rounds=500, disc_lr=0.1, emb_schedule=schedule)
        var = run_variational("KL", P, data, cfg, trace_every=500).final_loss
        rows.append((seed, primal, var, var <= 1.1 * primal))
    elapsed = time.time() - t0
    wins = sum(r[3] for r in rows)
    detail = "; ".join(f"seed {s}: primal {p:.4f} variational {v:.4f}" for s, p, v, _ in rows)
    ok = report(wins >= 2 and elapsed < 1200, "5 variational within 10% of primal in >= 2/3 seeds (< 20 min)",
                f"{detail}; {wins}/3; {elapsed:.0f}s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider", *sys.argv[1:]]))
