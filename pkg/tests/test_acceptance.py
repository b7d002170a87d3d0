"""Acceptance gate: ten criteria at their stated tolerances.

Each test records a PASS/FAIL line shown in the terminal summary. The
training criteria are marked ``slow`` (a few minutes on one core).
"""
import itertools
import time

import numpy as np
import pytest

from gatsm.datasets import Dataset, FeatureSpec, Sample, gen_seasonal, gen_tumor, split
from gatsm.gradcheck import grad_check
from gatsm.interpret import global_curve, local_time_dependent, time_step_importance
from gatsm.metrics import accuracy, auroc, r2_score
from gatsm.model import ModelConfig, build_variant
from gatsm.persistence import ChecksumError, TruncatedArchiveError, from_bytes, to_bytes
from gatsm.preprocessing import Preprocessor
from gatsm.training import TrainConfig, evaluate, loss_value, train

from conftest import record_criterion, random_model

SMALL = dict(hidden=(32, 32), n_basis=16, attn_heads=4)


def prepared_splits(ds, seed):
    tr, va, te = split(ds, seed=seed)
    pp = Preprocessor.fit(tr)
    return pp, tr, pp.transform(tr), pp.transform(va), pp.transform(te)


def fit(ds, seed, variant="full", feature="nbm", attn_hidden=32, lr=5e-3, patience=10,
        max_epochs=200):
    pp, raw_tr, tr, va, te = prepared_splits(ds, seed)
    cfg = ModelConfig(feature_variant=feature, attn_hidden=attn_hidden, **SMALL)
    m = build_variant(ds.n_features, variant, config=cfg, seed=seed)
    m.preprocessor = pp
    res = train(m, tr, va, TrainConfig(batch_size=32, learning_rate=lr, patience=patience,
                                       max_epochs=max_epochs, seed=seed))
    return evaluate(m, te), res


def test_criterion_01_gradients():
    start = time.perf_counter()
    cfg = ModelConfig(hidden=(8, 8), n_basis=5, attn_hidden=6, attn_heads=2)
    m = build_variant(3, "full", config=cfg, seed=0)
    r = np.random.default_rng(0)
    X, y = r.normal(size=(2, 4, 3)), r.normal(size=(2, 4))
    lengths = np.array([4, 3])
    f = lambda: loss_value(m.forward(X, lengths), y, lengths, True, "mse")
    errors = dict(zip(m.named_parameters(), grad_check(f, m.parameters(), step=1e-5,
                                                       per_param=True)))
    worst = max(errors.values())
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 30
    record_criterion(1, "gradient check", ok, f"max rel err {worst:.2e} over "
                     f"{len(errors)} blocks in {elapsed:.1f}s")
    assert ok, errors


def test_criterion_02_decomposition():
    start = time.perf_counter()
    r = np.random.default_rng(1)
    worst = 0.0
    for i in range(100):
        variant = ("full", "base", "base+mha", "base+pe")[i % 4]
        feature = ("nbm", "nam", "linear")[i % 3]
        task, C = [("regression", None), ("multiclass", 3)][i % 2]
        m = random_model(variant=variant, feature_variant=feature, task=task, n_classes=C,
                         seed=i)
        T = int(r.integers(1, 10))
        x = r.normal(size=(T, 3)) * 2
        t = int(r.integers(1, T + 1))
        parts = m.decompose(x, t=t)
        score = m.predict(x)[t - 1]
        rel = np.abs(parts.sum(axis=(0, 1)) - score) / np.maximum(1.0, np.abs(score))
        worst = max(worst, rel.max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10
    record_criterion(2, "decomposition faithfulness", ok,
                     f"max rel err {worst:.2e} over 100 models in {elapsed:.1f}s")
    assert ok


def test_criterion_03_causality():
    r = np.random.default_rng(2)
    changed = 0
    for i in range(100):
        m = random_model(seed=i, attn_heads=int(r.integers(1, 4)))
        T = int(r.integers(2, 10))
        x = r.normal(size=(T, 3))
        t = int(r.integers(1, T))
        u = int(r.integers(t + 1, T + 1))
        y = x.copy()
        y[u - 1] += r.normal(size=3) * 10
        changed += int(np.any(m.predict(x)[:t] != m.predict(y)[:t]))
    ok = changed == 0
    record_criterion(3, "causality", ok, f"{changed}/100 trials changed an earlier score")
    assert ok


def test_criterion_04_attention_rows():
    r = np.random.default_rng(3)
    worst, leaked = 0.0, 0
    for i in range(50):
        m = random_model(seed=i, attn_heads=3)
        N, T = 4, int(r.integers(1, 9))
        lengths = r.integers(1, T + 1, N)
        a = m.attention(r.normal(size=(N, T, 3)), lengths)
        for n, L in enumerate(lengths):
            keep = np.tril(np.ones((T, T), bool))
            keep[L:] = False
            keep[:, L:] = False
            worst = max(worst, np.abs(a[n][:, :L, :].sum(-1) - 1).max())
            leaked += int(np.count_nonzero(a[n][:, ~keep]))
    ok = worst <= 1e-9 and leaked == 0
    record_criterion(4, "attention normalization", ok,
                     f"max |row sum - 1| {worst:.1e}, {leaked} nonzero masked entries")
    assert ok


@pytest.mark.slow
def test_criterion_05_tumor_regression():
    start = time.perf_counter()
    metrics, res = fit(gen_tumor(500, horizon=30, noise=0.01, seed=0), seed=0)
    elapsed = time.perf_counter() - start
    ok = metrics.r2 >= 0.85 and elapsed < 300
    record_criterion(5, "tumor regression", ok, f"test R2 {metrics.r2:.4f} after "
                     f"{res.epochs_run} epochs in {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_06_temporal_ablation():
    start = time.perf_counter()
    scores = {"full": [], "base": []}
    for seed in range(3):
        ds = gen_seasonal(1000, period=5, horizon=20, noise=0.05, seed=seed)
        for variant in scores:
            metrics, _ = fit(ds, seed, variant=variant, attn_hidden=64, lr=1e-2, patience=15,
                             max_epochs=150)
            scores[variant].append(metrics.r2)
    full, base = np.mean(scores["full"]), np.mean(scores["base"])
    elapsed = time.perf_counter() - start
    ok = full - base >= 0.3 and base < 0.1 and elapsed < 600
    record_criterion(6, "temporal ablation", ok, f"mean R2 full {full:.4f}, base {base:.4f} "
                     f"in {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_07_feature_ablation():
    rows = []
    for seed in range(3):
        ds = gen_tumor(500, horizon=30, noise=0.01, seed=seed)
        r2 = {}
        for feature in ("linear", "nam", "nbm"):
            metrics, res = fit(ds, seed, feature=feature, max_epochs=1000)
            # convergence: early stopping fired before the epoch cap
            assert np.isfinite(metrics.r2) and res.epochs_run < 1000, (feature, res.epochs_run)
            r2[feature] = metrics.r2
        rows.append(r2)
    wins = sum(r["nbm"] >= r["linear"] for r in rows)
    ok = wins == 3
    detail = "; ".join(" ".join(f"{k} {v:.4f}" for k, v in r.items()) for r in rows)
    record_criterion(7, "feature-function ablation", ok, f"NBM >= Linear on {wins}/3 ({detail})")
    assert ok


def test_criterion_08_oracles():
    r = np.random.default_rng(8)
    worst = 0.0
    for _ in range(50):
        n = int(r.integers(2, 101))
        y = r.integers(0, 2, n)
        y[:2] = (0, 1)
        s = np.round(r.normal(size=n), 1)
        pos, neg = s[y == 1], s[y == 0]
        pairs = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in itertools.product(pos, neg))
        worst = max(worst, abs(auroc(y, s) - pairs / (len(pos) * len(neg))))
        t, p = r.normal(size=n), r.normal(size=n)
        mean = sum(t) / n
        r2 = 1 - sum((a - b) ** 2 for a, b in zip(t, p)) / sum((a - mean) ** 2 for a in t)
        worst = max(worst, abs(r2_score(t, p) - r2))
        c, d = r.integers(0, 3, n), r.integers(0, 3, n)
        worst = max(worst, abs(accuracy(c, d) - sum(int(a == b) for a, b in zip(c, d)) / n))
        x = r.normal(size=n) * 3 + 1
        ds = Dataset([Sample(x=x[:, None], y=np.zeros(n))], [FeatureSpec("a")], per_step=True)
        z = Preprocessor.fit(ds).transform(ds)[0].x[:, 0]
        mu = sum(x) / n
        sd = (sum((v - mu) ** 2 for v in x) / n) ** 0.5
        worst = max(worst, max(abs(a - (v - mu) / sd) for a, v in zip(z, x)))
    ok = worst <= 1e-9
    record_criterion(8, "preprocessor and metric oracles", ok, f"max abs err {worst:.1e}")
    assert ok


def test_criterion_09_persistence():
    r = np.random.default_rng(9)
    m = random_model(seed=9, nbm_batch_norm=True)
    buf = to_bytes(m)
    back, _ = from_bytes(buf)
    identical = sum(np.array_equal(m.predict(x), back.predict(x))
                    for x in (r.normal(size=(int(r.integers(1, 9)), 3)) for _ in range(10)))
    rejected = 0
    for pos in (20, len(buf) // 2, len(buf) - 1):
        bad = bytearray(buf)
        bad[pos] ^= 0xFF
        try:
            from_bytes(bytes(bad))
        except ChecksumError:
            rejected += 1
    try:
        from_bytes(buf[:-5])
    except TruncatedArchiveError:
        rejected += 1
    ok = identical == 10 and rejected == 4
    record_criterion(9, "persistence", ok, f"{identical}/10 bit-identical, {rejected}/4 "
                     "damaged archives rejected")
    assert ok


def test_criterion_10_interpretation():
    r = np.random.default_rng(10)
    imp_err = td_err = 0.0
    for i in range(20):
        m = random_model(seed=i, attn_heads=3)
        lengths = r.integers(1, 8, 5)
        ds = Dataset([Sample(x=r.normal(size=(L, 3)), y=np.zeros(L)) for L in lengths],
                     [FeatureSpec(c) for c in "abc"], per_step=True, preprocessed=True)
        for t in range(1, lengths.max() + 1):
            imp_err = max(imp_err, abs(time_step_importance(m, ds, t).values.sum() - m.heads))
        x = ds.samples[int(np.argmax(lengths))].x
        a = m.attention(x)
        ti = m.time_independent(x, per_head=True)[..., 0]
        for t in range(1, len(x) + 1):
            expected = np.einsum("ku,kum->um", a[:, t - 1, :t], ti[:, :t])
            td_err = max(td_err, np.abs(local_time_dependent(m, x, t) - expected).max())
    ds = gen_tumor(20, horizon=6, seed=0)
    lin = random_model(feature_variant="linear")
    lin.preprocessor = Preprocessor.fit(ds)
    curvature = max(np.abs(np.diff(global_curve(lin, j, ds).contribution, 2)).max()
                    for j in range(3))
    ok = imp_err <= 1e-9 and td_err <= 1e-9 and curvature < 1e-9
    record_criterion(10, "interpretation consistency", ok,
                     f"importance-K {imp_err:.1e}, TD vs weighted TI {td_err:.1e}, "
                     f"linear curve 2nd diff {curvature:.1e}")
    assert ok
