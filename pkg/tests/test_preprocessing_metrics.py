import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gatsm.datasets import Dataset, FeatureSpec, Sample
from gatsm.metrics import UndefinedMetricError, accuracy, auroc, r2_score
from gatsm.preprocessing import Preprocessor


def numeric_dataset(columns, task="regression", y=None):
    x = np.array(columns, dtype=np.float64).T
    y = np.zeros(len(x)) if y is None else y
    return Dataset([Sample(x=x, y=np.asarray(y, dtype=np.float64))],
                   [FeatureSpec(f"f{i}") for i in range(x.shape[1])], task, per_step=True)


def all_pairs_auroc(labels, scores):
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == 0]
    total = 0.0
    for p, n in itertools.product(pos, neg):
        total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


class TestPreprocessor:
    def test_population_standardization(self):
        ds = numeric_dataset([[1.0, 2.0, 3.0]])
        out = Preprocessor.fit(ds).transform(ds)[0].x[:, 0]
        sd = math.sqrt(2.0 / 3.0)
        expected = [(v - 2.0) / sd for v in (1.0, 2.0, 3.0)]
        np.testing.assert_allclose(out, expected, atol=1e-15)
        np.testing.assert_allclose(out, [-1.2247, 0.0, 1.2247], atol=5e-5)

    def test_constant_feature(self):
        ds = numeric_dataset([[4.0, 4.0, 4.0]])
        pp = Preprocessor.fit(ds)
        assert pp.std[0] == 1.0
        np.testing.assert_array_equal(pp.transform(ds)[0].x[:, 0], 0.0)

    def test_missing_numeric_imputed_to_mean(self):
        ds = numeric_dataset([[1.0, np.nan, 3.0]])
        pp = Preprocessor.fit(ds)
        assert pp.mean[0] == 2.0
        assert pp.transform(ds)[0].x[1, 0] == 0.0

    def test_pooled_over_steps_and_series(self, rng):
        a, b = rng.normal(size=(4, 2)), rng.normal(size=(7, 2))
        ds = Dataset([Sample(x=a, y=np.zeros(4)), Sample(x=b, y=np.zeros(7))],
                     [FeatureSpec("p"), FeatureSpec("q")], per_step=True)
        out = Preprocessor.fit(ds).transform(ds)
        pooled = np.vstack([s.x for s in out.samples])
        np.testing.assert_allclose(pooled.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(pooled.std(axis=0), 1.0, atol=1e-12)

    def test_regression_target_standardized(self):
        ds = numeric_dataset([[1.0, 2.0, 3.0]], y=[10.0, 20.0, 30.0])
        pp = Preprocessor.fit(ds)
        y = pp.transform(ds)[0].y
        np.testing.assert_allclose(y.mean(), 0.0, atol=1e-12)
        np.testing.assert_allclose(pp.unscale_target(y), [10.0, 20.0, 30.0])

    def test_categorical_ordinal_mode_and_unseen(self):
        x = np.array([["b"], ["a"], ["b"], [None]], dtype=object)
        train = Dataset([Sample(x=x, y=np.zeros(4))], [FeatureSpec("c", "categorical")],
                        per_step=True)
        pp = Preprocessor.fit(train)
        assert pp.categories[0] == ["a", "b"]
        assert pp.impute[0] == 1.0                   # mode "b"
        codes = np.array([1, 0, 1], dtype=float)
        z_b = (1.0 - codes.mean()) / codes.std()
        assert pp.transform(train)[0].x[3, 0] == pytest.approx(z_b)
        test = Dataset([Sample(x=np.array([["zzz"]], dtype=object), y=np.zeros(1))],
                       train.features, per_step=True)
        with pytest.warns(UserWarning, match="unseen"):
            out = pp.transform(test)
        assert out[0].x[0, 0] == pytest.approx(z_b)

    def test_empty_split(self):
        with pytest.raises(ValueError):
            Preprocessor.fit(Dataset([], [FeatureSpec("a")]))

    def test_dict_round_trip(self, rng):
        ds = numeric_dataset([rng.normal(size=5), rng.normal(size=5)], y=rng.normal(size=5))
        pp = Preprocessor.fit(ds)
        back = Preprocessor.from_dict(pp.to_dict())
        np.testing.assert_array_equal(back.transform(ds)[0].x, pp.transform(ds)[0].x)


class TestMetrics:
    def test_r2_perfect_and_mean(self, rng):
        y = rng.normal(size=20)
        assert r2_score(y, y) == 1.0
        assert r2_score(y, np.full(20, y.mean())) == pytest.approx(0.0, abs=1e-15)

    def test_r2_constant_target(self):
        with pytest.raises(UndefinedMetricError):
            r2_score([1.0, 1.0], [1.0, 2.0])

    def test_auroc_perfect(self):
        assert auroc([1, 1, 0, 0], [0.9, 0.8, 0.3, 0.1]) == 1.0

    def test_auroc_single_class(self):
        with pytest.raises(UndefinedMetricError):
            auroc([1, 1], [0.2, 0.4])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 100), st.integers(0, 2**31), st.booleans())
    def test_auroc_all_pairs_oracle(self, n, seed, coarse):
        r = np.random.default_rng(seed)
        labels = r.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        scores = r.integers(0, 4, n).astype(float) if coarse else r.normal(size=n)
        assert abs(auroc(labels, scores) - all_pairs_auroc(labels, scores)) <= 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 100), st.integers(0, 2**31))
    def test_r2_oracle(self, n, seed):
        r = np.random.default_rng(seed)
        y, p = r.normal(size=n), r.normal(size=n)
        mean = sum(y) / n
        ss_res = sum((a - b) ** 2 for a, b in zip(y, p))
        ss_tot = sum((a - mean) ** 2 for a in y)
        assert abs(r2_score(y, p) - (1 - ss_res / ss_tot)) <= 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 100), st.integers(0, 2**31))
    def test_accuracy_oracle(self, n, seed):
        r = np.random.default_rng(seed)
        y, p = r.integers(0, 3, n), r.integers(0, 3, n)
        hits = sum(1 for a, b in zip(y, p) if a == b)
        assert abs(accuracy(y, p) - hits / n) <= 1e-12
        assert 0.0 <= accuracy(y, p) <= 1.0
