import json

import numpy as np
import pytest

from gatsm.datasets import (Dataset, FeatureSpec, ParseError, Sample, SchemaError, SeriesSchema,
                            gen_seasonal, gen_tumor, load_schema, load_series, save_schema,
                            split, split_sizes, write_manifest, write_series)
from gatsm.metrics import r2_score

SCHEMA = SeriesSchema("sid", "t", ["a", "b"], "y")


def write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


class TestLoadSeries:
    def test_two_series(self, tmp_path):
        rows = ["sid,t,a,b,y"]
        for s in ("s1", "s2"):
            for t in range(3):
                rows.append(f"{s},{t},{t},{t * 2},{t + 0.5}")
        ds = load_series(write(tmp_path, "\n".join(rows) + "\n"), SCHEMA)
        assert len(ds) == 2
        assert ds.lengths.tolist() == [3, 3]
        np.testing.assert_array_equal(ds[1].y, [0.5, 1.5, 2.5])

    def test_rows_sorted_by_time(self, tmp_path):
        p = write(tmp_path, "sid,t,a,b,y\nx,2,3,0,1\nx,0,1,0,1\nx,1,2,0,1\n")
        np.testing.assert_array_equal(load_series(p, SCHEMA)[0].x[:, 0], [1, 2, 3])

    def test_empty_cell_flagged_missing(self, tmp_path):
        p = write(tmp_path, "sid,t,a,b,y\nx,0,1,,1\nx,1,2,5,1\n")
        s = load_series(p, SCHEMA)[0]
        assert s.missing[0, 1] and not s.missing[1, 1]
        assert np.isnan(s.x[0, 1])

    def test_variable_lengths(self, tmp_path):
        p = write(tmp_path, "sid,t,a,b,y\nx,0,1,1,1\ny,0,1,1,1\ny,1,1,1,1\n")
        assert load_series(p, SCHEMA).lengths.tolist() == [1, 2]

    def test_parse_error_has_line_number(self, tmp_path):
        p = write(tmp_path, "sid,t,a,b,y\nx,0,1,1,1\nx,1,oops,1,1\n")
        with pytest.raises(ParseError, match="line 3"):
            load_series(p, SCHEMA)

    def test_wrong_field_count(self, tmp_path):
        p = write(tmp_path, "sid,t,a,b,y\nx,0,1,1\n")
        with pytest.raises(ParseError, match="line 2"):
            load_series(p, SCHEMA)

    def test_missing_column(self, tmp_path):
        p = write(tmp_path, "sid,t,a,y\nx,0,1,1\n")
        with pytest.raises(SchemaError):
            load_series(p, SCHEMA)

    def test_per_series_target_must_agree(self, tmp_path):
        p = write(tmp_path, "sid,t,a,b,y\nx,0,1,1,1\nx,1,1,1,0\n")
        with pytest.raises(SchemaError):
            load_series(p, SeriesSchema("sid", "t", ["a", "b"], "y", task="binary",
                                        per_step=False))

    def test_categorical_kept_raw(self, tmp_path):
        p = write(tmp_path, "sid,t,a,b,y\nx,0,red,1,1\nx,1,,2,0\n")
        ds = load_series(p, SeriesSchema("sid", "t", ["a", "b"], "y", task="binary",
                                         categorical=["a"]))
        assert ds.features[0].kind == "categorical"
        assert ds[0].x[0, 0] == "red" and ds[0].missing[1, 0]
        assert ds.n_classes == 2

    def test_round_trip(self, tmp_path):
        original = gen_tumor(4, horizon=6, seed=3)
        schema = write_series(original, tmp_path / "rt.csv")
        back = load_series(tmp_path / "rt.csv", schema)
        assert len(back) == len(original)
        for a, b in zip(original.samples, back.samples):
            np.testing.assert_array_equal(a.x, b.x)
            np.testing.assert_array_equal(a.y, b.y)

    def test_round_trip_missing_and_classes(self, tmp_path):
        x = np.array([[1.0, np.nan], [2.0, 3.0]])
        ds = Dataset([Sample(x=x, y=1, id="a"), Sample(x=x[:1], y=0, id="b")],
                     [FeatureSpec("p"), FeatureSpec("q")], "binary", 2, per_step=False)
        schema = write_series(ds, tmp_path / "c.csv")
        save_schema(schema, tmp_path / "c.json")
        back = load_series(tmp_path / "c.csv", load_schema(tmp_path / "c.json"))
        assert back[0].missing[0, 1] and back[0].y == 1 and back[1].y == 0


class TestSplit:
    def test_sizes(self):
        ds = gen_seasonal(10, seed=0)
        assert [len(p) for p in split(ds, (0.6, 0.2, 0.2), seed=1)] == [6, 2, 2]

    def test_reproducible_and_disjoint(self):
        ds = gen_seasonal(23, seed=0)
        a = split(ds, seed=5)
        b = split(ds, seed=5)
        ids = [[s.id for s in part.samples] for part in a]
        assert ids == [[s.id for s in part.samples] for part in b]
        flat = sum(ids, [])
        assert sorted(flat) == sorted(s.id for s in ds.samples)
        assert len(set(flat)) == len(flat)

    @pytest.mark.parametrize("n", range(3, 40))
    def test_sizes_within_one(self, n):
        sizes = split_sizes(n, (0.6, 0.2, 0.2))
        assert sum(sizes) == n and min(sizes) >= 1
        assert all(abs(s - n * r) <= 1 for s, r in zip(sizes, (0.6, 0.2, 0.2)))

    def test_too_few_series(self):
        with pytest.raises(ValueError):
            split(gen_seasonal(2, seed=0))

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            split_sizes(10, (0.5, 0.2, 0.2))


class TestTumor:
    def test_closed_form_without_doses(self):
        ds = gen_tumor(3, horizon=12, seed=0, noise=0.0, pulse_prob=0.0, growth=0.07)
        for s in ds.samples:
            size0 = s.x[0, 0]
            steps = np.arange(1, 13)
            np.testing.assert_allclose(s.y, size0 * 1.07 ** steps, rtol=1e-12)

    def test_chemo_ten_times_radio(self):
        base = dict(n=1, horizon=1, seed=0, noise=0.0, growth=0.0, pulse_prob=1.0,
                    dose_range=(0.1, 0.1))
        both = gen_tumor(**base)[0]
        only_radio = gen_tumor(**base, chemo_coef=0.0)[0]
        only_chemo = gen_tumor(**base, radio_coef=0.0)[0]
        start = both.x[0, 0]
        assert start - only_chemo.y[0] == pytest.approx(10 * (start - only_radio.y[0]))

    def test_reproducible(self):
        a, b = gen_tumor(5, seed=9), gen_tumor(5, seed=9)
        for s, t in zip(a.samples, b.samples):
            np.testing.assert_array_equal(s.x, t.x)
            np.testing.assert_array_equal(s.y, t.y)

    def test_coefficients_recoverable(self):
        ds = gen_tumor(300, horizon=30, seed=1, noise=0.01)
        X = np.vstack([s.x for s in ds.samples])
        y = np.concatenate([s.y for s in ds.samples])
        ok = y > 0
        design = np.column_stack([X[ok], np.ones(ok.sum())])
        coef = np.linalg.lstsq(design, y[ok], rcond=None)[0]
        chemo, radio = coef[1], coef[2]
        assert chemo < 0 and radio < 0
        assert 10 / 1.5 <= chemo / radio <= 10 * 1.5

    def test_features_and_targets(self):
        ds = gen_tumor(2, horizon=5, seed=0)
        assert ds.feature_names == ["tumor_size", "chemo_dose", "radio_dose"]
        assert ds.per_step and ds[0].y.shape == (5,)
        np.testing.assert_array_equal(ds[0].x[1:, 0], ds[0].y[:-1])


class TestSeasonal:
    def test_lagged_oracle_reaches_one(self):
        ds = gen_seasonal(200, period=5, horizon=20, seed=0, noise=1e-6)
        pred = [s.x[20 - 1 - 5, 0] for s in ds.samples]
        assert r2_score([s.y for s in ds.samples], pred) > 1 - 1e-9

    def test_last_step_uninformative(self):
        ds = gen_seasonal(2000, period=5, seed=0)
        last = np.array([s.x[-1, 0] for s in ds.samples])
        y = np.array([s.y for s in ds.samples])
        assert abs(np.corrcoef(last, y)[0, 1]) < 0.1

    def test_zero_lag_is_current_step(self):
        ds = gen_seasonal(50, period=1, lag=0, seed=0, noise=0.0)
        assert all(s.y == s.x[-1, 0] for s in ds.samples)

    def test_reproducible(self):
        a, b = gen_seasonal(5, seed=2), gen_seasonal(5, seed=2)
        assert [s.y for s in a.samples] == [s.y for s in b.samples]

    def test_invalid(self):
        with pytest.raises(ValueError):
            gen_seasonal(5, period=0)
        with pytest.raises(ValueError):
            gen_seasonal(5, period=20, horizon=20)


def test_manifest(tmp_path):
    write_manifest(tmp_path / "m.json", "tumor", {"n": 3}, 7)
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc == {"generator": "tumor", "seed": 7, "rng": "numpy.random.PCG64",
                   "params": {"n": 3}}
