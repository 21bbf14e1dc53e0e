import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tcrisk.timeseries import (
    LossSeries,
    PriceSeries,
    ljung_box,
    load_prices,
    sample_acf,
    to_losses,
)


class TestPriceSeries:
    def test_rejects_short(self):
        with pytest.raises(ValueError):
            PriceSeries(np.array([100.0]))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="position 1"):
            PriceSeries(np.array([100.0, -3.0, 101.0]))

    def test_synthesizes_dates(self):
        p = PriceSeries(np.array([100.0, 101.0, 102.0]))
        assert p.dates == (0, 1, 2)

    def test_numeric_dates_must_increase(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            PriceSeries(np.array([100.0, 101.0]), dates=(5, 5))


class TestToLosses:
    def test_flat_price_gives_zero(self):
        assert to_losses(PriceSeries(np.array([100.0, 100.0]))).losses[0] == 0.0

    def test_rise_gives_negative_loss(self):
        # scalar logarithm oracle: -ln(110/100)
        loss = to_losses(PriceSeries(np.array([100.0, 110.0]))).losses[0]
        assert loss == pytest.approx(-0.09531017980432493, abs=1e-15)

    def test_drop_gives_positive_loss(self):
        # price e^{-0.1} * 100, so the loss is +0.1 exactly up to round-off
        loss = to_losses(PriceSeries(np.array([100.0, 90.48374180359595]))).losses[0]
        assert loss == pytest.approx(0.1, abs=1e-12)

    def test_length(self):
        p = PriceSeries(np.exp(np.random.default_rng(0).normal(4.6, 0.01, 50)))
        assert len(to_losses(p)) == 49

    def test_roundtrip_reconstructs_prices(self):
        rng = np.random.default_rng(1)
        prices = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.01, 400)))
        p = PriceSeries(prices)
        losses = to_losses(p).losses
        rebuilt = prices[0] * np.exp(-np.cumsum(losses))
        assert np.max(np.abs(rebuilt - prices[1:]) / prices[1:]) < 1e-12


class TestLoadPrices:
    def test_two_row_file(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("d,p\n1,100\n2,110\n")
        series = load_prices(f, column="p", date_column="d")
        assert np.allclose(series.prices, [100.0, 110.0])
        assert series.dates == ("1", "2")

    def test_nonpositive_price_names_row(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("d,p\n1,100\n2,-5\n3,101\n")
        with pytest.raises(ValueError, match="row 3"):
            load_prices(f, column="p")

    def test_missing_price_names_row(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("d,p\n1,100\n2,\n3,101\n")
        with pytest.raises(ValueError, match="row 3"):
            load_prices(f, column="p")

    def test_row_count_matches_line_count(self, tmp_path):
        # independent oracle: the number of data lines written
        rng = np.random.default_rng(7)
        n = 7459
        f = tmp_path / "big.csv"
        lines = ["date,close"]
        lines += [f"{i},{100*np.exp(rng.normal(0, 0.01)):.6f}" for i in range(n)]
        f.write_text("\n".join(lines) + "\n")
        n_lines = sum(1 for line in f.read_text().splitlines() if line.strip()) - 1
        series = load_prices(f, column="close")
        assert len(series) == n_lines == n

    def test_headerless_index_column(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("100\n101\n99\n")
        series = load_prices(f, column=0)
        assert len(series) == 3

    def test_custom_delimiter(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("d;p\n1;100\n2;110\n")
        series = load_prices(f, column="p", delimiter=";")
        assert np.allclose(series.prices, [100.0, 110.0])

    def test_single_row_is_error(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("d,p\n1,100\n")
        with pytest.raises(ValueError, match="fewer than 2"):
            load_prices(f, column="p")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ValueError, match="cannot read"):
            load_prices(tmp_path / "missing.csv", column=0)

    def test_no_such_column(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("d,p\n1,100\n2,110\n")
        with pytest.raises(ValueError, match="no column"):
            load_prices(f, column="close")


class TestSampleAcf:
    def test_lag_zero_is_one(self):
        x = np.random.default_rng(2).normal(size=100)
        assert sample_acf(x, 5)[0] == 1.0

    def test_alternating_series_negative_lag1(self):
        x = np.tile([1.0, -1.0], 8)
        assert sample_acf(x, 1)[1] < 0.0

    def test_white_noise_band(self):
        # Monte Carlo white-noise band: |acf| < 3/sqrt(n) at lags 1..20
        n = 100_000
        z = np.random.Generator(np.random.Philox(key=31)).standard_normal(n)
        acf = sample_acf(z, 20)
        assert np.all(np.abs(acf[1:]) < 3.0 / np.sqrt(n))

    def test_constant_series_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            sample_acf(np.ones(50), 3)

    def test_requires_enough_data(self):
        with pytest.raises(ValueError):
            sample_acf(np.arange(5.0), 10)

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(
            np.float64,
            st.integers(min_value=12, max_value=60),
            elements=st.floats(-1e3, 1e3, allow_nan=False),
        )
    )
    def test_acf_bounded(self, x):
        if np.ptp(x) == 0.0:
            return
        acf = sample_acf(x, 8)
        assert np.all(acf >= -1.0 - 1e-12) and np.all(acf <= 1.0 + 1e-12)


class TestLjungBox:
    def test_zero_acf_series(self):
        # two opposite impulses 6 apart: lag 1..5 autocovariances vanish exactly
        x = np.zeros(12)
        x[0], x[6] = 1.0, -1.0
        q, p = ljung_box(x, 5)
        assert q == 0.0
        assert p == 1.0

    def test_p_decreases_with_q(self):
        # AR(1) with growing persistence drives Q up and p down
        rng = np.random.default_rng(5)
        shocks = rng.normal(size=2000)
        results = []
        for phi in (0.0, 0.05, 0.15, 0.4):
            x = np.empty_like(shocks)
            x[0] = shocks[0]
            for t in range(1, len(shocks)):
                x[t] = phi * x[t - 1] + shocks[t]
            results.append(ljung_box(x, 5))
        qs = [r[0] for r in results]
        ps = [r[1] for r in results]
        assert qs == sorted(qs)
        assert ps == sorted(ps, reverse=True)

    def test_p_in_unit_interval(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            _, p = ljung_box(rng.normal(size=300), 10)
            assert 0.0 <= p <= 1.0

    def test_null_distribution_uniform(self):
        # p-values over repeated white-noise draws are close to uniform:
        # Kolmogorov-Smirnov distance below 0.12 at 200 replicates
        pvals = []
        for seed in range(200):
            z = np.random.Generator(np.random.Philox(key=500 + seed)).standard_normal(10_000)
            pvals.append(ljung_box(z, 20)[1])
        pvals = np.sort(pvals)
        n = len(pvals)
        hi = np.arange(1, n + 1) / n - pvals
        lo = pvals - np.arange(0, n) / n
        ks = max(hi.max(), lo.max())
        assert ks < 0.12

    def test_bad_lag(self):
        with pytest.raises(ValueError):
            ljung_box(np.arange(30.0), 0)
