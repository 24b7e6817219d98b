"""Histogram equalization and masked quantile matching."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from sklearn.exceptions import NotFittedError

from groundroll.equalize import (
    HistogramEqualizer,
    TransferMap,
    apply_equalization,
    fit_equalization,
    masked_equalize,
)
from groundroll.gathers import GroundRollMask, ShotGather


def gaussian_gather(seed=0, shape=(40, 500), scale=1.0, gather_id=0):
    rng = np.random.default_rng(seed)
    return ShotGather(
        gather_id=gather_id,
        dt_s=0.002,
        offsets_m=10.0 * (1 + np.arange(shape[0])),
        data=rng.normal(scale=scale, size=shape),
    )


class TestTransferMap:
    def test_fit_produces_uniform_output(self):
        g = gaussian_gather(seed=1)
        tmap = fit_equalization([g])
        out = tmap.apply(g.data)
        assert out.min() >= 0.0 and out.max() <= 1.0
        d, _ = stats.kstest(out.ravel(), "uniform")
        assert d < 0.01

    def test_monotone(self):
        tmap = fit_equalization([gaussian_gather(seed=2)])
        x = np.linspace(-4, 4, 1000)
        y = tmap.apply(x)
        assert (np.diff(y) >= 0).all()

    def test_clamps_outside_range(self):
        tmap = fit_equalization([gaussian_gather(seed=3)])
        assert tmap.apply(np.array([1e9]))[0] == tmap.quantiles[-1]
        assert tmap.apply(np.array([-1e9]))[0] == tmap.quantiles[0]

    def test_invert_roundtrip(self):
        g = gaussian_gather(seed=4)
        tmap = fit_equalization([g])
        x = g.data.ravel()[:2000]
        back = tmap.invert(tmap.apply(x))
        # interpolation through the tabulated CDF is approximate but tight
        assert np.abs(back - x).max() < 0.02

    def test_json_roundtrip(self):
        tmap = fit_equalization([gaussian_gather(seed=5)], n_breakpoints=64)
        back = TransferMap.from_json(tmap.to_json())
        assert np.array_equal(back.values, tmap.values)
        assert np.array_equal(back.quantiles, tmap.quantiles)

    def test_breakpoint_budget(self):
        tmap = fit_equalization([gaussian_gather(seed=6)], n_breakpoints=128)
        assert tmap.n_breakpoints <= 129  # budget plus a possible leading point

    def test_constant_data_rejected(self):
        g = ShotGather(0, 0.002, np.array([10.0, 20.0]), np.zeros((2, 50)))
        with pytest.raises(ValueError, match="constant"):
            fit_equalization([g])

    def test_validation(self):
        with pytest.raises(ValueError, match="increasing"):
            TransferMap(np.array([0.0, 0.0, 1.0]), np.array([0.1, 0.5, 1.0]))
        with pytest.raises(ValueError, match="increasing"):
            TransferMap(np.array([0.0, 1.0]), np.array([0.5, 0.5]))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_apply_preserves_order(self, seed):
        rng = np.random.default_rng(seed)
        tmap = fit_equalization([rng.normal(size=3000)], n_breakpoints=256)
        x = np.sort(rng.normal(size=100))
        y = tmap.apply(x)
        assert (np.diff(y) >= 0).all()


class TestMaskedEqualize:
    def _setup(self, scale_noise=10.0):
        rng = np.random.default_rng(7)
        data = rng.normal(size=(30, 400))
        mask_rows = np.ones((30, 400), dtype=np.uint8)
        mask_rows[:15, 150:] = 0  # noise block
        data[mask_rows == 0] *= scale_noise
        g = ShotGather(0, 0.002, 10.0 * (1 + np.arange(30)), data)
        return g, GroundRollMask(mask_rows)

    def test_signal_bit_identical(self):
        g, m = self._setup()
        out = masked_equalize(g, m)
        assert np.array_equal(out.data[m.mask == 1], g.data[m.mask == 1])

    def test_noise_matches_signal_distribution(self):
        g, m = self._setup(scale_noise=10.0)
        out = masked_equalize(g, m)
        d_before = stats.ks_2samp(g.data[m.mask == 0], g.data[m.mask == 1]).statistic
        d_after = stats.ks_2samp(out.data[m.mask == 0], out.data[m.mask == 1]).statistic
        assert d_after < 0.05
        assert d_after < d_before

    def test_remap_is_monotone(self):
        g, m = self._setup()
        out = masked_equalize(g, m)
        noise_in = g.data[m.mask == 0]
        noise_out = out.data[m.mask == 0]
        order = np.argsort(noise_in)
        assert (np.diff(noise_out[order]) >= 0).all()

    def test_all_clean_mask_is_identity(self):
        g, _ = self._setup()
        m = GroundRollMask(np.ones(g.data.shape, dtype=np.uint8))
        assert masked_equalize(g, m) == g

    def test_small_signal_region_rejected(self):
        rng = np.random.default_rng(8)
        g = ShotGather(0, 0.002, 10.0 * (1 + np.arange(4)), rng.normal(size=(4, 100)))
        rows = np.zeros((4, 100), dtype=np.uint8)
        rows[0, :50] = 1  # only 50 signal samples
        with pytest.raises(ValueError, match="too small"):
            masked_equalize(g, GroundRollMask(rows))

    def test_shape_mismatch(self):
        g, _ = self._setup()
        bad = GroundRollMask(np.ones((5, 5), dtype=np.uint8))
        with pytest.raises(ValueError, match="does not match"):
            masked_equalize(g, bad)


class TestHistogramEqualizer:
    def test_sklearn_params(self):
        eq = HistogramEqualizer(n_breakpoints=512)
        assert eq.get_params() == {"n_breakpoints": 512}
        eq.set_params(n_breakpoints=128)
        assert eq.n_breakpoints == 128

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            HistogramEqualizer().transform(np.zeros(3))

    def test_fit_transform_gather(self):
        g = gaussian_gather(seed=9)
        eq = HistogramEqualizer().fit([g])
        out = eq.transform(g)
        assert isinstance(out, ShotGather)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0
        back = eq.inverse_transform(out)
        assert np.abs(back.data - g.data).max() < 0.02

    def test_matches_function_api(self):
        g = gaussian_gather(seed=10)
        eq = HistogramEqualizer(n_breakpoints=256).fit([g])
        direct = apply_equalization(g, fit_equalization([g], 256))
        assert eq.transform(g) == direct
