"""Container invariants: ShotGather, GroundRollMask, windows, blending."""
import numpy as np
import pytest

from groundroll.gathers import (
    GroundRollMask,
    ShotGather,
    TraceWindow,
    blend_region,
    extract_window,
)


def make_gather(data, **kw):
    n_tr = np.asarray(data).shape[0]
    kw.setdefault("gather_id", 0)
    kw.setdefault("dt_s", 0.002)
    kw.setdefault("offsets_m", 10.0 * (1 + np.arange(n_tr)))
    return ShotGather(data=np.asarray(data, dtype=float), **kw)


class TestShotGather:
    def test_basic_properties(self):
        g = make_gather(np.zeros((4, 10)), gather_id=7, dt_s=0.004)
        assert g.n_traces == 4
        assert g.n_samples == 10
        assert g.times_s[1] == pytest.approx(0.004)
        assert g.gather_id == 7

    def test_data_is_read_only(self):
        g = make_gather(np.zeros((3, 5)))
        with pytest.raises(ValueError):
            g.data[0, 0] = 1.0
        with pytest.raises(ValueError):
            g.offsets_m[0] = 99.0

    def test_float32_quantization(self):
        # construction snaps samples to f32 precision so disk IO is lossless
        val = 0.1
        g = make_gather(np.full((2, 3), val))
        assert g.data[0, 0] == np.float64(np.float32(val))
        assert g.data[0, 0] != val

    def test_rejects_nan(self):
        data = np.zeros((2, 4))
        data[1, 2] = np.nan
        with pytest.raises(ValueError, match="NaN or Inf"):
            make_gather(data)

    def test_rejects_bad_offsets(self):
        with pytest.raises(ValueError, match="increasing"):
            make_gather(np.zeros((3, 4)), offsets_m=np.array([10.0, 10.0, 20.0]))
        with pytest.raises(ValueError, match="positive"):
            make_gather(np.zeros((2, 4)), offsets_m=np.array([0.0, 10.0]))
        with pytest.raises(ValueError, match="length"):
            make_gather(np.zeros((2, 4)), offsets_m=np.array([10.0]))

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError, match="2D"):
            ShotGather(0, 0.002, np.array([1.0]), np.zeros(5))

    def test_with_data_keeps_identity(self):
        g = make_gather(np.zeros((3, 6)), gather_id=2)
        h = g.with_data(np.ones((3, 6)))
        assert h.gather_id == 2
        assert h.dt_s == g.dt_s
        assert np.array_equal(h.offsets_m, g.offsets_m)
        assert (h.data == 1.0).all()

    def test_equality_is_by_value(self):
        a = make_gather(np.arange(12.0).reshape(3, 4))
        b = make_gather(np.arange(12.0).reshape(3, 4))
        assert a == b
        assert a != b.with_data(np.zeros((3, 4)))


class TestGroundRollMask:
    def test_values_checked(self):
        with pytest.raises(ValueError, match="0 or 1"):
            GroundRollMask(np.full((2, 3), 2, dtype=np.uint8))

    def test_from_boundary_indices(self):
        m = GroundRollMask.from_boundary_indices(np.array([2, 0, 5, -1]), 5)
        expected = np.array(
            [[1, 1, 0, 0, 0],
             [0, 0, 0, 0, 0],
             [1, 1, 1, 1, 1],
             [1, 1, 1, 1, 1]], dtype=np.uint8)
        assert np.array_equal(m.mask, expected)

    def test_noise_onsets(self):
        m = GroundRollMask.from_boundary_indices(np.array([2, 0, 5]), 5)
        assert np.array_equal(m.noise_onsets(), [2, 0, -1])

    def test_boundary_requires_suffix_shape(self):
        rows = np.ones((2, 6), dtype=np.uint8)
        rows[0, 3:] = 0          # suffix run: boundary = 3
        rows[1, 2:4] = 0         # interior run: no boundary
        m = GroundRollMask(rows)
        assert np.array_equal(m.boundary, [3, -1])
        assert np.array_equal(m.noise_onsets(), [3, 2])

    def test_noise_fraction(self):
        m = GroundRollMask.from_boundary_indices(np.array([0, 4]), 4)
        assert m.noise_fraction() == pytest.approx(0.5)


class TestWindows:
    def test_window_validation(self):
        with pytest.raises(ValueError, match="ordered"):
            TraceWindow(3, 2, 0, 5)
        w = TraceWindow(1, 3, 2, 7)
        assert (w.n_traces, w.n_samples, w.area) == (3, 6, 18)

    def test_extract_window_copies(self, small_gather):
        w = TraceWindow(0, 1, 0, 2)
        block = extract_window(small_gather, w)
        assert block.shape == (2, 3)
        block[0, 0] = 123.0  # mutating the copy must not touch the gather
        assert small_gather.data[0, 0] != 123.0

    def test_extract_window_bounds(self, small_gather):
        with pytest.raises(ValueError, match="out of range"):
            extract_window(small_gather, TraceWindow(0, 999, 0, 2))


class TestBlendRegion:
    def test_patch_goes_where_mask_is_zero(self):
        base = make_gather(np.zeros((2, 4)))
        patch = make_gather(np.ones((2, 4)))
        mask = GroundRollMask(np.array([[1, 1, 0, 0], [0, 1, 1, 1]], dtype=np.uint8))
        out = blend_region(base, patch, mask)
        assert np.array_equal(out.data, [[0, 0, 1, 1], [1, 0, 0, 0]])

    def test_shape_mismatch(self):
        base = make_gather(np.zeros((2, 4)))
        patch = make_gather(np.zeros((2, 5)))
        mask = GroundRollMask(np.ones((2, 4), dtype=np.uint8))
        with pytest.raises(ValueError, match="share dimensions"):
            blend_region(base, patch, mask)
