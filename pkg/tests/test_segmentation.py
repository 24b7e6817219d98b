"""Per-trace segmentation: sampling, U-Net training, mask cleanup."""
import numpy as np
import pytest

from groundroll.gathers import GroundRollMask, ShotGather
from groundroll.segmentation import (
    TraceSample,
    TraceSegmenter,
    make_trace_training_set,
    mask_postprocess,
    segment_gather,
    train_trace_unet,
)

L = 256


def _step_rows(n, seed, length=L):
    """Traces quiet before a random onset, loud |sin| after; suffix targets."""
    rng = np.random.default_rng(seed)
    X = np.empty((n, length))
    y = np.ones((n, length), dtype=np.uint8)
    t = np.arange(length)
    for i in range(n):
        onset = int(rng.integers(length // 8, 7 * length // 8))
        quiet = 0.45 + 0.02 * rng.standard_normal(length)
        loud = 0.5 + 0.45 * np.abs(np.sin(2 * np.pi * t / 24.0 + rng.uniform(0, 6)))
        X[i] = np.clip(np.where(t < onset, quiet, loud), 0.0, 1.0)
        y[i, onset:] = 0
    return X, y


def _masked_gather(seed=0, n_tr=20, gather_id=4):
    X, y = _step_rows(n_tr, seed)
    g = ShotGather(gather_id=gather_id, offsets_m=50.0 + 10.0 * np.arange(n_tr),
                   dt_s=0.004, data=X)
    return g, GroundRollMask(y)


class TestTrainingSet:
    def test_counts_and_alignment(self):
        g, m = _masked_gather()
        samples = make_trace_training_set([g], [m], n_traces_per_gather=12, seed=2)
        assert len(samples) == 12
        for s in samples:
            j = int(np.nonzero(g.offsets_m == s.offset_m)[0][0])
            np.testing.assert_array_equal(s.trace, g.data[j])
            np.testing.assert_array_equal(s.target, m.mask[j])

    def test_includes_all_clean_rows(self):
        g, _ = _masked_gather(n_tr=30)
        arr = np.ones((30, L), dtype=np.uint8)
        arr[:3, 100:] = 0  # only first three traces carry noise
        samples = make_trace_training_set([g], [GroundRollMask(arr)], 25, seed=0)
        assert any(s.target.all() for s in samples)

    def test_seed_determinism_per_gather(self):
        g, m = _masked_gather()
        a = make_trace_training_set([g], [m], 8, seed=5)
        b = make_trace_training_set([g], [m], 8, seed=5)
        assert all(np.array_equal(x.trace, y.trace) for x, y in zip(a, b))

    def test_mismatched_masks_rejected(self):
        g, m = _masked_gather()
        bad = GroundRollMask(np.ones((g.n_traces, L + 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            make_trace_training_set([g], [bad], 4)

    def test_sample_validation(self):
        with pytest.raises(ValueError, match="binary"):
            TraceSample(trace=np.zeros(8), target=np.full(8, 3, np.uint8),
                        offset_m=10.0)


@pytest.fixture(scope="module")
def step_segmenter():
    X, y = _step_rows(48, seed=1)
    seg = TraceSegmenter(net_len=L, kernel=9, n_epochs=30, batch_size=8,
                         lr=1e-3, seed=3)
    return seg.fit(X, y)


class TestTraceSegmenter:
    def test_net_len_validation(self):
        with pytest.raises(ValueError, match="power of two"):
            TraceSegmenter(net_len=100).fit(np.zeros((2, 50)), np.zeros((2, 50)))

    def test_single_class_targets_rejected(self):
        X = np.random.default_rng(0).uniform(size=(4, 64))
        with pytest.raises(ValueError, match="single class"):
            TraceSegmenter(net_len=64, n_epochs=1).fit(X, np.ones((4, 64)))

    def test_learns_step_function(self, step_segmenter):
        X, y = _step_rows(16, seed=9)
        pred = step_segmenter.predict(X)
        onset_true = np.argmax(y == 0, axis=1)
        has = (pred == 0).any(axis=1)
        assert has.mean() >= 0.9
        onset_pred = np.argmax(pred == 0, axis=1)
        err = np.abs(onset_pred[has] - onset_true[has])
        assert np.median(err) <= 4

    def test_predict_shapes_and_1d_input(self, step_segmenter):
        X, _ = _step_rows(3, seed=4)
        rows = step_segmenter.predict(X)
        assert rows.shape == X.shape and rows.dtype == np.uint8
        one = step_segmenter.predict(X[0])
        np.testing.assert_array_equal(one[0], rows[0])

    def test_proba_in_unit_range(self, step_segmenter):
        X, _ = _step_rows(2, seed=6)
        p = step_segmenter.predict_proba(X)
        assert p.shape == X.shape
        assert ((p >= 0) & (p <= 1)).all()

    def test_resampled_lengths_round_trip(self, step_segmenter):
        # native length differs from net_len in both directions
        X, _ = _step_rows(2, seed=8, length=300)
        assert step_segmenter.predict(X).shape == (2, 300)
        X2, _ = _step_rows(2, seed=8, length=200)
        assert step_segmenter.predict(X2).shape == (2, 200)

    def test_unfitted_raises(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            TraceSegmenter(net_len=64).predict(np.zeros(64))

    def test_save_load_identical_predictions(self, step_segmenter, tmp_path):
        path = tmp_path / "seg.nnw"
        step_segmenter.save(path)
        back = TraceSegmenter.load(path)
        X, _ = _step_rows(4, seed=12)
        np.testing.assert_array_equal(back.predict(X), step_segmenter.predict(X))
        assert back.net_len == step_segmenter.net_len
        assert back.kernel == step_segmenter.kernel

    def test_train_helper_rejects_mixed_lengths(self):
        a = TraceSample(trace=np.zeros(16), target=np.ones(16, np.uint8), offset_m=1.0)
        b = TraceSample(trace=np.zeros(32), target=np.ones(32, np.uint8), offset_m=2.0)
        with pytest.raises(ValueError, match="mixed"):
            train_trace_unet([a, b])

    def test_get_params_exposes_hyperparameters(self):
        seg = TraceSegmenter(net_len=512, kernel=9, n_epochs=3)
        p = seg.get_params()
        assert p["net_len"] == 512 and p["kernel"] == 9 and p["n_epochs"] == 3


class TestMaskPostprocess:
    def test_longest_run_survives(self):
        row = np.ones(200, dtype=np.uint8)
        row[20:30] = 0    # short spurious run
        row[80:160] = 0   # the real one
        out = mask_postprocess(row[None], min_run=25, median_window=1).mask[0]
        assert out[20:30].all()
        assert (out[80:160] == 0).all()
        assert out[160:].all()

    def test_tie_goes_to_deeper_run(self):
        row = np.ones(120, dtype=np.uint8)
        row[10:40] = 0
        row[60:90] = 0  # same length, deeper
        out = mask_postprocess(row[None], min_run=25, median_window=1).mask[0]
        assert out[10:40].all()
        assert (out[60:90] == 0).all()

    def test_short_runs_dropped_entirely(self):
        row = np.ones(100, dtype=np.uint8)
        row[40:50] = 0
        out = mask_postprocess(row[None], min_run=25, median_window=1).mask[0]
        assert out.all()

    def test_median_smoothing_fixes_sawtooth_onset(self):
        n_tr, n_sm = 9, 300
        rows = np.ones((n_tr, n_sm), dtype=np.uint8)
        onsets = np.full(n_tr, 100)
        onsets[4] = 160  # single outlier trace
        for j, o in enumerate(onsets):
            rows[j, o:] = 0
        out = mask_postprocess(rows, min_run=25, median_window=5)
        got = out.noise_onsets()
        assert (got == 100).all()

    def test_smoothed_onset_past_run_end_empties_trace(self):
        rows = np.ones((5, 200), dtype=np.uint8)
        for j in range(5):
            rows[j, 150:] = 0
        rows[2, :] = 1
        rows[2, 40:80] = 0  # isolated shallow run; median onset lands past 79
        out = mask_postprocess(rows, min_run=25, median_window=5)
        assert out.mask[2].all()

    def test_at_most_one_noise_run_per_trace(self):
        rng = np.random.default_rng(3)
        rows = (rng.uniform(size=(12, 160)) > 0.35).astype(np.uint8)
        out = mask_postprocess(rows, min_run=10, median_window=3)
        for row in out.mask:
            noise = np.concatenate([[0], (row == 0).astype(np.int8), [0]])
            assert (np.diff(noise) == 1).sum() <= 1

    def test_all_clean_passthrough(self):
        rows = np.ones((4, 64), dtype=np.uint8)
        out = mask_postprocess(rows)
        assert out.mask.all()

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError, match="0/1"):
            mask_postprocess(np.full((2, 30), 2, dtype=np.uint8))
        with pytest.raises(ValueError, match="2D"):
            mask_postprocess(np.zeros(30, dtype=np.uint8))


class TestSegmentGather:
    def test_requires_equalized_gather(self, step_segmenter):
        g = ShotGather(gather_id=0, offsets_m=np.arange(1.0, 5.0),
                       dt_s=0.004, data=np.random.default_rng(0)
                       .standard_normal((4, L)) * 3.0)
        with pytest.raises(ValueError, match="equalized"):
            segment_gather(g, step_segmenter)

    def test_returns_postprocessed_mask(self, step_segmenter):
        X, _ = _step_rows(10, seed=21)
        g = ShotGather(gather_id=0, offsets_m=10.0 * np.arange(1, 11),
                       dt_s=0.004, data=X)
        out = segment_gather(g, step_segmenter)
        assert isinstance(out, GroundRollMask)
        assert out.mask.shape == X.shape
        raw = step_segmenter.predict(g.data)
        np.testing.assert_array_equal(out.mask,
                                      mask_postprocess(raw).mask)
