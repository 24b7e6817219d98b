"""Synthetic survey generator: kinematics, truth masks, determinism."""
import numpy as np
import pytest

from groundroll.synthetic import (
    GeologyConfig,
    GroundRollBand,
    Reflection,
    make_gather,
    make_survey,
    perturb_reflections,
    ricker,
)
from tests.conftest import mini_geology


class TestRicker:
    def test_peak_and_symmetry(self):
        tau = np.linspace(-0.1, 0.1, 201)
        w = ricker(tau, 25.0)
        assert w[100] == pytest.approx(1.0)
        assert np.allclose(w, w[::-1])

    def test_zero_crossings(self):
        # the wavelet changes sign at tau = +-1/(pi*f*sqrt(2))
        f = 25.0
        tau_c = 1.0 / (np.pi * f * np.sqrt(2.0))
        assert ricker(np.array([tau_c]), f)[0] == pytest.approx(0.0, abs=1e-12)


class TestConfigValidation:
    def test_band_bounds(self):
        with pytest.raises(ValueError, match="3 <= f_lo"):
            GroundRollBand(1.0, 14.0, 300.0, 2500.0, 15.0, 1600.0)
        with pytest.raises(ValueError, match="v_lo < v_hi"):
            GroundRollBand(5.0, 14.0, 2500.0, 300.0, 15.0, 1600.0)
        with pytest.raises(ValueError, match="amplitude_ratio"):
            GroundRollBand(5.0, 14.0, 300.0, 2500.0, 0.5, 1600.0)

    def test_velocity_mapping_endpoints(self):
        band = GroundRollBand(5.0, 15.0, 200.0, 2000.0, 15.0, 1600.0)
        assert band.velocity_at(np.array([5.0]))[0] == pytest.approx(2000.0)
        assert band.velocity_at(np.array([15.0]))[0] == pytest.approx(200.0)
        assert band.velocity_at(np.array([10.0]))[0] == pytest.approx(1100.0)

    def test_trace_len_multiple_of_dt(self):
        with pytest.raises(ValueError, match="multiple"):
            mini_geology(trace_len_s=1.001)

    def test_reflection_validation(self):
        with pytest.raises(ValueError, match="t0_s"):
            Reflection(t0_s=-1.0, v_nmo_mps=2000.0, amplitude=1.0, ricker_f_hz=20.0)


class TestReflectionKinematics:
    def test_event_peaks_on_hyperbola(self):
        cfg = mini_geology(noise_rms=0.0, reflections=(
            Reflection(t0_s=0.5, v_nmo_mps=2000.0, amplitude=1.0, ricker_f_hz=15.0),))
        triple = make_gather(cfg, 0)
        data = triple.clean.data
        for j in (0, 40, 80):
            x = triple.clean.offsets_m[j]
            t_theory = np.sqrt(0.5**2 + (x / 2000.0) ** 2)
            t_peak = np.argmax(np.abs(data[j])) * cfg.dt_s
            assert t_peak == pytest.approx(t_theory, abs=cfg.dt_s)


class TestGroundRollCone:
    def test_silence_before_first_possible_arrival(self, mini_cfg, mini_triple):
        gr = mini_triple.noisy.data - mini_triple.clean.data
        v_hi = mini_cfg.groundroll.v_hi_mps
        for j in range(0, mini_cfg.n_traces, 7):
            x = mini_triple.noisy.offsets_m[j]
            first = int(np.floor(x / v_hi / mini_cfg.dt_s))
            assert not gr[j, :first].any()

    def test_silence_after_slowest_packet(self, mini_cfg, mini_triple):
        gr = mini_triple.noisy.data - mini_triple.clean.data
        band = mini_cfg.groundroll
        for j in range(0, 50, 7):
            x = mini_triple.noisy.offsets_m[j]
            t_end = x / band.v_lo_mps + 3.0 / band.f_lo_hz
            k = int(np.ceil(t_end / mini_cfg.dt_s)) + 1
            if k < mini_cfg.n_samples:
                assert not gr[j, k:].any()

    def test_clean_beyond_taper(self, mini_cfg, mini_triple):
        band = mini_cfg.groundroll
        gr = mini_triple.noisy.data - mini_triple.clean.data
        far = mini_triple.noisy.offsets_m >= band.max_offset_m + band.taper_m
        assert far.any()
        assert not gr[far].any()
        assert mini_triple.truth.mask[far].all()

    def test_onset_bounded_by_velocities(self, mini_cfg, mini_triple):
        band = mini_cfg.groundroll
        onsets = mini_triple.truth.noise_onsets()
        full = mini_triple.noisy.offsets_m <= band.max_offset_m
        for j in np.nonzero(full)[0][::5]:
            x = mini_triple.noisy.offsets_m[j]
            assert onsets[j] >= 0
            t_on = onsets[j] * mini_cfg.dt_s
            assert t_on >= x / band.v_hi_mps - mini_cfg.dt_s
            assert t_on <= x / band.v_lo_mps

    def test_mask_marks_a_sensible_fraction(self, mini_triple):
        frac = mini_triple.truth.noise_fraction()
        assert 0.05 < frac < 0.7


class TestDisabledGroundRoll:
    def test_ratio_zero_noisy_equals_clean(self):
        cfg = mini_geology(groundroll=GroundRollBand(
            5.0, 14.0, 300.0, 2500.0, 0.0, 1600.0, 200.0, 40))
        triple = make_gather(cfg, 0)
        assert triple.noisy == triple.clean
        assert triple.truth.mask.all()


class TestDeterminism:
    def test_same_key_same_gather(self, mini_cfg):
        a = make_gather(mini_cfg, 2)
        b = make_gather(mini_cfg, 2)
        assert a.noisy == b.noisy
        assert a.clean == b.clean
        assert a.truth == b.truth

    def test_different_id_differs(self, mini_cfg):
        assert make_gather(mini_cfg, 0).noisy != make_gather(mini_cfg, 1).noisy

    def test_background_noise_rms(self):
        cfg = mini_geology(noise_rms=0.05, reflections=(
            Reflection(t0_s=5.0, v_nmo_mps=9000.0, amplitude=1e-9, ricker_f_hz=20.0),),
            groundroll=GroundRollBand(5.0, 14.0, 300.0, 2500.0, 0.0, 1600.0))
        g = make_gather(cfg, 0)
        rms = float(np.sqrt(np.mean(g.clean.data**2)))
        assert rms == pytest.approx(0.05, rel=1e-3)


class TestPerturbAndSurvey:
    def test_perturb_bounds(self, mini_cfg):
        rng = np.random.default_rng(0)
        out = perturb_reflections(mini_cfg, rng, t0_jitter=0.1, v_jitter=0.05,
                                  amp_jitter=0.2)
        for ev, base in zip(out.reflections, mini_cfg.reflections):
            assert abs(ev.t0_s - base.t0_s) <= 0.1 * base.t0_s + 1e-12
            assert abs(ev.v_nmo_mps - base.v_nmo_mps) <= 0.05 * base.v_nmo_mps + 1e-9
            assert abs(ev.amplitude - base.amplitude) <= 0.2 * base.amplitude + 1e-12
            assert ev.ricker_f_hz == base.ricker_f_hz

    def test_survey_split(self, mini_cfg):
        split = make_survey(mini_cfg, 7, seed=3)
        assert split.train_ids == (0, 1, 2, 3, 4)
        assert split.test_ids == (5, 6)
        assert len(split.gathers) == 7

    def test_survey_too_small(self, mini_cfg):
        with pytest.raises(ValueError, match=">= 6"):
            make_survey(mini_cfg, 5, seed=3)

    def test_survey_gathers_differ_and_reproduce(self, mini_cfg):
        a = make_survey(mini_cfg, 6, seed=3)
        b = make_survey(mini_cfg, 6, seed=3)
        for ta, tb in zip(a.gathers, b.gathers):
            assert ta.noisy == tb.noisy
        assert a.gathers[0].clean != a.gathers[1].clean  # jittered reflections
