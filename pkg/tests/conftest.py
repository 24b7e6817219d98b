"""Shared fixtures: small synthetic gathers that are cheap to build."""
import numpy as np
import pytest

from groundroll.gathers import GroundRollMask, ShotGather
from groundroll.synthetic import (
    GeologyConfig,
    GroundRollBand,
    Reflection,
    make_gather,
)


def mini_geology(**overrides) -> GeologyConfig:
    """A small, fast geology: 96 traces x 256 samples at dt=8ms.

    The coarse sample interval keeps the gather tiny while the ground-roll
    cone still spans a useful fraction of the panel.
    """
    params = dict(
        n_traces=96,
        offset_min_m=100.0,
        offset_spacing_m=25.0,
        trace_len_s=2.048,
        dt_s=0.008,
        noise_rms=0.02,
        reflections=(
            Reflection(t0_s=0.3, v_nmo_mps=1800.0, amplitude=1.0, ricker_f_hz=18.0),
            Reflection(t0_s=0.9, v_nmo_mps=2500.0, amplitude=0.8, ricker_f_hz=15.0),
            Reflection(t0_s=1.5, v_nmo_mps=3200.0, amplitude=0.7, ricker_f_hz=12.0),
        ),
        groundroll=GroundRollBand(
            f_lo_hz=5.0,
            f_hi_hz=14.0,
            v_lo_mps=300.0,
            v_hi_mps=2500.0,
            amplitude_ratio=15.0,
            max_offset_m=1600.0,
            taper_m=200.0,
            n_components=40,
        ),
        seed=11,
    )
    params.update(overrides)
    return GeologyConfig(**params)


@pytest.fixture(scope="session")
def mini_cfg() -> GeologyConfig:
    return mini_geology()


@pytest.fixture(scope="session")
def mini_triple(mini_cfg):
    return make_gather(mini_cfg, 0)


@pytest.fixture(scope="session")
def small_gather() -> ShotGather:
    """Deterministic random gather, no physics, for IO/metric plumbing."""
    rng = np.random.default_rng(42)
    return ShotGather(
        gather_id=3,
        dt_s=0.004,
        offsets_m=50.0 + 25.0 * np.arange(48),
        data=rng.normal(size=(48, 200)),
    )


@pytest.fixture()
def suffix_mask(small_gather) -> GroundRollMask:
    """Suffix-shaped mask affecting the first 30 traces of small_gather."""
    n_tr, n_sm = small_gather.data.shape
    idx = np.full(n_tr, n_sm, dtype=np.int64)
    idx[:30] = 60 + 2 * np.arange(30)
    return GroundRollMask.from_boundary_indices(idx, n_sm)
