import math

import numpy as np
import pytest

from phononcount.exceptions import LockTimeoutError, ValidationError
from phononcount.filters import FilterChain
from phononcount.lock import (
    CALIBRATED_DIFFUSION,
    ControllerGains,
    CycleSchedule,
    DriftModel,
    LockPhase,
    dither_error_signal,
    frozen_ensemble,
    relative_transmission,
    run_duty_cycle,
    run_frozen_segment,
    run_lock_acquisition,
    run_relock,
    side_error_signal,
    validate_trajectory,
)

CHAIN = FilterChain.identical()
KF = float(CHAIN.linewidths[0])
DRIFT = DriftModel.calibrated(KF)


def test_dither_error_shape():
    assert dither_error_signal(0.0, KF, 0.05 * KF) == 0.0
    x = np.linspace(0, KF, 101)
    e = dither_error_signal(x, KF, 0.05 * KF)
    assert np.allclose(dither_error_signal(-x, KF, 0.05 * KF), -e)
    # slope near lock is ~8/kf in units of kf
    assert dither_error_signal(1e-4 * KF, KF, 1e-3 * KF) == pytest.approx(8e-4, rel=1e-3)
    fine = np.linspace(0, KF, 20001)
    peak = fine[np.argmax(dither_error_signal(fine, KF, 0.05 * KF))]
    assert peak == pytest.approx(KF / (2 * math.sqrt(3)), rel=0.05)
    with pytest.raises(ValidationError):
        dither_error_signal(0.0, KF, 0.0)


def test_side_error_zero_at_half_width():
    assert side_error_signal(KF / 2, KF) == pytest.approx(0.0, abs=1e-9)
    assert side_error_signal(0.0, KF) < 0 < side_error_signal(KF, KF)


def test_relative_transmission():
    assert relative_transmission(np.zeros(4), CHAIN.linewidths) == 1.0
    assert relative_transmission([KF / 2, 0, 0, 0], CHAIN.linewidths) == pytest.approx(0.5)


def test_acquisition_locks_every_cavity():
    tr = run_lock_acquisition(CHAIN, DRIFT, seed=1)
    assert validate_trajectory(tr.phases)
    assert np.all(tr.phases[-1] == LockPhase.DITHER_LOCK)
    assert np.all(np.abs(tr.detunings[-1]) < KF / 100)
    acquired = [e for e in tr.events if e[2] == "ACQUIRED"]
    assert [e[1] for e in acquired] == [0, 1, 2, 3]
    assert tr.transmission[-1] > 0.99


def test_acquisition_timeout():
    gains = ControllerGains(stage_timeout=0.05)
    with pytest.raises(LockTimeoutError) as info:
        run_lock_acquisition(CHAIN, DRIFT, gains, seed=1)
    assert info.value.cavity == 0


def test_trajectory_validation_rules():
    S, L, D = LockPhase.SCANNING, LockPhase.SIDE_LOCK, LockPhase.DITHER_LOCK
    validate_trajectory([[S, S], [L, S], [D, S], [D, L]])
    with pytest.raises(ValidationError):
        validate_trajectory([[S], [D]])
    with pytest.raises(ValidationError):
        validate_trajectory([[S, S], [L, L]])
    with pytest.raises(ValidationError):
        validate_trajectory([[LockPhase.FROZEN], [D]])


def test_relock_is_fast():
    t_lock, tr = run_relock(CHAIN, DRIFT, np.full(4, 0.3 * KF), seed=2)
    assert t_lock < 0.5
    assert np.all(tr.phases == LockPhase.RELOCKING)
    t_lock, _ = run_relock(CHAIN, DRIFT, np.full(4, 0.3 * KF), seed=2, timeout=0.05)
    assert math.isinf(t_lock)


def test_frozen_without_drift_stays_at_peak():
    seg = run_frozen_segment(CHAIN, DriftModel(), 2.0, seed=0)
    assert np.all(seg.transmission == 1.0)
    assert math.isinf(seg.summary["time_to_half"])
    assert seg.summary["held_80_through_1s"]


def test_frozen_segment_determinism_and_independence():
    a = run_frozen_segment(CHAIN, DRIFT, 5.0, seed=11)
    b = run_frozen_segment(CHAIN, DRIFT, 5.0, seed=11)
    assert np.array_equal(a.detunings, b.detunings)
    # random-walk increments are uncorrelated between cavities
    inc = np.diff(run_frozen_segment(CHAIN, DriftModel(diffusion=DRIFT.diffusion), 50.0,
                                     seed=12).detunings, axis=0)
    corr = np.corrcoef(inc.T)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off) < 4 / math.sqrt(inc.shape[0]))


def test_diffusion_variance_grows_linearly():
    drift = DriftModel(diffusion=CALIBRATED_DIFFUSION * KF ** 2 / 4)
    ends = np.array([run_frozen_segment(CHAIN, drift, 1.0, seed=s).detunings[-1]
                     for s in range(200)]).ravel()
    # variance estimate from 800 normals has ~5 % relative sd
    assert ends.var() == pytest.approx(drift.diffusion * 1.0, rel=0.2)


def test_vibration_adds_oscillation():
    vib = DriftModel(vibration=((50.0, 0.2 * KF),))
    seg = run_frozen_segment(CHAIN, vib, 1.0, seed=0)
    assert seg.transmission.min() < 0.9
    assert np.abs(seg.detunings).max() <= 0.2 * KF + 1e-9


def test_ensemble_summary_keys():
    ens = frozen_ensemble(CHAIN, DRIFT, 2.0, range(5))
    assert ens["n_seeds"] == 5
    assert ens["mean_curve"].shape == ens["t"].shape
    assert ens["mean_curve"][0] == 1.0


def test_duty_cycle_limits():
    still = run_duty_cycle(CycleSchedule(), CHAIN, DriftModel(), 4, seed=3)
    assert still.mean == 1.0 and still.std == 0.0
    assert still.relock_timeouts == 0
    short = run_duty_cycle(CycleSchedule(), CHAIN, DRIFT, 6, seed=3)
    long = run_duty_cycle(CycleSchedule(freeze_duration=10.0), CHAIN, DRIFT, 6, seed=3)
    assert long.mean < short.mean
    assert np.all(short.relock_times < 0.5)
    with pytest.raises(ValidationError):
        run_duty_cycle(CycleSchedule(), CHAIN, DRIFT, 0)


def test_duty_cycle_trajectory_is_legal():
    r = run_duty_cycle(CycleSchedule(), CHAIN, DRIFT, 2, seed=5, keep_trajectory=True)
    validate_trajectory(r.trajectory.phases)
    assert r.trajectory.spcm_shutter_open.any()
    frozen = r.trajectory.phases[:, 0] == LockPhase.FROZEN
    assert np.all(frozen[r.trajectory.spcm_shutter_open])


def test_gain_stability_check():
    assert ControllerGains().check_stable() < 1.0
    with pytest.raises(ValidationError):
        ControllerGains(ki=2 * math.pi * 1e3).check_stable()
    with pytest.raises(ValidationError):
        run_relock(CHAIN, DRIFT, np.zeros(4), gains=ControllerGains(kp=3.0))


def test_schedule_validation():
    with pytest.raises(ValidationError):
        CycleSchedule(freeze_duration=0.0)
    with pytest.raises(ValidationError):
        DriftModel(diffusion=-1.0)
