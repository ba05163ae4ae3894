import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from phononcount.exceptions import (
    ConvergenceError,
    NonPositiveRateError,
    UnphysicalRatioError,
    ValidationError,
)
from phononcount.params import hz, reference_cavity, reference_mode
from phononcount.rates import cavity_asymmetry
from phononcount.thermometry import (
    fit_bath_temperature,
    occupancy_estimate,
    occupancy_from_ratio,
    occupancy_model,
    raman_ratio,
    thermometry_from_counts,
)


def test_dark_subtracted_ratio():
    r, s = raman_ratio(1155, 10.0, 355, 10.0, dark_rate=15.5)
    assert r == pytest.approx(5.0, rel=1e-12)
    assert s > 0
    r, _ = raman_ratio(400, 4.0, 100, 1.0)
    assert r == 1.0


def test_ratio_sigma_without_dark_is_poisson():
    r, s = raman_ratio(400, 1.0, 100, 1.0)
    assert s == pytest.approx(4.0 * math.sqrt(1 / 400 + 1 / 100))


def test_nonpositive_rate_raises():
    with pytest.raises(NonPositiveRateError):
        raman_ratio(100, 10.0, 100, 10.0, dark_rate=15.5)
    with pytest.raises(ValidationError):
        raman_ratio(-1, 1.0, 10, 1.0)
    with pytest.raises(ValidationError):
        raman_ratio(10, 0.0, 10, 1.0)


def test_ratio_sigma_against_monte_carlo():
    rng = np.random.default_rng(0)
    t, lam_as, lam_s, dark, dsig = 100.0, 60.0, 30.0, 15.5, 0.5
    _, sigma = raman_ratio(round((lam_as + dark) * t), t, round((lam_s + dark) * t), t, dark, dsig)
    reps = []
    for _ in range(1000):
        d = rng.normal(dark, dsig)
        n_as = rng.poisson((lam_as + dark) * t)
        n_s = rng.poisson((lam_s + dark) * t)
        reps.append((n_as / t - d) / (n_s / t - d))
    assert np.std(reps, ddof=1) == pytest.approx(sigma, rel=0.15)


def test_occupancy_examples(cavity, mode):
    assert occupancy_estimate(0.0, cavity, mode) == 0.0
    assert occupancy_estimate(1.2, cavity, mode) == pytest.approx(0.23, abs=0.005)
    r_max = cavity_asymmetry(cavity, mode)
    with pytest.raises(UnphysicalRatioError):
        occupancy_estimate(r_max, cavity, mode)
    with pytest.raises(UnphysicalRatioError):
        occupancy_estimate(-0.1, cavity, mode)


@given(st.floats(0.0, 50.0))
def test_ratio_occupancy_round_trip(n):
    cav, mode = reference_cavity(), reference_mode()
    r_max = cavity_asymmetry(cav, mode)
    ratio = r_max * n / (n + 1)
    assert occupancy_estimate(ratio, cav, mode) == pytest.approx(n, rel=1e-9, abs=1e-12)


def test_sigma_n_propagation(cavity, mode):
    base = occupancy_from_ratio(1.2, 0.05, cavity, mode)
    r_max = cavity_asymmetry(cavity, mode)
    assert base.sigma_n == pytest.approx(r_max / (r_max - 1.2) ** 2 * 0.05)
    widened = occupancy_from_ratio(1.2, 0.05, cavity, mode,
                                   {"kappa": hz(50e3), "detuning": hz(20e3), "omega_m": 0.0})
    assert widened.sigma_n > base.sigma_n
    assert widened.n_est == base.n_est
    with pytest.raises(ValidationError):
        occupancy_from_ratio(1.2, 0.05, cavity, mode, {"g0": 1.0})


def test_thermometry_from_counts_records_inputs(cavity, mode):
    res = thermometry_from_counts(1155, 10.0, 355, 10.0, cavity, mode, 15.5, 0.5)
    assert res.inputs["counts_as"] == 1155 and res.inputs["dark_sigma"] == 0.5
    with pytest.raises(UnphysicalRatioError):
        thermometry_from_counts(1755, 10.0, 355, 10.0, cavity, mode, 15.5)


def test_occupancy_model_matches_hand_rates(cavity, mode):
    for g in (255.0, 11e3):
        ref = oracles.rates_by_hand(g)
        assert occupancy_model(hz(g), 8.8, cavity, mode) == pytest.approx(ref["n_bar"], rel=1e-8)


def test_single_noiseless_point_recovers_temperature(cavity, mode):
    g = hz(1e3)
    n = occupancy_model(g, 8.8, cavity, mode)
    fit = fit_bath_temperature([g], [n], [0.01], cavity, mode)
    assert fit.temperature == pytest.approx(8.8, rel=1e-9)
    assert fit.dof == 0


def test_doubling_occupancy_doubles_temperature(cavity, mode):
    # once the quantum backaction term is small, n scales with T
    g = np.geomspace(hz(20.0), hz(60.0), 5)
    n = occupancy_model(g, 8.8, cavity, mode)
    fit = fit_bath_temperature(g, 2 * n, 0.01 * n, cavity, mode)
    assert fit.temperature == pytest.approx(17.6, rel=0.05)


def test_noisy_fit_within_error(cavity, mode):
    rng = np.random.default_rng(3)
    g = np.geomspace(hz(255.0), hz(11e3), 10)
    n = occupancy_model(g, 8.8, cavity, mode)
    sig = 0.05 * n
    fit = fit_bath_temperature(g, n + rng.normal(0, sig), sig, cavity, mode)
    assert abs(fit.temperature - 8.8) < 4 * fit.sigma
    assert fit.dof == 9


def test_fit_errors(cavity, mode):
    g = hz(1e3)
    with pytest.raises(ConvergenceError):
        fit_bath_temperature([g], [1e6], [1.0], cavity, mode)
    with pytest.raises(ValidationError):
        fit_bath_temperature([g, g], [1.0], [1.0], cavity, mode)
    with pytest.raises(ValidationError):
        fit_bath_temperature([g], [1.0], [0.0], cavity, mode)
    with pytest.raises(ValidationError):
        fit_bath_temperature([], [], [], cavity, mode)
