import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from phononcount.clicks import DetectionChain, simulate_sideband_stream, simulate_thermal_stream
from phononcount.estimators import BathTemperatureRegressor, G2Fitter, RamanThermometer
from phononcount.exceptions import ValidationError
from phononcount.filters import FilterChain
from phononcount.params import OptomechanicalConfig, hz, reference_cavity, reference_mode
from phononcount.rates import drive_for_gamma_opt
from phononcount.thermometry import occupancy_model

GAMMA = hz(2.1e3)
TAU_C = 2 / GAMMA


def test_g2_fitter_params_and_clone():
    est = G2Fitter(max_delay=1.5e-3, exclusion_window=500e-9, weighting="sigma")
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    twin.set_params(bin_width=1e-5)
    assert est.bin_width is None and twin.bin_width == 1e-5


def test_g2_fitter_fit_predict_transform():
    s = simulate_thermal_stream(3000.0, GAMMA, 20.0, seed=21)
    est = G2Fitter(max_delay=10 * TAU_C, exclusion_window=500e-9).fit(s)
    assert est.bin_width_ == pytest.approx(TAU_C / 20, rel=0.3)
    assert est.g2_zero_ == pytest.approx(2.0, abs=0.15)
    assert est.predict([0.0])[0] == pytest.approx(est.g2_zero_)
    other = simulate_thermal_stream(3000.0, GAMMA, 5.0, seed=22)
    curve = est.transform(other)
    assert curve.tau.shape == est.curve_.tau.shape


def test_g2_fitter_errors():
    with pytest.raises(NotFittedError):
        G2Fitter().predict([0.0])
    with pytest.raises(ValidationError):
        G2Fitter().fit(np.arange(10))


def test_raman_thermometer():
    cav, mode = reference_cavity(), reference_mode()
    cfg = OptomechanicalConfig(cav, mode, drive_for_gamma_opt(hz(255.0), cav, mode))
    det = DetectionChain.from_total(0.025)
    base = FilterChain.identical()
    s = simulate_sideband_stream(cfg, base.centered_at(-mode.omega_m), det, "Stokes", 100.0, 1)
    a = simulate_sideband_stream(cfg, base.centered_at(mode.omega_m), det, "anti-Stokes",
                                 100.0, 2)
    est = RamanThermometer().fit((s, a))
    assert abs(est.n_est_ - 2.077) < 4 * est.sigma_n_
    with pytest.raises(ValidationError):
        RamanThermometer().fit(s)


def test_bath_temperature_regressor():
    cav, mode = reference_cavity(), reference_mode()
    g = np.geomspace(hz(255.0), hz(11e3), 8)
    n = occupancy_model(g, 8.8, cav, mode)
    reg = BathTemperatureRegressor().fit(g[:, None], n, sample_weight=1 / (0.01 * n) ** 2)
    assert reg.temperature_ == pytest.approx(8.8, rel=1e-6)
    assert np.allclose(reg.predict(g), n, rtol=1e-6)
    assert reg.score(g[:, None], n) == pytest.approx(1.0)
    assert clone(reg).get_params()["bounds"] == (0.1, 1000.0)
    with pytest.raises(ValidationError):
        reg.fit(np.ones((3, 2)), n[:3])
    with pytest.raises(ValidationError):
        reg.fit(g, n, sample_weight=np.zeros_like(n))
