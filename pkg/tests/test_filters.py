import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from phononcount.exceptions import GridCoverageError, ValidationError
from phononcount.filters import (
    FilterChain,
    FilterStage,
    PsdTrace,
    chain_transmission,
    clipping_factor,
    fit_calibration,
    group_delay,
    lorentzian,
    lorentzian_line,
    predict_count_rate,
    rejection_db,
    sideband_clipping,
    stage_rejection_db,
    sweep_count_rate,
)
from phononcount.params import hz

KF = hz(30e3)


def test_lorentzian_values():
    assert lorentzian(0.0, KF) == 1.0
    assert lorentzian(KF / 2, KF) == pytest.approx(0.5, rel=1e-15)
    assert lorentzian(hz(1.5e6), hz(300.0)) == pytest.approx(1e-8, rel=1e-6)
    assert lorentzian(-3.0, 2.0) == lorentzian(3.0, 2.0)


def test_chain_peak_and_rejection():
    chain = FilterChain.identical(center_detuning=hz(1.48e6))
    assert chain_transmission(chain, hz(1.48e6)) == 1.0
    assert rejection_db(chain, hz(1.48e6)) == 0.0
    far = rejection_db(FilterChain.identical(), hz(1.48e6))
    assert far >= 155.0
    assert far == pytest.approx(159.6, abs=0.1)
    # transmission and rejection agree
    t = chain_transmission(FilterChain.identical(), hz(1.48e6))
    assert -10 * math.log10(t) == pytest.approx(far, abs=1e-9)


def test_nearby_mode_suppression():
    chain = FilterChain.identical()
    assert rejection_db(chain, hz(30e3)) == pytest.approx(40 * math.log10(5), abs=1e-9)
    assert rejection_db(chain, hz(30e3)) == pytest.approx(27.96, abs=0.01)


def test_half_width_rejection():
    single = FilterChain((FilterStage(KF),))
    assert rejection_db(single, KF / 2) == pytest.approx(3.0103, abs=1e-4)
    assert rejection_db(FilterChain.identical(), KF / 2) == pytest.approx(12.0412, abs=1e-4)


def test_single_narrow_stage_80db():
    single = FilterChain((FilterStage(hz(300.0)),))
    assert rejection_db(single, hz(1.5e6)) == pytest.approx(80.0, abs=0.1)


def test_rejection_stays_finite_far_out():
    chain = FilterChain.identical(n_stages=40)
    assert np.isfinite(rejection_db(chain, hz(1e9)))
    assert chain_transmission(chain, hz(1e9)) == 0.0


@given(st.lists(st.floats(1e2, 1e7), min_size=1, max_size=6), st.floats(-1e8, 1e8))
def test_product_rule(widths, omega):
    chain = FilterChain(tuple(FilterStage(w) for w in widths))
    total = sum(stage_rejection_db(s, omega) for s in chain.stages)
    assert rejection_db(chain, omega) == pytest.approx(total, abs=1e-9)


@given(st.floats(0.0, 1e7))
def test_chain_even_and_peaked(x):
    chain = FilterChain.identical(center_detuning=5e6)
    a = chain_transmission(chain, 5e6 + x)
    b = chain_transmission(chain, 5e6 - x)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)
    assert a <= chain_transmission(chain, 5e6)


def test_clipping_values():
    assert clipping_factor(0.0, KF) == 1.0
    assert clipping_factor(KF, KF) == pytest.approx(70 / 256, rel=1e-15)
    assert clipping_factor(hz(11e3), KF) == pytest.approx(0.530, abs=0.001)
    with pytest.raises(ValidationError):
        clipping_factor(-1.0, KF)


@pytest.mark.parametrize("ratio", np.geomspace(1e-3, 1e3, 13))
def test_clipping_matches_mpmath_quadrature(ratio):
    assert clipping_factor(ratio * 1.0, 1.0) == pytest.approx(
        oracles.clipping_quadrature(ratio, 1.0), rel=1e-9
    )


def test_clipping_decreasing():
    g = np.geomspace(1e-3, 1e6, 400) * KF
    c = clipping_factor(g, KF)
    assert np.all(np.diff(c) < 0)
    assert c[-1] < 1e-5


def test_sideband_clipping_general_chain():
    # heterogeneous chain uses quadrature
    chain = FilterChain((FilterStage(KF), FilterStage(2 * KF), FilterStage(KF)))
    g = hz(5e3)

    def f(x):
        return (g / 2) / mpmath.pi / (x * x + g * g / 4) / (1 + (2 * x / KF) ** 2) ** 2 / (
            1 + (x / KF) ** 2)

    ref = float(2 * mpmath.quad(f, [0, g, KF, 10 * KF, mpmath.inf]))
    assert sideband_clipping(chain, g) == pytest.approx(ref, rel=1e-8)
    assert sideband_clipping(FilterChain.identical(), g) == clipping_factor(g, KF)
    assert sideband_clipping(chain, 0.0) == 1.0


def test_group_delay():
    assert group_delay(FilterChain((FilterStage(hz(300.0)),))) == pytest.approx(1.061e-3, rel=1e-3)
    assert group_delay(FilterChain.identical()) == pytest.approx(42.4e-6, rel=1e-3)
    assert group_delay(FilterChain((FilterStage(1e30),))) < 1e-29


def _grid():
    return np.linspace(hz(1.0e6), hz(2.0e6), 400001)


def test_shot_noise_only_gives_zero_rate():
    f = _grid()
    psd = PsdTrace(f, np.full(f.size, 3.0), 3.0)
    chain = FilterChain.identical(center_detuning=hz(1.48e6))
    assert predict_count_rate(chain, psd, 2.0) == 0.0


def test_lorentzian_peak_gives_clipping_factor():
    f = _grid()
    g = hz(2e3)
    center = hz(1.48e6)
    psd = PsdTrace(f, 1.0 + lorentzian_line(f, center, g), 1.0)
    chain = FilterChain.identical(center_detuning=center)
    got = predict_count_rate(chain, psd, 7.0)
    # truncation of the line tails outside the grid is ~ g / (pi * span)
    assert got == pytest.approx(7.0 * clipping_factor(g, KF), rel=2e-4)


def test_off_resonant_peak_is_suppressed():
    f = _grid()
    g = hz(2e3)
    c = hz(1.48e6)
    main = lorentzian_line(f, c, g)
    side = lorentzian_line(f, c + hz(70e3), g)
    chain = FilterChain.identical(center_detuning=c)
    both = predict_count_rate(chain, PsdTrace(f, 1 + main + side, 1.0))
    only = predict_count_rate(chain, PsdTrace(f, 1 + main, 1.0))
    assert (both - only) / both < 0.01


@given(st.floats(0.1, 10.0))
def test_prediction_linear_in_excess(scale):
    f = np.linspace(hz(1.1e6), hz(1.9e6), 8001)
    peak = lorentzian_line(f, hz(1.5e6), hz(5e3))
    chain = FilterChain.identical(center_detuning=hz(1.5e6))
    base = predict_count_rate(chain, PsdTrace(f, 1 + peak, 1.0))
    scaled = predict_count_rate(chain, PsdTrace(f, 1 + scale * peak, 1.0))
    assert scaled == pytest.approx(scale * base, rel=1e-10)


def test_negative_excess_clipped():
    f = np.linspace(hz(1.1e6), hz(1.9e6), 2001)
    psd = PsdTrace(f, np.full(f.size, 0.5), 1.0)
    assert np.all(psd.excess == 0.0)
    assert predict_count_rate(FilterChain.identical(center_detuning=hz(1.5e6)), psd) == 0.0


def test_default_shot_noise_is_low_percentile():
    f = np.linspace(0, 1, 101)
    p = np.linspace(0, 100, 101)
    assert PsdTrace(f, p).shot_noise_level == pytest.approx(5.0)


def test_coverage_error():
    f = np.linspace(hz(1.45e6), hz(1.51e6), 1001)
    psd = PsdTrace(f, np.ones(f.size), 1.0)
    with pytest.raises(GridCoverageError):
        predict_count_rate(FilterChain.identical(center_detuning=hz(1.48e6)), psd)


def test_sweep_and_calibration():
    f = _grid()
    c = hz(1.48e6)
    psd = PsdTrace(f, 1 + lorentzian_line(f, c, hz(1e3), area=5.0), 1.0)
    chain = FilterChain.identical(center_detuning=c)
    cal = fit_calibration(chain, psd, 100.0)
    assert predict_count_rate(chain, psd, cal) == pytest.approx(100.0)
    rates = sweep_count_rate(chain, psd, [c - hz(100e3), c, c + hz(100e3)], cal)
    assert rates[1] == pytest.approx(100.0)
    assert rates[0] == pytest.approx(rates[2], rel=1e-6)
    assert rates[0] < 1e-3 * rates[1]


def test_psd_validation():
    with pytest.raises(ValidationError):
        PsdTrace([0.0, 1.0, 0.5], [1, 1, 1])
    with pytest.raises(ValidationError):
        PsdTrace([0.0, 1.0], [1, -1])
    with pytest.raises(ValidationError):
        PsdTrace([0.0, 1.0], [1, 1], [1, 1, 1])
    psd = PsdTrace([0.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        psd.psd[0] = 3.0


def test_chain_validation():
    with pytest.raises(ValidationError):
        FilterChain(())
    with pytest.raises(ValidationError):
        FilterStage(0.0)
    with pytest.raises(ValidationError):
        FilterStage(1.0, 1.5)
    chain = FilterChain((FilterStage(1.0, 0.5), FilterStage(1.0, 0.5)), chain_insertion=0.8)
    assert chain.peak_transmission == pytest.approx(0.2)
    assert chain_transmission(chain, 0.0) == pytest.approx(0.2)
