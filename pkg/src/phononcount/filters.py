"""Cascaded Fabry-Perot filter model.

A chain of Lorentzian stages locked to a common centre ``center_detuning``
(measured from the drive). ``center_detuning = +omega_m`` selects the
anti-Stokes sideband, ``-omega_m`` the Stokes one.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad, trapezoid

from .exceptions import GridCoverageError, ValidationError
from .params import hz
from .validation import check_fraction, check_increasing, check_positive

# passband half-width (in units of the widest stage linewidth) a PSD grid must cover
COVERAGE_LINEWIDTHS = 10.0


def lorentzian(omega, kf):
    """Single-stage intensity transmission ``1 / (1 + (2 omega / kf)^2)``, peak 1."""
    omega = np.asarray(omega, dtype=float)
    out = 1.0 / (1.0 + (2.0 * omega / kf) ** 2)
    return out if out.ndim else float(out)


def lorentzian_line(omega, center, fwhm, area=1.0):
    """Lorentzian spectral line of full width ``fwhm`` integrating to ``area``."""
    omega = np.asarray(omega, dtype=float)
    hw = fwhm / 2.0
    return area * hw / np.pi / ((omega - center) ** 2 + hw * hw)


@dataclass(frozen=True)
class FilterStage:
    linewidth_kf: float
    peak_transmission: float = 1.0

    def __post_init__(self):
        check_positive(self.linewidth_kf, "linewidth_kf")
        check_fraction(self.peak_transmission, "peak_transmission", allow_zero=False)


@dataclass(frozen=True)
class FilterChain:
    stages: tuple
    center_detuning: float = 0.0
    chain_insertion: float = 1.0

    def __post_init__(self):
        stages = tuple(
            s if isinstance(s, FilterStage) else FilterStage(float(s)) for s in self.stages
        )
        if not stages:
            raise ValidationError("a filter chain needs at least one stage")
        object.__setattr__(self, "stages", stages)
        check_fraction(self.chain_insertion, "chain_insertion", allow_zero=False)

    @classmethod
    def identical(cls, n_stages=4, linewidth=hz(30e3), center_detuning=0.0,
                  peak_transmission=1.0, chain_insertion=1.0):
        stage = FilterStage(linewidth, peak_transmission)
        return cls((stage,) * n_stages, center_detuning, chain_insertion)

    @property
    def linewidths(self):
        return np.array([s.linewidth_kf for s in self.stages])

    @property
    def peak_transmission(self):
        """Resonant transmission of the whole chain."""
        return self.chain_insertion * float(np.prod([s.peak_transmission for s in self.stages]))

    def centered_at(self, center_detuning):
        return replace(self, center_detuning=float(center_detuning))


def chain_transmission(chain, omega):
    """Intensity transmission of the chain at detuning ``omega`` from the drive."""
    x = np.asarray(omega, dtype=float) - chain.center_detuning
    out = np.full(x.shape, chain.peak_transmission)
    for stage in chain.stages:
        out = out * lorentzian(x, stage.linewidth_kf)
    return out if out.ndim else float(out)


def stage_rejection_db(stage, offset):
    """Rejection of one stage, ``10 log10(1 + (2 offset / kf)^2)`` dB."""
    u = 2.0 * np.asarray(offset, dtype=float) / stage.linewidth_kf
    out = 10.0 * np.log1p(u * u) / np.log(10.0)
    return out if out.ndim else float(out)


def rejection_db(chain, omega):
    """Rejection in dB relative to the resonant peak (positive = attenuation).

    Summed stage by stage in log space so it stays finite far outside the
    passband, where the linear transmission underflows.
    """
    x = np.asarray(omega, dtype=float) - chain.center_detuning
    out = np.zeros(x.shape)
    for stage in chain.stages:
        out = out + stage_rejection_db(stage, x)
    return out if out.ndim else float(out)


def clipping_factor(gamma_opt, kf):
    """Fraction of a Lorentzian sideband of FWHM ``gamma_opt`` passing a
    four-stage chain of identical linewidth ``kf`` centred on the line.

    Closed form of the overlap integral of L(x)^4 with a unit-area line.
    """
    g = np.asarray(gamma_opt, dtype=float)
    if np.any(g < 0):
        raise ValidationError("gamma_opt must be >= 0")
    check_positive(kf, "kf")
    num = kf * (5 * g ** 3 + 20 * g ** 2 * kf + 29 * g * kf ** 2 + 16 * kf ** 3)
    out = num / (16.0 * (g + kf) ** 4)
    return out if out.ndim else float(out)


def group_delay(chain):
    """On-resonance group delay of the chain, sum of ``2 / kf`` over stages (s)."""
    return float(np.sum(2.0 / chain.linewidths))


@dataclass(frozen=True)
class PsdTrace:
    """Measured power spectral density in shot-noise units.

    ``frequencies`` in rad/s. ``shot_noise_level`` is a scalar or an array on
    the same grid.
    """

    frequencies: np.ndarray
    psd: np.ndarray
    shot_noise_level: object = field(default=None)

    def __post_init__(self):
        f = check_increasing(self.frequencies, "frequencies")
        p = np.asarray(self.psd, dtype=float)
        if p.shape != f.shape:
            raise ValidationError("psd and frequencies must have the same length")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValidationError("psd must be finite and >= 0")
        sn = self.shot_noise_level
        if sn is None:
            sn = float(np.percentile(p, 5))
        elif np.ndim(sn):
            sn = np.asarray(sn, dtype=float)
            if sn.shape != f.shape:
                raise ValidationError("shot-noise column must match the frequency grid")
        else:
            sn = float(sn)
        f.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "psd", p)
        object.__setattr__(self, "shot_noise_level", sn)

    @property
    def excess(self):
        """Shot-noise-subtracted PSD, negatives clipped to zero."""
        return np.clip(self.psd - self.shot_noise_level, 0.0, None)

    def with_shot_noise(self, level):
        return PsdTrace(self.frequencies, self.psd, level)


def check_coverage(chain, psd):
    half = COVERAGE_LINEWIDTHS * float(chain.linewidths.max())
    lo, hi = chain.center_detuning - half, chain.center_detuning + half
    f = psd.frequencies
    if lo < f[0] or hi > f[-1]:
        raise GridCoverageError(
            f"PSD grid [{f[0]:.6g}, {f[-1]:.6g}] rad/s does not cover the passband "
            f"[{lo:.6g}, {hi:.6g}] rad/s"
        )


def predict_count_rate(chain, psd, calibration=1.0):
    """Detected count rate from a measured spectrum.

    Trapezoidal integral of the shot-noise-subtracted PSD weighted by the
    chain transmission, times ``calibration`` (counts/s per SN-unit rad/s).
    """
    check_positive(calibration, "calibration")
    check_coverage(chain, psd)
    weight = chain_transmission(chain, psd.frequencies)
    return calibration * float(trapezoid(psd.excess * weight, psd.frequencies))


def sweep_count_rate(chain, psd, centers, calibration=1.0):
    """Predicted count rate with the chain re-centred at each of ``centers``."""
    return np.array(
        [predict_count_rate(chain.centered_at(c), psd, calibration) for c in np.atleast_1d(centers)]
    )


def fit_calibration(chain, psd, measured_rate):
    """Calibration constant that makes the prediction match one measured rate."""
    check_positive(measured_rate, "measured_rate")
    raw = predict_count_rate(chain, psd, 1.0)
    if raw <= 0:
        raise ValidationError("reference point has no excess PSD; cannot calibrate")
    return measured_rate / raw


def sideband_clipping(chain, gamma_opt):
    """Transmitted fraction of a Lorentzian sideband of FWHM ``gamma_opt``
    centred on the chain.

    Uses the closed form for four identical stages and numerical quadrature
    for any other chain.
    """
    kf = chain.linewidths
    if kf.size == 4 and np.all(kf == kf[0]):
        return clipping_factor(gamma_opt, kf[0])
    if gamma_opt == 0:
        return 1.0
    def integrand(x):
        out = lorentzian_line(x, 0.0, gamma_opt)
        for k in kf:
            out = out * lorentzian(x, k)
        return out

    scale = float(kf.min())
    val = 0.0
    edges = [0.0, scale, 10 * scale, 1000 * scale, np.inf]
    for a, b in zip(edges[:-1], edges[1:]):
        val += quad(integrand, a, b, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
    return 2.0 * val
