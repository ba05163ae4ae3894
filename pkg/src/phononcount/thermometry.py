"""Raman-ratio thermometry and bath-temperature fitting."""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy import constants
from scipy.optimize import minimize_scalar

from .exceptions import (
    ConvergenceError,
    NonPositiveRateError,
    UnphysicalRatioError,
    ValidationError,
)
from .rates import cavity_asymmetry
from .validation import check_positive


def raman_ratio(counts_as, t_as, counts_s, t_s, dark_rate=0.0, dark_sigma=0.0):
    """Dark-subtracted anti-Stokes/Stokes rate ratio and its 1-sigma error.

    Poisson variances of both counts and the dark-rate uncertainty are
    propagated to first order. The same dark estimate is subtracted from both
    channels, so its contribution enters as a covariance.
    """
    for name, c in (("counts_as", counts_as), ("counts_s", counts_s)):
        check_positive(c, name, allow_zero=True)
    check_positive(t_as, "t_as")
    check_positive(t_s, "t_s")
    check_positive(dark_sigma, "dark_sigma", allow_zero=True)
    r_as = counts_as / t_as - dark_rate
    r_s = counts_s / t_s - dark_rate
    if r_as <= 0 or r_s <= 0:
        raise NonPositiveRateError(
            f"dark subtraction leaves non-positive rates (anti-Stokes {r_as:.4g}, "
            f"Stokes {r_s:.4g} counts/s)"
        )
    ratio = r_as / r_s
    var_as = counts_as / t_as ** 2 + dark_sigma ** 2
    var_s = counts_s / t_s ** 2 + dark_sigma ** 2
    cov = dark_sigma ** 2
    rel = var_as / r_as ** 2 + var_s / r_s ** 2 - 2.0 * cov / (r_as * r_s)
    return ratio, ratio * math.sqrt(max(rel, 0.0))


def occupancy_estimate(ratio, cavity, mode):
    """Phonon occupancy implied by a sideband ratio: ``R / (A-/A+ - R)``."""
    r_max = cavity_asymmetry(cavity, mode)
    if ratio >= r_max:
        raise UnphysicalRatioError(
            f"ratio {ratio:.6g} >= cavity asymmetry {r_max:.6g}: occupancy would be infinite"
        )
    if ratio < 0:
        raise UnphysicalRatioError(f"ratio must be >= 0, got {ratio}")
    return ratio / (r_max - ratio)


@dataclass(frozen=True)
class ThermometryResult:
    ratio_r: float
    ratio_sigma: float
    n_est: float
    sigma_n: float
    inputs: dict = field(default_factory=dict)


def occupancy_from_ratio(ratio, ratio_sigma, cavity, mode, param_sigmas=None):
    """Occupancy estimate with propagated uncertainty.

    ``param_sigmas`` may map ``"kappa"``, ``"detuning"`` and ``"omega_m"``
    (rad/s) to 1-sigma errors; their effect is added in quadrature using
    central finite differences.
    """
    n_est = occupancy_estimate(ratio, cavity, mode)
    r_max = cavity_asymmetry(cavity, mode)
    dn_dr = r_max / (r_max - ratio) ** 2
    var = (dn_dr * ratio_sigma) ** 2
    for name, sig in (param_sigmas or {}).items():
        if not sig:
            continue
        if name == "omega_m":
            def shifted(h):
                return occupancy_estimate(ratio, cavity, replace(mode, omega_m=mode.omega_m + h))
        elif name in ("kappa", "detuning"):
            def shifted(h, name=name):
                return occupancy_estimate(
                    ratio, replace(cavity, **{name: getattr(cavity, name) + h}), mode
                )
        else:
            raise ValidationError(f"unknown cavity parameter {name!r}")
        h = 1e-4 * sig
        deriv = (shifted(h) - shifted(-h)) / (2.0 * h)
        var += (deriv * sig) ** 2
    return ThermometryResult(
        ratio_r=float(ratio),
        ratio_sigma=float(ratio_sigma),
        n_est=float(n_est),
        sigma_n=math.sqrt(var),
        inputs={"param_sigmas": dict(param_sigmas or {})},
    )


def thermometry_from_counts(counts_as, t_as, counts_s, t_s, cavity, mode,
                            dark_rate=0.0, dark_sigma=0.0, param_sigmas=None):
    ratio, sigma = raman_ratio(counts_as, t_as, counts_s, t_s, dark_rate, dark_sigma)
    result = occupancy_from_ratio(ratio, sigma, cavity, mode, param_sigmas)
    inputs = dict(
        counts_as=int(counts_as), t_as=float(t_as), counts_s=int(counts_s), t_s=float(t_s),
        dark_rate=float(dark_rate), dark_sigma=float(dark_sigma),
    )
    inputs.update(result.inputs)
    return replace(result, inputs=inputs)


def thermometry_from_streams(stokes, antistokes, cavity, mode, dark_rate=0.0, dark_sigma=0.0,
                             param_sigmas=None):
    """Raman-ratio thermometry on two recorded click streams."""
    return thermometry_from_counts(
        antistokes.n_clicks, antistokes.duration, stokes.n_clicks, stokes.duration,
        cavity, mode, dark_rate, dark_sigma, param_sigmas,
    )


def occupancy_model(gamma_opt, temperature, cavity, mode):
    """Theoretical occupancy versus optical damping at bath temperature ``temperature``.

    The upward rate at each point follows from ``gamma_opt`` and the cavity
    asymmetry: ``A+ = gamma_opt / (A-/A+ - 1)``.
    """
    gamma_opt = np.asarray(gamma_opt, dtype=float)
    r = cavity_asymmetry(cavity, mode)
    a_plus = gamma_opt / (r - 1.0)
    n_th = _n_th(temperature, mode)
    return (a_plus + n_th * mode.gamma_m) / (gamma_opt + mode.gamma_m)


def _n_th(temperature, mode):
    x = constants.hbar * mode.omega_m / (constants.k * temperature)
    return 1.0 / math.expm1(x) if mode.bose_einstein else 1.0 / x


@dataclass(frozen=True)
class TemperatureFit:
    temperature: float
    sigma: float
    chi2: float
    dof: int


def fit_bath_temperature(gamma_opt, n_est, sigma, cavity, mode, bounds=(0.1, 1000.0),
                         n_grid=200):
    """Weighted least-squares bath temperature from (gamma_opt, n_est +- sigma) points.

    Bracketed 1-D search over log T in ``bounds``, polished with Gauss-Newton
    steps; sigma from the curvature at the optimum.
    """
    g = np.atleast_1d(np.asarray(gamma_opt, dtype=float))
    n = np.atleast_1d(np.asarray(n_est, dtype=float))
    s = np.atleast_1d(np.asarray(sigma, dtype=float))
    if not (g.shape == n.shape == s.shape):
        raise ValidationError("input arrays must have equal length")
    if g.size < 1:
        raise ValidationError("need at least one point")
    if np.any(s <= 0):
        raise ValidationError("sigmas must be positive")
    w = 1.0 / s ** 2

    def chi2(log_t):
        r = n - occupancy_model(g, math.exp(log_t), cavity, mode)
        return float(np.dot(w, r * r))

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    grid = np.linspace(lo, hi, n_grid)
    vals = np.array([chi2(x) for x in grid])
    k = int(np.argmin(vals))
    if k == 0 or k == n_grid - 1:
        raise ConvergenceError(
            f"bath temperature fit: no interior minimum in [{bounds[0]}, {bounds[1]}] K"
        )
    res = minimize_scalar(chi2, bracket=(grid[k - 1], grid[k], grid[k + 1]),
                          method="brent", tol=1e-12)
    temp = math.exp(res.x)

    def jac(t):
        h = 1e-6 * t
        return (occupancy_model(g, t + h, cavity, mode)
                - occupancy_model(g, t - h, cavity, mode)) / (2.0 * h)

    for _ in range(3):
        j = jac(temp)
        r = n - occupancy_model(g, temp, cavity, mode)
        step = np.dot(w, j * r) / np.dot(w, j * j)
        temp += step
        if abs(step) <= 1e-15 * temp:
            break
    j = jac(temp)
    return TemperatureFit(
        temperature=float(temp),
        sigma=float(1.0 / math.sqrt(np.dot(w, j * j))),
        chi2=chi2(math.log(temp)),
        dof=int(g.size - 1),
    )
