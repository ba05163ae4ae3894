"""Estimator-style front ends (``fit`` / ``predict`` / ``get_params``).

Thin wrappers so the analyses compose with scikit-learn tooling such as
``clone`` and parameter grids. The functional API in
:mod:`phononcount.correlation` and :mod:`phononcount.thermometry` does the
work.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .clicks import ClickStream
from .correlation import build_histogram, fit_g2, normalize_g2, pilot_bin_width
from .exceptions import ValidationError
from .params import reference_cavity, reference_mode
from .thermometry import fit_bath_temperature, occupancy_model, thermometry_from_streams


class G2Fitter(BaseEstimator):
    """Bunching fit of the normalised pair histogram of one click stream.

    Parameters
    ----------
    max_delay : float
        Largest pair delay histogrammed (s).
    bin_width : float or None
        Bin width (s). ``None`` picks ``tau_c / 20`` from a coarse pilot fit.
    exclusion_window : float
        Delays up to this value are dropped (s); use at least the dead time.
    normalization : {"global", "tail"}
    tail_start : float or None
        Start of the normalisation tail for ``normalization="tail"``.
    weighting : {"pearson", "sigma"}
    """

    def __init__(self, max_delay=1e-3, bin_width=None, exclusion_window=0.0,
                 normalization="global", tail_start=None, weighting="pearson"):
        self.max_delay = max_delay
        self.bin_width = bin_width
        self.exclusion_window = exclusion_window
        self.normalization = normalization
        self.tail_start = tail_start
        self.weighting = weighting

    def fit(self, X, y=None):
        if not isinstance(X, ClickStream):
            raise ValidationError("G2Fitter.fit expects a ClickStream")
        bw = self.bin_width
        if bw is None:
            bw = pilot_bin_width(X, self.max_delay, self.exclusion_window)
        self.histogram_ = build_histogram(X, self.max_delay, bw, self.exclusion_window)
        self.curve_ = normalize_g2(self.histogram_, self.normalization, self.tail_start)
        self.fit_ = fit_g2(self.curve_, weighting=self.weighting)
        self.bin_width_ = self.histogram_.bin_width
        self.contrast_a_ = self.fit_.contrast_a
        self.tau_c_ = self.fit_.tau_c
        self.g2_zero_ = self.fit_.g2_zero
        return self

    def predict(self, X):
        """Fitted ``g2`` at delays ``X`` (s)."""
        check_is_fitted(self, "fit_")
        return self.fit_.model(np.asarray(X, dtype=float))

    def transform(self, X):
        """Normalised ``g2`` curve of another stream using the fitted binning."""
        check_is_fitted(self, "fit_")
        hist = build_histogram(X, self.max_delay, self.bin_width_, self.exclusion_window)
        return normalize_g2(hist, self.normalization, self.tail_start)


class RamanThermometer(BaseEstimator):
    """Occupancy from a ``(stokes, antistokes)`` pair of click streams."""

    def __init__(self, cavity=None, mode=None, dark_rate=0.0, dark_sigma=0.0,
                 param_sigmas=None):
        self.cavity = cavity
        self.mode = mode
        self.dark_rate = dark_rate
        self.dark_sigma = dark_sigma
        self.param_sigmas = param_sigmas

    def fit(self, X, y=None):
        try:
            stokes, antistokes = X
        except (TypeError, ValueError):
            raise ValidationError("expected a (stokes, antistokes) pair of streams") from None
        self.result_ = thermometry_from_streams(
            stokes, antistokes,
            self.cavity or reference_cavity(), self.mode or reference_mode(),
            self.dark_rate, self.dark_sigma, self.param_sigmas,
        )
        self.n_est_ = self.result_.n_est
        self.sigma_n_ = self.result_.sigma_n
        return self


class BathTemperatureRegressor(RegressorMixin, BaseEstimator):
    """Weighted fit of occupancy versus optical damping for the bath temperature.

    ``X`` holds ``gamma_opt`` values (rad/s, one column or 1-D), ``y`` the
    measured occupancies and ``sample_weight`` their inverse variances.
    """

    def __init__(self, cavity=None, mode=None, bounds=(0.1, 1000.0)):
        self.cavity = cavity
        self.mode = mode
        self.bounds = bounds

    def _x(self, X):
        x = np.asarray(X, dtype=float)
        if x.ndim == 2:
            if x.shape[1] != 1:
                raise ValidationError("X must have a single gamma_opt column")
            x = x[:, 0]
        return x

    def fit(self, X, y, sample_weight=None):
        x = self._x(X)
        y = np.asarray(y, dtype=float)
        if sample_weight is None:
            sigma = np.ones_like(y)
        else:
            w = np.asarray(sample_weight, dtype=float)
            if np.any(w <= 0):
                raise ValidationError("sample weights must be positive")
            sigma = 1.0 / np.sqrt(w)
        self.cavity_ = self.cavity or reference_cavity()
        self.mode_ = self.mode or reference_mode()
        self.result_ = fit_bath_temperature(x, y, sigma, self.cavity_, self.mode_, self.bounds)
        self.temperature_ = self.result_.temperature
        self.temperature_sigma_ = self.result_.sigma
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return occupancy_model(self._x(X), self.temperature_, self.cavity_, self.mode_)
