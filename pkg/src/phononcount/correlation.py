"""Single-detector intensity correlations: pair-delay histograms, g2
normalisation and the exponential bunching fit.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import minimize_scalar

from .clicks import NS
from .exceptions import ConvergenceError, EmptyStreamError, ValidationError
from .validation import check_positive


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Counts of ordered click pairs binned by delay.

    Bins are half-open ``(lo, hi]`` and start at ``exclusion_window``; delays
    inside the exclusion window are never counted.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    total_clicks: int
    duration: float
    exclusion_window: float = 0.0

    @property
    def bin_width(self):
        return float(self.bin_edges[1] - self.bin_edges[0])

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def max_delay(self):
        return float(self.bin_edges[-1])


def _edges_ns(max_delay, bin_width, exclusion_window):
    check_positive(bin_width, "bin_width")
    check_positive(exclusion_window, "exclusion_window", allow_zero=True)
    if max_delay < bin_width:
        raise ValidationError("max_delay must be >= bin_width")
    bw = int(round(bin_width * NS))
    excl = int(round(exclusion_window * NS))
    hi = int(round(max_delay * NS))
    if bw < 1:
        raise ValidationError("bin_width below the 1 ns timestamp resolution")
    n_bins = (hi - excl) // bw
    if n_bins < 1:
        raise ValidationError("no delay bins between exclusion_window and max_delay")
    return excl + bw * np.arange(n_bins + 1, dtype=np.int64)


def build_histogram(stream, max_delay, bin_width, exclusion_window=0.0):
    """Histogram of delays ``t_j - t_i`` over all pairs ``i < j``.

    Walks lag by lag and keeps only the start indices whose previous lag was
    still inside ``max_delay``, so the cost is linear in clicks times the
    mean number of partners per window.
    """
    t = stream.timestamps_ns
    if t.size < 2:
        raise EmptyStreamError("need at least 2 clicks for a coincidence histogram")
    edges = _edges_ns(max_delay, bin_width, exclusion_window)
    lo, hi, bw = edges[0], edges[-1], edges[1] - edges[0]
    n_bins = edges.size - 1
    counts = np.zeros(n_bins, dtype=np.int64)
    active = np.arange(t.size - 1)
    lag = 1
    while active.size:
        d = t[active + lag] - t[active]
        inside = d <= hi
        sel = d[inside & (d > lo)]
        if sel.size:
            counts += np.bincount((sel - lo - 1) // bw, minlength=n_bins)
        active = active[inside]
        lag += 1
        active = active[active + lag < t.size]
    return CoincidenceHistogram(
        bin_edges=edges / NS,
        counts=counts,
        total_clicks=int(t.size),
        duration=stream.duration,
        exclusion_window=lo / NS,
    )


@dataclass(frozen=True)
class G2Curve:
    """Normalised correlation per delay bin.

    ``accidentals`` (expected pair counts for uncorrelated light) is kept when
    known so fits can weight by the model variance instead of the noisy
    observed counts.
    """

    tau: np.ndarray
    g2: np.ndarray
    sigma: np.ndarray
    bin_width: float
    max_delay: float
    counts: np.ndarray = None
    accidentals: np.ndarray = None


def normalize_g2(hist, method="global", tail_start=None):
    """Divide pair counts by the accidental-coincidence expectation.

    ``method="global"`` uses ``r^2 (T - tau) dtau`` with ``r = N / T``.
    ``method="tail"`` instead scales to the mean of bins with
    ``tau > tail_start``. Per-bin sigma is ``sqrt(counts) / accidentals``
    with a one-count floor so empty bins keep a finite weight.
    """
    if hist.total_clicks < 2:
        raise EmptyStreamError("need at least 2 clicks")
    tau = hist.centers
    bw = hist.bin_width
    exposure = (hist.duration - tau) * bw
    if np.any(exposure <= 0):
        raise ValidationError("delays reach the stream duration; shorten max_delay")
    counts = hist.counts.astype(float)
    if method == "global":
        rate = hist.total_clicks / hist.duration
        if rate <= 0:
            raise ValidationError("zero count rate")
        acc = rate * rate * exposure
    elif method == "tail":
        if tail_start is None:
            raise ValidationError("tail normalisation needs tail_start")
        tail = tau > tail_start
        if not tail.any() or counts[tail].sum() == 0:
            raise ValidationError("no counts in the normalisation tail")
        acc = exposure * counts[tail].sum() / exposure[tail].sum()
    else:
        raise ValidationError(f"unknown normalisation {method!r}")
    g2 = counts / acc
    sigma = np.sqrt(np.maximum(counts, 1.0)) / acc
    return G2Curve(tau, g2, sigma, bw, hist.max_delay, hist.counts.copy(), acc)


@dataclass(frozen=True)
class G2Fit:
    """Fit of ``g2(tau) = 1 + A exp(-2 tau / tau_c)``."""

    contrast_a: float
    tau_c: float
    covariance: np.ndarray
    chi2: float
    dof: int
    tau_c_constrained: bool = True
    weighting: str = "pearson"
    uncertainties: dict = field(default_factory=dict)

    @property
    def g2_zero(self):
        return 1.0 + self.contrast_a

    def model(self, tau):
        return 1.0 + self.contrast_a * np.exp(-2.0 * np.abs(np.asarray(tau, float)) / self.tau_c)

    def band(self, tau, n_sigma=3.0):
        """Lower and upper confidence bounds of the fitted curve."""
        tau = np.abs(np.asarray(tau, dtype=float))
        e = np.exp(-2.0 * tau / self.tau_c)
        grad = np.stack([e, self.contrast_a * e * 2.0 * tau / self.tau_c ** 2], axis=-1)
        cov = np.where(np.isfinite(self.covariance), self.covariance, 0.0)
        var = np.einsum("...i,ij,...j->...", grad, cov, grad)
        if not self.tau_c_constrained:
            var = e * e * self.covariance[0, 0]
        half = n_sigma * np.sqrt(np.maximum(var, 0.0))
        m = self.model(tau)
        return m - half, m + half


def _profile(log_tau_c, tau, y, w):
    e = np.exp(-2.0 * tau / math.exp(log_tau_c))
    see = np.dot(w, e * e)
    a = np.dot(w, y * e) / see if see > 0 else 0.0
    r = y - a * e
    return float(np.dot(w, r * r)), a


def _fit_once(tau, y, w, lo, hi, n_grid):
    grid = np.linspace(math.log(lo), math.log(hi), n_grid)
    chi = np.array([_profile(x, tau, y, w)[0] for x in grid])
    k = int(np.argmin(chi))
    chi0 = float(np.dot(w, y * y))
    if np.ptp(chi) <= 1e-12 * max(chi0, 1.0):
        return grid[k], _profile(grid[k], tau, y, w)[1], False
    if k == 0 or k == n_grid - 1:
        return grid[k], _profile(grid[k], tau, y, w)[1], None
    res = minimize_scalar(
        lambda x: _profile(x, tau, y, w)[0],
        bracket=(grid[k - 1], grid[k], grid[k + 1]),
        method="brent",
        tol=1e-12,
    )
    x = float(res.x)
    return x, _profile(x, tau, y, w)[1], True


def fit_g2(curve, *, weighting="pearson", n_grid=121, max_iter=8, significance=9.0):
    """Weighted least-squares bunching fit.

    For each trial ``tau_c`` the contrast is solved in closed form; the
    profile chi-square is scanned on a log grid over
    ``[bin_width, 10 * max_delay]`` and refined with Brent's method.

    ``weighting="pearson"`` (default, needs ``curve.accidentals``) iterates
    with the model variance ``g2_model / accidentals``; observed-count
    weights bias the contrast low at ~10 counts per bin.
    ``weighting="sigma"`` uses ``curve.sigma`` as given.

    A flat curve returns ``A ~ 0`` with ``tau_c_constrained=False``. A
    minimum on the bracket edge raises :class:`ConvergenceError` unless the
    contrast is insignificant (chi-square gain below ``significance``).
    """
    tau = np.asarray(curve.tau, dtype=float)
    y = np.asarray(curve.g2, dtype=float) - 1.0
    sigma = np.asarray(curve.sigma, dtype=float)
    if tau.size < 5:
        raise ValidationError("need at least 5 bins to fit")
    if np.any(sigma <= 0):
        raise ValidationError("sigmas must be positive")
    if weighting == "pearson" and curve.accidentals is None:
        weighting = "sigma"
    if weighting not in ("pearson", "sigma"):
        raise ValidationError(f"unknown weighting {weighting!r}")
    lo, hi = curve.bin_width, 10.0 * curve.max_delay

    if weighting == "pearson":
        acc = np.asarray(curve.accidentals, dtype=float)
        w = acc.copy()
    else:
        w = 1.0 / sigma ** 2

    log_tc, a, status = _fit_once(tau, y, w, lo, hi, n_grid)
    if weighting == "pearson":
        for _ in range(max_iter):
            model = np.maximum(1.0 + a * np.exp(-2.0 * tau / math.exp(log_tc)), 1e-6)
            w = acc / model
            new_log, new_a, status = _fit_once(tau, y, w, lo, hi, n_grid)
            done = abs(new_log - log_tc) < 1e-10 and abs(new_a - a) < 1e-10
            log_tc, a = new_log, new_a
            if done:
                break

    tau_c = math.exp(log_tc)
    e = np.exp(-2.0 * tau / tau_c)
    chi2 = float(np.dot(w, (y - a * e) ** 2))
    sigma_a_fixed = 1.0 / math.sqrt(np.dot(w, e * e))

    if status is None:
        gain = float(np.dot(w, y * y)) - chi2
        if gain > significance:
            raise ConvergenceError(
                f"g2 fit: best tau_c {tau_c:.4g} s lies on the bracket edge "
                f"[{lo:.4g}, {hi:.4g}] s"
            )
        status = False

    if status:
        jac = np.stack([e, a * e * 2.0 * tau / tau_c ** 2], axis=1)
        info = jac.T @ (w[:, None] * jac)
        try:
            cov = np.linalg.inv(info)
        except np.linalg.LinAlgError:
            cov = np.array([[sigma_a_fixed ** 2, 0.0], [0.0, np.inf]])
            status = False
    else:
        cov = np.array([[sigma_a_fixed ** 2, 0.0], [0.0, np.inf]])

    unc = {
        "contrast_a": math.sqrt(cov[0, 0]),
        "g2_zero": math.sqrt(cov[0, 0]),
        "tau_c": math.sqrt(cov[1, 1]) if np.isfinite(cov[1, 1]) else math.inf,
    }
    return G2Fit(
        contrast_a=float(a),
        tau_c=tau_c,
        covariance=cov,
        chi2=chi2,
        dof=int(tau.size - 2),
        tau_c_constrained=bool(status),
        weighting=weighting,
        uncertainties=unc,
    )


def pilot_bin_width(stream, max_delay, exclusion_window=0.0, n_pilot_bins=100, fraction=20):
    """Bin width ``tau_c / fraction`` from a coarse pilot fit."""
    hist = build_histogram(stream, max_delay, max_delay / n_pilot_bins, exclusion_window)
    fit = fit_g2(normalize_g2(hist))
    if not fit.tau_c_constrained:
        return max_delay / n_pilot_bins
    return max(fit.tau_c / fraction, 1e-9)


def diluted_contrast(signal_rate, dark_rate):
    """Bunching contrast left after uncorrelated background: ``(S / (S + D))**2``."""
    check_positive(signal_rate, "signal_rate", allow_zero=True)
    check_positive(dark_rate, "dark_rate", allow_zero=True)
    total = signal_rate + dark_rate
    if total <= 0:
        raise ValidationError("signal_rate + dark_rate must be positive")
    return (signal_rate / total) ** 2
