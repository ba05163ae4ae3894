"""Synthetic single-photon click streams.

Thermal (chaotic) light is generated as a doubly stochastic Poisson process:
a complex Ornstein-Uhlenbeck field ``alpha(t)`` with amplitude decay rate
``gamma_opt / 2`` sets the intensity ``mean_rate * |alpha|^2``, whose
autocorrelation is ``1 + exp(-gamma_opt |tau|)``. Detector effects (dark
counts, afterpulsing, dead time) are layered on afterwards.

Timestamps are integer nanoseconds.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.signal import lfilter

from .exceptions import StepSizeError, ValidationError
from .filters import sideband_clipping
from .rates import predict_rates
from .validation import (
    check_fraction,
    check_positive,
    check_seed,
    check_timestamps_ns,
)

NS = 1_000_000_000

CHANNELS = ("Stokes", "anti-Stokes", "locking-diagnostic")

# tags for the optional per-click source array
SIGNAL, DARK, AFTERPULSE = 0, 1, 2

DEFAULT_MAX_STEPS = 400_000_000
_CHUNK = 1 << 21

# reference detection budget: cavity outcoupling, fiber, filter cavities,
# filter in/out coupling, SPCM
REFERENCE_EFFICIENCIES = {
    "outcoupling": 0.75,
    "fiber": 0.60,
    "filter_cavities": 0.30,
    "filter_coupling": 0.50,
    "detector": 0.35,
}


@dataclass(frozen=True)
class DetectionChain:
    """Detection efficiency budget and detector non-idealities.

    ``efficiency_total`` is the product of ``component_breakdown``.
    """

    component_breakdown: dict = field(default_factory=lambda: {"total": 1.0})
    dark_rate: float = 0.0
    dead_time: float = 50e-9
    afterpulse_prob: float = 0.0
    afterpulse_delay: float = 200e-9

    def __post_init__(self):
        for name, value in self.component_breakdown.items():
            check_fraction(value, f"efficiency component {name!r}")
        check_positive(self.dark_rate, "dark_rate", allow_zero=True)
        check_positive(self.dead_time, "dead_time", allow_zero=True)
        check_fraction(self.afterpulse_prob, "afterpulse_prob")
        check_positive(self.afterpulse_delay, "afterpulse_delay")

    @property
    def efficiency_total(self):
        return math.prod(self.component_breakdown.values())

    @classmethod
    def from_total(cls, efficiency, **kwargs):
        return cls({"total": float(efficiency)}, **kwargs)

    @classmethod
    def reference(cls, **kwargs):
        kwargs.setdefault("dark_rate", 15.5)
        return cls(dict(REFERENCE_EFFICIENCIES), **kwargs)


@dataclass(frozen=True)
class ClickStream:
    """Time-ordered detection events of one channel.

    ``sources`` optionally tags each click as SIGNAL, DARK or AFTERPULSE; it
    is simulation truth and is not serialized.
    """

    timestamps_ns: np.ndarray
    duration: float
    channel_label: str = "anti-Stokes"
    seed: int = None
    truth_metadata: dict = field(default_factory=dict)
    sources: np.ndarray = None

    def __post_init__(self):
        check_positive(self.duration, "duration")
        t = check_timestamps_ns(self.timestamps_ns, self.duration_ns)
        t.setflags(write=False)
        object.__setattr__(self, "timestamps_ns", t)
        if self.sources is not None:
            s = np.asarray(self.sources, dtype=np.int8)
            if s.shape != t.shape:
                raise ValidationError("sources must match timestamps")
            object.__setattr__(self, "sources", s)
        if self.channel_label not in CHANNELS:
            raise ValidationError(f"channel must be one of {CHANNELS}, got {self.channel_label!r}")

    @property
    def duration_ns(self):
        return int(round(self.duration * NS))

    @property
    def times(self):
        """Click times in seconds."""
        return self.timestamps_ns / NS

    @property
    def n_clicks(self):
        return int(self.timestamps_ns.size)

    @property
    def rate(self):
        return self.n_clicks / self.duration

    def _subset(self, mask, **changes):
        sources = None if self.sources is None else self.sources[mask]
        return replace(self, timestamps_ns=self.timestamps_ns[mask], sources=sources, **changes)

    def merge(self, other):
        """Superpose two streams of equal duration (coincident clicks collapse)."""
        if other.duration != self.duration:
            raise ValidationError("can only merge streams of equal duration")
        t = np.concatenate([self.timestamps_ns, other.timestamps_ns])
        if self.sources is not None and other.sources is not None:
            s = np.concatenate([self.sources, other.sources])
        else:
            s = None
        t, s = _sorted_unique(t, s)
        return replace(self, timestamps_ns=t, sources=s)


def _sorted_unique(t, sources=None):
    order = np.argsort(t, kind="stable")
    t = t[order]
    keep = np.ones(t.size, dtype=bool)
    keep[1:] = np.diff(t) > 0
    if sources is not None:
        sources = sources[order][keep]
    return t[keep], sources


def _rng(seed):
    return np.random.default_rng(seed)


def _poisson_times(rate, duration, rng):
    n = rng.poisson(rate * duration)
    return np.sort(rng.random(n)) * duration


def thermal_step(mean_rate, gamma_opt):
    """Largest admissible field-update step for the given rate and bandwidth."""
    return min(1.0 / (50.0 * mean_rate * 3.0), 2.0 * math.pi / (50.0 * gamma_opt))


def _thermal_times(mean_rate, gamma_opt, duration, rng, max_steps):
    dt_max = thermal_step(mean_rate, gamma_opt)
    n_steps = math.ceil(duration / dt_max)
    if n_steps > max_steps:
        raise StepSizeError(
            f"{n_steps} field steps needed (max {max_steps}); shorten the duration "
            "or raise max_steps"
        )
    dt = duration / n_steps
    decay = math.exp(-0.5 * gamma_opt * dt)
    kick = math.sqrt(-math.expm1(-gamma_opt * dt))
    inv_sqrt2 = 1.0 / math.sqrt(2.0)

    alpha = complex(rng.standard_normal(), rng.standard_normal()) * inv_sqrt2
    out = []
    done = 0
    while done < n_steps:
        m = min(_CHUNK, n_steps - done)
        xi = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * inv_sqrt2
        field_, zf = lfilter([kick], [1.0, -decay], xi, zi=[decay * alpha])
        alpha = field_[-1]
        expected = mean_rate * dt * (field_.real ** 2 + field_.imag ** 2)
        cum = np.cumsum(expected)
        total = cum[-1]
        k = rng.poisson(total)
        if k:
            u = np.sort(rng.random(k)) * total
            step = np.searchsorted(cum, u, side="right")
            step = np.minimum(step, m - 1)
            before = cum[step] - expected[step]
            frac = (u - before) / expected[step]
            out.append((done + step + np.clip(frac, 0.0, 1.0)) * dt)
        done += m
    if not out:
        return np.empty(0), dt, n_steps
    return np.concatenate(out), dt, n_steps


def _to_ns(times, duration):
    t = np.floor(np.asarray(times) * NS).astype(np.int64)
    return np.clip(t, 0, int(round(duration * NS)))


def simulate_thermal_stream(mean_rate, gamma_opt, duration, detection=None, seed=None,
                            *, channel="anti-Stokes", max_steps=DEFAULT_MAX_STEPS):
    """Thermal click stream with detector effects.

    Parameters
    ----------
    mean_rate : float
        Detected signal rate (counts/s), excluding dark counts.
    gamma_opt : float
        Intensity correlation decay rate (rad/s); ``math.inf`` gives a
        coherent (Poisson) stream.
    duration : float
        Stream length in seconds.
    detection : DetectionChain, optional
        Detector imperfections to add. Its efficiency is *not*
        applied here; ``mean_rate`` is already a detected rate.
    seed : int, optional

    Returns
    -------
    ClickStream
    """
    check_positive(mean_rate, "mean_rate")
    check_positive(duration, "duration")
    gamma_opt = check_positive(gamma_opt, "gamma_opt")
    seed = check_seed(seed)
    detection = detection or DetectionChain(dead_time=0.0)
    sig_ss, dark_ss, ap_ss = np.random.SeedSequence(seed).spawn(3)

    truth = {
        "mean_rate_hz": float(mean_rate),
        "gamma_opt_rad_s": float(gamma_opt),
        "dark_rate_hz": detection.dark_rate,
        "dark_fraction": detection.dark_rate / (mean_rate + detection.dark_rate),
        "dead_time_s": detection.dead_time,
    }
    if math.isinf(gamma_opt):
        signal = _poisson_times(mean_rate, duration, _rng(sig_ss))
    else:
        signal, dt, n_steps = _thermal_times(
            mean_rate, gamma_opt, duration, _rng(sig_ss), max_steps
        )
        truth.update(step_s=dt, n_steps=n_steps)
    return _assemble(signal, duration, detection, dark_ss, ap_ss, channel, seed, truth)


def _assemble(signal, duration, detection, dark_ss, ap_ss, channel, seed, truth):
    dark = _poisson_times(detection.dark_rate, duration, _rng(dark_ss))
    t = np.concatenate([_to_ns(signal, duration), _to_ns(dark, duration)])
    src = np.concatenate([
        np.full(signal.size, SIGNAL, np.int8), np.full(dark.size, DARK, np.int8)
    ])
    t, src = _sorted_unique(t, src)
    stream = ClickStream(t, duration, channel, seed, truth, src)
    if detection.afterpulse_prob > 0:
        stream = add_afterpulses(stream, detection.afterpulse_prob,
                                 detection.afterpulse_delay, detection.dead_time, ap_ss)
    return apply_dead_time(stream, detection.dead_time)


def add_afterpulses(stream, prob, mean_delay, dead_time, seed):
    """Each click spawns an afterpulse with probability ``prob``, delayed by
    ``dead_time`` plus an exponential of mean ``mean_delay``."""
    rng = _rng(seed)
    t = stream.timestamps_ns
    parents = t[rng.random(t.size) < prob]
    delay = dead_time + rng.exponential(mean_delay, parents.size)
    extra = parents + np.ceil(delay * NS).astype(np.int64)
    extra = extra[extra <= stream.duration_ns]
    src = stream.sources if stream.sources is not None else np.zeros(t.size, np.int8)
    merged, msrc = _sorted_unique(
        np.concatenate([t, extra]),
        np.concatenate([src, np.full(extra.size, AFTERPULSE, np.int8)]),
    )
    return replace(stream, timestamps_ns=merged, sources=msrc)


def apply_dead_time(stream, dead_time):
    """Non-paralyzable dead time: keep a click only if it comes at least
    ``dead_time`` after the previous *kept* click."""
    check_positive(dead_time, "dead_time", allow_zero=True)
    d = int(round(dead_time * NS))
    t = stream.timestamps_ns
    if d == 0 or t.size < 2:
        return stream
    candidates = np.flatnonzero(np.diff(t) < d) + 1
    if candidates.size == 0:
        return stream
    keep = np.ones(t.size, dtype=bool)
    last = t[0]
    for j in candidates:
        if keep[j - 1]:
            last = t[j - 1]
        if t[j] - last < d:
            keep[j] = False
        else:
            last = t[j]
    return stream._subset(keep)


def thin_by_efficiency(stream, eta, seed=None):
    """Keep each click independently with probability ``eta``."""
    eta = check_fraction(eta, "eta")
    keep = _rng(check_seed(seed)).random(stream.n_clicks) < eta
    return stream._subset(keep)


def detected_sideband_rates(config, chain, detection, *, n_bar=None):
    """Mean detected ``(stokes, antistokes)`` signal rates, dark counts excluded.

    Sideband flux times total efficiency times the filter clipping loss of
    the optically broadened line.
    """
    pred = predict_rates(config.cavity, config.mode, config.drive, n_bar=n_bar)
    clip = sideband_clipping(chain, pred.gamma_opt)
    scale = detection.efficiency_total * clip
    return pred.flux_stokes * scale, pred.flux_antistokes * scale, pred


def simulate_sideband_stream(config, chain, detection, channel, duration, seed=None,
                             *, n_bar=None, max_steps=DEFAULT_MAX_STEPS):
    """One filtered sideband as a click stream (thermal statistics at ``gamma_opt``)."""
    if channel not in ("Stokes", "anti-Stokes"):
        raise ValidationError(f"channel must be 'Stokes' or 'anti-Stokes', got {channel!r}")
    check_positive(duration, "duration")
    seed = check_seed(seed)
    rate_s, rate_as, pred = detected_sideband_rates(config, chain, detection, n_bar=n_bar)
    if pred.gamma_opt <= 0:
        raise ValidationError("configuration gives no optical damping")
    rate = rate_s if channel == "Stokes" else rate_as
    sig_ss, dark_ss, ap_ss = np.random.SeedSequence(seed).spawn(3)
    truth = {
        "mean_rate_hz": rate,
        "gamma_opt_rad_s": pred.gamma_opt,
        "n_bar": pred.n_bar,
        "dark_rate_hz": detection.dark_rate,
        "dark_fraction": detection.dark_rate / (rate + detection.dark_rate)
        if rate + detection.dark_rate > 0 else 0.0,
        "efficiency_total": detection.efficiency_total,
        "dead_time_s": detection.dead_time,
    }
    if rate > 0:
        signal, dt, n_steps = _thermal_times(
            rate, pred.gamma_opt, duration, _rng(sig_ss), max_steps
        )
        truth.update(step_s=dt, n_steps=n_steps)
    else:
        signal = np.empty(0)
    return _assemble(signal, duration, detection, dark_ss, ap_ss, channel, seed, truth)


def simulate_two_sideband_experiment(config, chain, detection, duration_per_side, seed=None,
                                     *, n_bar=None, max_steps=DEFAULT_MAX_STEPS):
    """Stokes and anti-Stokes streams, one filter setting after the other.

    Returns ``(stokes, antistokes)``; the two use independent child seeds.
    """
    seed = check_seed(seed)
    s_seed, as_seed = (
        int(ss.generate_state(1)[0]) for ss in np.random.SeedSequence(seed).spawn(2)
    )
    stokes = simulate_sideband_stream(
        config, chain.centered_at(-config.mode.omega_m), detection, "Stokes",
        duration_per_side, s_seed, n_bar=n_bar, max_steps=max_steps,
    )
    antistokes = simulate_sideband_stream(
        config, chain.centered_at(config.mode.omega_m), detection, "anti-Stokes",
        duration_per_side, as_seed, n_bar=n_bar, max_steps=max_steps,
    )
    return stokes, antistokes
