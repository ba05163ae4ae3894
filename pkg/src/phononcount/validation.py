"""Input validation helpers shared by the estimators and simulators."""

import numbers

import numpy as np

from .exceptions import ValidationError


def check_positive(value, name, *, allow_zero=False, key_path=None):
    """Return ``value`` as float, raising if it is not (strictly) positive."""
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a number, got {value!r}", key_path)
    if not np.isfinite(value) and value != np.inf:
        raise ValidationError(f"{name} must be finite, got {value}", key_path)
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValidationError(f"{name} must be {bound}, got {value}", key_path)
    return value


def check_fraction(value, name, *, allow_zero=True, key_path=None):
    """Return ``value`` as float in [0, 1] (or (0, 1] with ``allow_zero=False``)."""
    value = check_positive(value, name, allow_zero=allow_zero, key_path=key_path)
    if value > 1:
        raise ValidationError(f"{name} must be <= 1, got {value}", key_path)
    return value


def check_seed(seed):
    if seed is None:
        return None
    if not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValidationError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def check_increasing(x, name, *, strict=True):
    """1-D float array, (strictly) increasing."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} contains non-finite values")
    d = np.diff(x)
    if strict and np.any(d <= 0):
        raise ValidationError(f"{name} must be strictly increasing")
    if not strict and np.any(d < 0):
        raise ValidationError(f"{name} must be non-decreasing")
    return x


def check_timestamps_ns(timestamps, duration_ns=None):
    """Validate integer nanosecond click times.

    Returns an int64 array. Timestamps must be strictly increasing and lie in
    ``[0, duration_ns]``.
    """
    t = np.asarray(timestamps)
    if t.ndim != 1:
        raise ValidationError("timestamps must be one-dimensional")
    if t.size and not np.issubdtype(t.dtype, np.integer):
        if not np.all(np.isfinite(t)) or np.any(t != np.round(t)):
            raise ValidationError("timestamps must be integer nanoseconds")
    t = t.astype(np.int64, copy=False)
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValidationError("timestamps must be strictly increasing")
    if t.size and t[0] < 0:
        raise ValidationError("timestamps must be >= 0")
    if duration_ns is not None and t.size and t[-1] > duration_ns:
        raise ValidationError("timestamps exceed the stream duration")
    return t
