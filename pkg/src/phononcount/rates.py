"""Raman scattering rates and steady-state occupancy of a sideband-cooled mode.

All functions are pure and take the value types from :mod:`phononcount.params`.
Rates come out in events per second; frequencies go in as rad/s.
"""

from dataclasses import dataclass
import math

from .exceptions import DegenerateDetuningError, ValidationError
from .params import DriveSetting


def sideband_denominators(cavity, mode):
    """Cavity-response denominators ``(den_up, den_down)``.

    ``den_up = (Delta - Omega_m)^2 + kappa^2/4`` sets the upward (Stokes) rate
    and ``den_down = (Delta + Omega_m)^2 + kappa^2/4`` the downward one.
    """
    quarter = cavity.kappa ** 2 / 4.0
    den_up = (cavity.detuning - mode.omega_m) ** 2 + quarter
    den_down = (cavity.detuning + mode.omega_m) ** 2 + quarter
    return den_up, den_down


def transition_rates(cavity, mode, drive):
    """Upward and downward phonon transition rates ``(a_plus, a_minus)`` in 1/s."""
    den_up, den_down = sideband_denominators(cavity, mode)
    g2k = drive.coupling_strength_sq * cavity.kappa
    return g2k / den_up, g2k / den_down


def cavity_asymmetry(cavity, mode):
    """``a_minus / a_plus``, independent of the drive strength."""
    den_up, den_down = sideband_denominators(cavity, mode)
    return den_up / den_down


def backaction_limit(cavity, mode):
    """Minimum occupancy reachable by sideband cooling, ``1/(A-/A+ - 1)``."""
    r = cavity_asymmetry(cavity, mode)
    if r <= 1.0:
        raise DegenerateDetuningError(
            f"no cooling at this detuning (A-/A+ = {r:.6g} <= 1)"
        )
    return 1.0 / (r - 1.0)


def _as_pair(rates):
    if isinstance(rates, RatePrediction):
        return rates.a_plus, rates.a_minus
    a_plus, a_minus = rates
    return float(a_plus), float(a_minus)


def steady_state_occupancy(rates, mode):
    """Mean phonon number under cooling: ``(A+ + n_th G_m) / (G_opt + G_m)``.

    Raises :class:`DegenerateDetuningError` if the drive anti-damps the mode
    (``G_opt < 0``), or if it is driven without net cooling.
    """
    a_plus, a_minus = _as_pair(rates)
    gamma_opt = a_minus - a_plus
    if gamma_opt < 0 or (gamma_opt == 0 and a_plus > 0):
        raise DegenerateDetuningError(
            f"optical damping {gamma_opt:.6g} rad/s <= 0: the drive does not cool"
        )
    return (a_plus + mode.bath_phonon_flux) / (gamma_opt + mode.gamma_m)


def sideband_fluxes(rates, n_bar):
    """Stokes and anti-Stokes photon fluxes ``(flux_s, flux_as)`` at the cavity output."""
    if n_bar < 0:
        raise ValidationError(f"n_bar must be >= 0, got {n_bar}")
    a_plus, a_minus = _as_pair(rates)
    return (n_bar + 1.0) * a_plus, n_bar * a_minus


def cooperativity(cavity, mode, drive):
    """Quantum cooperativity ``4 g^2 / (G_m kappa n_th)``."""
    return 4.0 * drive.coupling_strength_sq / (mode.gamma_m * cavity.kappa * mode.n_th)


def coherence_times(mode):
    """``(T1, T2)`` in seconds: energy decay and thermal decoherence time."""
    if mode.n_th <= 0:
        raise ValidationError("n_th must be > 0 for a decoherence time")
    t1 = 1.0 / mode.gamma_m
    return t1, t1 / mode.n_th


def regime_limits(cavity, mode):
    """Asymptotes of the sideband ratio and flux.

    Returns ``(r_thermal, flux_qba_slope)``: the ratio the thermally dominated
    regime tends to, and the quantum back-action flux per unit of
    ``coupling_strength_sq`` when C_q >> 1.
    """
    r_thermal = cavity_asymmetry(cavity, mode)
    if cavity.detuning == 0:
        slope = math.inf
    else:
        slope = cavity.kappa / (4.0 * abs(cavity.detuning) * mode.omega_m)
    return r_thermal, slope


def drive_for_gamma_opt(gamma_opt, cavity, mode):
    """Back-solve the drive that produces optical damping ``gamma_opt`` (rad/s)."""
    if gamma_opt < 0:
        raise ValidationError(f"gamma_opt must be >= 0, got {gamma_opt}")
    den_up, den_down = sideband_denominators(cavity, mode)
    per_unit = cavity.kappa * (1.0 / den_down - 1.0 / den_up)
    if per_unit <= 0:
        raise DegenerateDetuningError(
            "cannot reach positive optical damping on the blue/zero side"
        )
    return DriveSetting(gamma_opt / per_unit)


def drive_for_cooperativity(c_q, cavity, mode):
    return DriveSetting(c_q * mode.gamma_m * cavity.kappa * mode.n_th / 4.0)


@dataclass(frozen=True)
class RatePrediction:
    a_plus: float
    a_minus: float
    gamma_opt: float
    n_bar: float
    n_ba: float
    c_q: float
    flux_stokes: float
    flux_antistokes: float

    @property
    def ratio(self):
        """Anti-Stokes / Stokes flux ratio."""
        return self.flux_antistokes / self.flux_stokes


def predict_rates(cavity, mode, drive, *, n_bar=None):
    """Full forward model for one drive setting.

    ``n_bar`` overrides the steady-state occupancy (useful for synthetic
    thermometry at occupancies the drive alone cannot reach).
    """
    a_plus, a_minus = transition_rates(cavity, mode, drive)
    if n_bar is None:
        n_bar = steady_state_occupancy((a_plus, a_minus), mode)
    flux_s, flux_as = sideband_fluxes((a_plus, a_minus), n_bar)
    return RatePrediction(
        a_plus=a_plus,
        a_minus=a_minus,
        gamma_opt=a_minus - a_plus,
        n_bar=n_bar,
        n_ba=backaction_limit(cavity, mode),
        c_q=cooperativity(cavity, mode, drive),
        flux_stokes=flux_s,
        flux_antistokes=flux_as,
    )
