"""Physical parameter containers.

Every frequency and rate stored here is angular (rad/s). Lab values are
usually quoted as ordinary frequencies ``X/2pi`` in Hz; use :func:`hz` to
convert and the ``from_hz`` constructors when building from such numbers.
"""

from dataclasses import dataclass, field
import math

from scipy import constants

from .exceptions import ValidationError
from .validation import check_fraction, check_positive

TWO_PI = 2.0 * math.pi


def hz(f):
    """Ordinary frequency in Hz -> angular frequency in rad/s."""
    return TWO_PI * f


def to_hz(omega):
    """Angular frequency in rad/s -> ordinary frequency in Hz."""
    return omega / TWO_PI


def thermal_occupancy(temperature, omega, *, bose_einstein=False):
    """Mean bath occupancy of a mode at angular frequency ``omega``.

    Uses the high-temperature form k_B T / (hbar omega) unless
    ``bose_einstein`` is set.
    """
    x = constants.hbar * omega / (constants.k * temperature)
    if bose_einstein:
        return 1.0 / math.expm1(x)
    return 1.0 / x


@dataclass(frozen=True)
class MechanicalMode:
    """A single high-Q mechanical mode coupled to a thermal bath.

    ``gamma_m`` is derived as ``omega_m / q_factor``. ``n_th`` is derived from
    ``bath_temperature`` when that is given; otherwise it must be supplied.
    """

    omega_m: float
    q_factor: float
    bath_temperature: float = None
    n_th: float = None
    effective_mass: float = None
    bose_einstein: bool = False
    gamma_m: float = field(init=False)

    def __post_init__(self):
        check_positive(self.omega_m, "omega_m")
        check_positive(self.q_factor, "q_factor")
        object.__setattr__(self, "gamma_m", self.omega_m / self.q_factor)
        if self.bath_temperature is not None:
            if self.n_th is not None:
                raise ValidationError("give either bath_temperature or n_th, not both")
            check_positive(self.bath_temperature, "bath_temperature")
            n_th = thermal_occupancy(
                self.bath_temperature, self.omega_m, bose_einstein=self.bose_einstein
            )
            object.__setattr__(self, "n_th", n_th)
        elif self.n_th is None:
            raise ValidationError("one of bath_temperature or n_th is required")
        else:
            check_positive(self.n_th, "n_th", allow_zero=True)

    @classmethod
    def from_hz(cls, frequency_hz, q_factor, **kwargs):
        return cls(omega_m=hz(frequency_hz), q_factor=q_factor, **kwargs)

    def with_temperature(self, temperature):
        """Copy of this mode at another bath temperature."""
        return MechanicalMode(
            omega_m=self.omega_m,
            q_factor=self.q_factor,
            bath_temperature=temperature,
            effective_mass=self.effective_mass,
            bose_einstein=self.bose_einstein,
        )

    @property
    def bath_phonon_flux(self):
        """n_th * gamma_m, phonons per second entering from the bath."""
        return self.n_th * self.gamma_m


@dataclass(frozen=True)
class OpticalCavity:
    """Optomechanical cavity. ``detuning < 0`` is red of resonance."""

    kappa: float
    detuning: float
    g0: float = None
    wavelength: float = None
    outcoupling: float = 1.0

    def __post_init__(self):
        check_positive(self.kappa, "kappa")
        try:
            ok = math.isfinite(float(self.detuning))
        except (TypeError, ValueError):
            ok = False
        if not ok:
            raise ValidationError(f"detuning must be a finite number, got {self.detuning!r}")
        check_fraction(self.outcoupling, "outcoupling")

    @classmethod
    def from_hz(cls, kappa_hz, detuning_hz, g0_hz=None, **kwargs):
        g0 = None if g0_hz is None else hz(g0_hz)
        return cls(kappa=hz(kappa_hz), detuning=hz(detuning_hz), g0=g0, **kwargs)


@dataclass(frozen=True)
class DriveSetting:
    """Drive strength as g0^2 * n_cav in rad^2/s^2.

    g0 and the intracavity photon number only ever enter the rate model
    through this product.
    """

    coupling_strength_sq: float

    def __post_init__(self):
        check_positive(self.coupling_strength_sq, "coupling_strength_sq", allow_zero=True)

    @classmethod
    def from_photon_number(cls, g0, n_cav):
        return cls(g0 * g0 * n_cav)


@dataclass(frozen=True)
class OptomechanicalConfig:
    """Everything needed to predict sideband rates for one drive setting."""

    cavity: OpticalCavity
    mode: MechanicalMode
    drive: DriveSetting = None


def reference_cavity():
    """Membrane-in-the-middle cavity at the cooling detuning (-1.85 MHz)."""
    return OpticalCavity.from_hz(
        kappa_hz=2.75e6, detuning_hz=-1.85e6, g0_hz=50.0, wavelength=852e-9, outcoupling=0.75
    )


def reference_mode(temperature=8.8):
    """1.48 MHz soft-clamped defect mode, Q = 3.8e8."""
    return MechanicalMode.from_hz(
        1.48e6, 3.8e8, bath_temperature=temperature, effective_mass=2e-12
    )
