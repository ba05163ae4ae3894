"""Phonon counting with cascaded filter cavities.

Models the sideband rates of a cooled mechanical mode and the Lorentzian
filter chain that isolates one sideband. Simulated or recorded click streams
feed the g2 and Raman-ratio analyses; a separate module simulates the filter
locks. All angular frequencies are rad/s; see
:func:`phononcount.params.hz` for converting ordinary frequencies.
"""

from .clicks import (
    ClickStream,
    DetectionChain,
    apply_dead_time,
    detected_sideband_rates,
    simulate_sideband_stream,
    simulate_thermal_stream,
    simulate_two_sideband_experiment,
    thin_by_efficiency,
)
from .correlation import (
    CoincidenceHistogram,
    G2Curve,
    G2Fit,
    build_histogram,
    diluted_contrast,
    fit_g2,
    normalize_g2,
)
from .estimators import BathTemperatureRegressor, G2Fitter, RamanThermometer
from .exceptions import (
    ConvergenceError,
    DegenerateDetuningError,
    EmptyStreamError,
    GridCoverageError,
    LockTimeoutError,
    NonPositiveRateError,
    NumericalError,
    PhononCountError,
    StepSizeError,
    UnphysicalRatioError,
    ValidationError,
)
from .filters import (
    FilterChain,
    FilterStage,
    PsdTrace,
    chain_transmission,
    clipping_factor,
    group_delay,
    predict_count_rate,
    rejection_db,
    sideband_clipping,
)
from .lock import (
    ControllerGains,
    CycleSchedule,
    DriftModel,
    LockPhase,
    run_duty_cycle,
    run_frozen_segment,
    run_lock_acquisition,
    run_relock,
)
from .params import (
    DriveSetting,
    MechanicalMode,
    OpticalCavity,
    OptomechanicalConfig,
    hz,
    reference_cavity,
    reference_mode,
    to_hz,
)
from .rates import (
    backaction_limit,
    cooperativity,
    drive_for_gamma_opt,
    predict_rates,
    steady_state_occupancy,
    transition_rates,
)
from .thermometry import (
    fit_bath_temperature,
    occupancy_estimate,
    occupancy_from_ratio,
    raman_ratio,
    thermometry_from_streams,
)

__version__ = "0.1.0"
