"""Configuration files, data ingestion and output writers.

Config files are INI documents with ``[cavity]``, ``[mechanics]``,
``[drive]``, ``[detection]``, ``[filter]`` and ``[lock]`` sections; values
are ordinary frequencies in Hz and SI units otherwise. Every lookup error is
reported with its ``section.key`` path.

Tables are tab-delimited text with ``#`` comment lines (metadata first, then
the column names), or a JSON document. Click streams are one integer
nanosecond timestamp per line after a ``# key = value`` header.
"""

import configparser
import contextlib
import dataclasses
import hashlib
import importlib.metadata
import json
import math
import os
import platform
import tempfile
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .clicks import CHANNELS, ClickStream, DetectionChain
from .exceptions import DegenerateDetuningError, ValidationError
from .filters import FilterChain, FilterStage, PsdTrace
from .lock import CycleSchedule, DriftModel
from .params import DriveSetting, MechanicalMode, OpticalCavity, hz
from .rates import drive_for_gamma_opt
from .validation import check_fraction, check_positive

OUTPUT_ENV = "PHONONCOUNT_OUT"

_SECTIONS = {
    "cavity": {"kappa_hz", "detuning_hz", "g0_hz", "wavelength_m", "outcoupling"},
    "mechanics": {"frequency_hz", "q_factor", "bath_temperature_k", "n_th",
                  "effective_mass_kg", "bose_einstein"},
    "drive": {"gamma_opt_hz", "coupling_sq"},
    "detection": {"efficiency", "dark_rate_hz", "dark_rate_sigma_hz", "dead_time_s",
                  "afterpulse_prob", "afterpulse_delay_s"},
    "filter": {"linewidth_hz", "n_stages", "chain_insertion", "stage_transmission"},
    "lock": {"freeze_duration_s", "relock_timeout_s", "shutter_delay_s", "drift_rate",
             "diffusion"},
}


def default_config_path():
    """Bundled reference configuration."""
    return resources.files("phononcount") / "data" / "reference.ini"


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Resolved physics objects plus the flat ``section.key`` snapshot."""

    cavity: OpticalCavity
    mode: MechanicalMode
    drive: DriveSetting
    detection: DetectionChain
    dark_rate_sigma: float
    chain: FilterChain
    schedule: CycleSchedule
    drift: DriftModel
    snapshot: dict

    @property
    def gamma_opt(self):
        return self.snapshot.get("drive.gamma_opt_hz")


class _Reader:
    def __init__(self, parser):
        self.p = parser

    def has(self, section, key):
        return self.p.has_option(section, key)

    def float(self, section, key, default=None, *, required=False):
        path = f"{section}.{key}"
        if not self.p.has_option(section, key):
            if required:
                raise ValidationError("missing required key", path)
            return default
        raw = self.p.get(section, key)
        try:
            value = float(raw)
        except ValueError:
            raise ValidationError(f"not a number: {raw!r}", path) from None
        if not math.isfinite(value):
            raise ValidationError(f"must be finite, got {raw!r}", path)
        return value

    def int(self, section, key, default):
        path = f"{section}.{key}"
        if not self.p.has_option(section, key):
            return default
        raw = self.p.get(section, key)
        try:
            return int(raw)
        except ValueError:
            raise ValidationError(f"not an integer: {raw!r}", path) from None

    def bool(self, section, key, default):
        if not self.p.has_option(section, key):
            return default
        try:
            return self.p.getboolean(section, key)
        except ValueError:
            raise ValidationError("not a boolean", f"{section}.{key}") from None


@contextlib.contextmanager
def _keyed(path):
    """Attach a key path to validation errors raised inside the block."""
    try:
        yield
    except ValidationError as err:
        if err.key_path:
            raise
        raise type(err)(str(err), path) from None


def _check_keys(parser):
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValidationError("unknown section", section)
        for key in parser.options(section):
            if key not in _SECTIONS[section]:
                raise ValidationError("unknown key", f"{section}.{key}")


def read_config(path=None, overrides=None):
    """Parse a config file (bundled reference setup when ``path`` is None).

    ``overrides`` maps ``"section.key"`` to values that replace file entries.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    src = Path(path) if path is not None else default_config_path()
    text = src.read_text()
    try:
        parser.read_string(text, source=str(src))
    except configparser.Error as err:
        raise ValidationError(f"cannot parse config: {err}") from None
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, key = dotted.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        if key in ("gamma_opt_hz", "coupling_sq"):
            for other in ("gamma_opt_hz", "coupling_sq"):
                parser.remove_option("drive", other)
        if key in ("bath_temperature_k", "n_th"):
            for other in ("bath_temperature_k", "n_th"):
                parser.remove_option("mechanics", other)
        parser.set(section, key, repr(value) if isinstance(value, float) else str(value))
    _check_keys(parser)
    return build_config(parser)


def build_config(parser):
    r = _Reader(parser)
    snapshot = {
        f"{s}.{k}": parser.get(s, k) for s in parser.sections() for k in parser.options(s)
    }

    with _keyed("cavity.kappa_hz"):
        kappa = hz(check_positive(r.float("cavity", "kappa_hz", required=True), "kappa_hz"))
    detuning = hz(r.float("cavity", "detuning_hz", required=True))
    g0 = r.float("cavity", "g0_hz")
    with _keyed("cavity.outcoupling"):
        cavity = OpticalCavity(
            kappa=kappa,
            detuning=detuning,
            g0=None if g0 is None else hz(g0),
            wavelength=r.float("cavity", "wavelength_m"),
            outcoupling=r.float("cavity", "outcoupling", 1.0),
        )

    temp = r.float("mechanics", "bath_temperature_k")
    n_th = r.float("mechanics", "n_th")
    if temp is None and n_th is None:
        raise ValidationError("need bath_temperature_k or n_th", "mechanics")
    with _keyed("mechanics.frequency_hz"):
        omega_m = hz(check_positive(
            r.float("mechanics", "frequency_hz", required=True), "frequency_hz"))
    with _keyed("mechanics.q_factor"):
        q = check_positive(r.float("mechanics", "q_factor", required=True), "q_factor")
    with _keyed("mechanics.bath_temperature_k" if temp is not None else "mechanics.n_th"):
        mode = MechanicalMode(
            omega_m=omega_m,
            q_factor=q,
            bath_temperature=temp,
            n_th=n_th if temp is None else None,
            effective_mass=r.float("mechanics", "effective_mass_kg"),
            bose_einstein=r.bool("mechanics", "bose_einstein", False),
        )

    if cavity.detuning >= 0:
        raise DegenerateDetuningError(
            "drive must be red-detuned (< 0) for sideband cooling", "cavity.detuning_hz"
        )
    if r.has("drive", "gamma_opt_hz"):
        with _keyed("drive.gamma_opt_hz"):
            g_opt = check_positive(r.float("drive", "gamma_opt_hz"), "gamma_opt_hz",
                                   allow_zero=True)
        with _keyed("cavity.detuning_hz"):
            drive = drive_for_gamma_opt(hz(g_opt), cavity, mode)
    elif r.has("drive", "coupling_sq"):
        with _keyed("drive.coupling_sq"):
            drive = DriveSetting(r.float("drive", "coupling_sq"))
    else:
        drive = None

    with _keyed("detection.efficiency"):
        eff = check_fraction(r.float("detection", "efficiency", 1.0), "efficiency",
                             allow_zero=False)
    with _keyed("detection"):
        detection = DetectionChain.from_total(
            eff,
            dark_rate=r.float("detection", "dark_rate_hz", 0.0),
            dead_time=r.float("detection", "dead_time_s", 50e-9),
            afterpulse_prob=r.float("detection", "afterpulse_prob", 0.0),
            afterpulse_delay=r.float("detection", "afterpulse_delay_s", 200e-9),
        )
    with _keyed("detection.dark_rate_sigma_hz"):
        dark_sigma = check_positive(r.float("detection", "dark_rate_sigma_hz", 0.0),
                                    "dark_rate_sigma_hz", allow_zero=True)

    n_stages = r.int("filter", "n_stages", 4)
    if n_stages < 1:
        raise ValidationError("must be >= 1", "filter.n_stages")
    with _keyed("filter.linewidth_hz"):
        kf = hz(check_positive(r.float("filter", "linewidth_hz", 30e3), "linewidth_hz"))
    with _keyed("filter"):
        chain = FilterChain(
            (FilterStage(kf, r.float("filter", "stage_transmission", 1.0)),) * n_stages,
            chain_insertion=r.float("filter", "chain_insertion", 1.0),
        )

    with _keyed("lock"):
        schedule = CycleSchedule(
            freeze_duration=r.float("lock", "freeze_duration_s", 1.5),
            relock_timeout=r.float("lock", "relock_timeout_s", 0.5),
            shutter_delay=r.float("lock", "shutter_delay_s", 0.01),
        )
        base = DriftModel.calibrated(kf)
        rate = r.float("lock", "drift_rate")
        diff = r.float("lock", "diffusion")
        drift = DriftModel(
            diffusion=base.diffusion if diff is None else diff * kf ** 2 / 4.0,
            deterministic_drift=base.deterministic_drift if rate is None else rate * kf / 2.0,
        )

    return RunConfig(cavity, mode, drive, detection, dark_sigma, chain, schedule, drift, snapshot)


# ---------------------------------------------------------------- writing


def atomic_write(path, data):
    """Write ``data`` (str or bytes) via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise
    return path


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def format_table(columns, rows, meta=None, column_doc=None):
    """Tab-delimited text. ``meta`` and ``column_doc`` become ``#`` lines."""
    lines = [f"# {k} = {_fmt(v)}" for k, v in (meta or {}).items()]
    for name in columns:
        if column_doc and name in column_doc:
            lines.append(f"# column {name}: {column_doc[name]}")
    lines.append("# " + "\t".join(columns))
    for row in rows:
        lines.append("\t".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def format_json(columns, rows, meta=None, column_doc=None):
    doc = {
        "meta": meta or {},
        "columns": list(columns),
        "column_doc": column_doc or {},
        "rows": [list(r) for r in rows],
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_table(path, columns, rows, meta=None, column_doc=None, as_json=False):
    fmt = format_json if as_json else format_table
    return atomic_write(path, fmt(columns, list(rows), meta, column_doc))


def read_table(path):
    """Read a table written by :func:`write_table` (text form).

    Returns ``(columns, rows, meta)``. ``rows`` is a 2-D float array when
    every cell is numeric, otherwise a list of lists with numeric cells
    converted.
    """
    meta, columns, rows = {}, [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if " = " in body:
                k, v = body.split(" = ", 1)
                meta[k] = v
            elif body and not body.startswith("column "):
                columns = body.split("\t")
        elif line.strip():
            rows.append([_parse_cell(v) for v in line.split("\t")])
    if all(isinstance(v, float) for row in rows for v in row):
        return columns, np.array(rows, dtype=float).reshape(len(rows), len(columns)), meta
    return columns, rows, meta


def _parse_cell(text):
    try:
        return float(text)
    except ValueError:
        return text


# ------------------------------------------------------------ click streams


def format_click_stream(stream):
    head = {
        "format": "phononcount-clicks/1",
        "channel": stream.channel_label,
        "duration_s": repr(float(stream.duration)),
        "n_clicks": stream.n_clicks,
        "seed": "none" if stream.seed is None else stream.seed,
    }
    for k, v in sorted(stream.truth_metadata.items()):
        head[f"truth.{k}"] = _fmt(v)
    lines = [f"# {k} = {v}" for k, v in head.items()]
    body = "\n".join(map(str, stream.timestamps_ns.tolist()))
    return "\n".join(lines) + "\n" + (body + "\n" if body else "")


def write_click_stream(path, stream):
    return atomic_write(path, format_click_stream(stream))


def read_click_stream(path):
    head = {}
    values = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if line.startswith("#"):
                body = line[1:].strip()
                if " = " in body:
                    k, v = body.split(" = ", 1)
                    head[k] = v
                continue
            line = line.strip()
            if not line:
                continue
            try:
                values.append(int(line))
            except ValueError:
                raise ValidationError(f"line {n}: not an integer timestamp: {line!r}") from None
    if "duration_s" not in head:
        raise ValidationError("click file lacks a '# duration_s = ...' header")
    try:
        duration = float(head["duration_s"])
    except ValueError:
        raise ValidationError("bad duration_s header") from None
    channel = head.get("channel", "anti-Stokes")
    if channel not in CHANNELS:
        raise ValidationError(f"unknown channel {channel!r}")
    seed = head.get("seed", "none")
    truth = {}
    for k, v in head.items():
        if k.startswith("truth."):
            try:
                truth[k[6:]] = float(v)
            except ValueError:
                truth[k[6:]] = v
    return ClickStream(
        np.array(values, dtype=np.int64),
        duration,
        channel,
        None if seed == "none" else int(seed),
        truth,
    )


# -------------------------------------------------------------------- PSD


def read_psd(path):
    """PSD trace from a 2- or 3-column text file.

    Columns: frequency (Hz), PSD in shot-noise units, optional shot-noise
    level (same units). Lines starting with ``#`` are ignored. Frequencies
    are converted to rad/s.
    """
    try:
        data = np.loadtxt(path, comments="#", ndmin=2)
    except ValueError as err:
        raise ValidationError(f"cannot parse PSD file: {err}") from None
    if data.shape[1] not in (2, 3):
        raise ValidationError(f"PSD file needs 2 or 3 columns, found {data.shape[1]}")
    freq = hz(data[:, 0])
    sn = data[:, 2] if data.shape[1] == 3 else None
    return PsdTrace(freq, data[:, 1], sn)


# --------------------------------------------------------------- manifest


def _versions():
    from . import __version__

    out = {"python": platform.python_version(), "phononcount": __version__}
    for pkg in ("numpy", "scipy", "scikit-learn"):
        try:
            out[pkg] = importlib.metadata.version(pkg)
        except importlib.metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclasses.dataclass
class RunManifest:
    """Provenance record written next to each command's outputs."""

    command: str
    config: dict
    seed: int = None
    arguments: dict = dataclasses.field(default_factory=dict)
    inputs: dict = dataclasses.field(default_factory=dict)
    outputs: dict = dataclasses.field(default_factory=dict)
    versions: dict = dataclasses.field(default_factory=_versions)
    wall_clock_s: float = 0.0
    event_counts: dict = dataclasses.field(default_factory=dict)
    _t0: float = dataclasses.field(default_factory=time.perf_counter, repr=False)

    def add_input(self, path):
        self.inputs[str(path)] = file_sha256(path)

    def add_output(self, path):
        self.outputs[str(path)] = file_sha256(path)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.pop("_t0")
        return _jsonable(d)

    def write(self, path):
        self.wall_clock_s = time.perf_counter() - self._t0
        return atomic_write(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def read_manifest(path):
    return json.loads(Path(path).read_text())
