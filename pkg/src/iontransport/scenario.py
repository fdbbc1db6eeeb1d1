"""Experiment scenarios: YAML files describing one reproducible run.

A scenario fixes the trap, chain lengths, engines, the initial excitation,
the time grid, the sites to record, an optional simulated readout and the
seed from which all randomness derives.
"""

from __future__ import annotations

import dataclasses
import re
import zlib
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .errors import ConfigInvalid
from .trap import DEFAULT_FREQUENCIES_HZ, RFDrive, TrapConfig, TWO_PI

ENGINES = ("Linear", "Hopping", "MD")
KICK_TYPES = ("displacement", "pulsed")
DRIVE_MODES = ("Pseudopotential", "RFQuadrupole")
_SITE_RE = re.compile(r"^N(?:-(\d+))?$")


def _fail(path: str, message: str):
    raise ConfigInvalid(f"{path}: {message}")


def _number(data: dict, key: str, path: str, default=None, positive=False, integer=False):
    if key not in data:
        if default is None:
            _fail(f"{path}.{key}", "required field missing")
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{path}.{key}", f"expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            _fail(f"{path}.{key}", f"expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if not np.isfinite(value):
        _fail(f"{path}.{key}", "must be finite")
    if positive and value <= 0:
        _fail(f"{path}.{key}", f"must be positive, got {value!r}")
    return value


def _check_keys(data, allowed, path):
    if not isinstance(data, dict):
        _fail(path, f"expected a mapping, got {type(data).__name__}")
    extra = sorted(set(data) - set(allowed))
    if extra:
        _fail(path, f"unknown field(s) {', '.join(map(str, extra))}")


def _direction(data, path, default):
    d = data.get("direction", list(default))
    if not (isinstance(d, (list, tuple)) and len(d) == 3):
        _fail(f"{path}.direction", "expected a list of three numbers")
    try:
        d = tuple(float(c) for c in d)
    except (TypeError, ValueError):
        _fail(f"{path}.direction", "expected a list of three numbers")
    if not np.linalg.norm(d) > 0:
        _fail(f"{path}.direction", "must be non-zero")
    return d


@dataclass(frozen=True)
class TrapSpec:
    """Secular frequencies in Hz plus an optional RF drive frequency in Hz."""

    f_x: float = DEFAULT_FREQUENCIES_HZ[0]
    f_y: float = DEFAULT_FREQUENCIES_HZ[1]
    f_z: float = DEFAULT_FREQUENCIES_HZ[2]
    rf_hz: float | None = None

    @classmethod
    def parse(cls, data, path="trap") -> "TrapSpec":
        _check_keys(data, ("f_x", "f_y", "f_z", "rf_hz"), path)
        rf = data.get("rf_hz")
        return cls(
            f_x=_number(data, "f_x", path, cls.f_x, positive=True),
            f_y=_number(data, "f_y", path, cls.f_y, positive=True),
            f_z=_number(data, "f_z", path, cls.f_z, positive=True),
            rf_hz=None if rf is None else _number(data, "rf_hz", path, positive=True),
        )

    def build(self) -> TrapConfig:
        w = (TWO_PI * self.f_x, TWO_PI * self.f_y, TWO_PI * self.f_z)
        drive = None if self.rf_hz is None else RFDrive.matched(*w, omega_rf=TWO_PI * self.rf_hz)
        try:
            return TrapConfig(*w, rf_drive=drive)
        except ConfigInvalid as exc:
            raise ConfigInvalid(f"trap: {exc}") from None

    def to_dict(self) -> dict:
        d = {"f_x": self.f_x, "f_y": self.f_y, "f_z": self.f_z}
        if self.rf_hz is not None:
            d["rf_hz"] = self.rf_hz
        return d


@dataclass(frozen=True)
class KickSpec:
    """Initial excitation of one site.

    ``displacement``: the site starts displaced by ``amplitude`` (units of l).
    ``pulsed``: square-wave force pulses at the site's local frequency (MD only).
    """

    type: str = "displacement"
    site: int = 1
    amplitude: float = 1e-3
    direction: tuple = (1.0, 0.0, 0.0)
    pulse_count: int = 0
    duty_cycle: float = 0.5

    @classmethod
    def parse(cls, data, path="kick") -> "KickSpec":
        _check_keys(data, ("type", "site", "amplitude", "direction", "pulse_count", "duty_cycle"), path)
        kind = data.get("type", "displacement")
        if kind not in KICK_TYPES:
            _fail(f"{path}.type", f"expected one of {KICK_TYPES}, got {kind!r}")
        spec = cls(
            type=kind,
            site=_number(data, "site", path, 1, positive=True, integer=True),
            amplitude=_number(data, "amplitude", path, cls.amplitude, positive=True),
            direction=_direction(data, path, cls.direction),
            pulse_count=_number(data, "pulse_count", path, 0, integer=True),
            duty_cycle=_number(data, "duty_cycle", path, 0.5),
        )
        if kind == "pulsed" and spec.pulse_count < 1:
            _fail(f"{path}.pulse_count", "pulsed kick needs at least one pulse")
        if not 0 < spec.duty_cycle < 1:
            _fail(f"{path}.duty_cycle", "must lie strictly between 0 and 1")
        return spec

    def to_dict(self) -> dict:
        d = {"type": self.type, "site": self.site, "amplitude": self.amplitude, "direction": list(self.direction)}
        if self.type == "pulsed":
            d.update(pulse_count=self.pulse_count, duty_cycle=self.duty_cycle)
        return d


@dataclass(frozen=True)
class TauGrid:
    """Evenly spaced evolution times in seconds."""

    start: float = 0.0
    stop: float = 1e-3
    points: int = 1001

    @classmethod
    def parse(cls, data, path="tau_grid") -> "TauGrid":
        _check_keys(data, ("start", "stop", "points"), path)
        grid = cls(
            start=_number(data, "start", path, 0.0),
            stop=_number(data, "stop", path, positive=True),
            points=_number(data, "points", path, positive=True, integer=True),
        )
        if grid.start < 0:
            _fail(f"{path}.start", "must be non-negative")
        if not grid.stop > grid.start:
            _fail(f"{path}.stop", "must exceed start (grid is ascending)")
        if grid.points < 2:
            _fail(f"{path}.points", "need at least two points")
        return grid

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)

    def to_dict(self) -> dict:
        return {"start": self.start, "stop": self.stop, "points": self.points}


@dataclass(frozen=True)
class MDSpec:
    """Integrator settings: steps per radial period and drive mode."""

    steps_per_period: int = 4000
    samples_per_period: int = 20
    drive_mode: str = "Pseudopotential"
    temperature: float = 0.0

    @classmethod
    def parse(cls, data, path="md") -> "MDSpec":
        _check_keys(data, ("steps_per_period", "samples_per_period", "drive_mode", "temperature"), path)
        mode = data.get("drive_mode", "Pseudopotential")
        if mode not in DRIVE_MODES:
            _fail(f"{path}.drive_mode", f"expected one of {DRIVE_MODES}, got {mode!r}")
        spec = cls(
            steps_per_period=_number(data, "steps_per_period", path, 4000, positive=True, integer=True),
            samples_per_period=_number(data, "samples_per_period", path, 20, positive=True, integer=True),
            drive_mode=mode,
            temperature=_number(data, "temperature", path, 0.0),
        )
        if spec.steps_per_period < 100:
            _fail(f"{path}.steps_per_period", "must be at least 100")
        if spec.samples_per_period < 10:
            _fail(f"{path}.samples_per_period", "must be at least 10")
        if spec.steps_per_period % spec.samples_per_period:
            _fail(f"{path}.samples_per_period", "must divide steps_per_period")
        if spec.temperature < 0:
            _fail(f"{path}.temperature", "must be non-negative")
        return spec

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ReadoutSpec:
    """Simulated red-sideband measurement of the recorded sites.

    The kicked ion's coherent amplitude at ``tau = 0`` is ``alpha0``; a site
    holding a fraction ``E/E0`` of the kick energy is read out with
    ``|alpha|^2 = alpha0^2 E/E0`` on top of a thermal occupation ``nbar``.
    """

    omega_0_hz: float = 500e3
    shots: int = 500
    nbar: float = 1.0
    alpha0: float = 2.0
    probe_time: float = 7.5e-6
    probe_points: int = 31

    @classmethod
    def parse(cls, data, path="readout") -> "ReadoutSpec":
        _check_keys(data, [f.name for f in dataclasses.fields(cls)], path)
        return cls(
            omega_0_hz=_number(data, "omega_0_hz", path, positive=True),
            shots=_number(data, "shots", path, 500, positive=True, integer=True),
            nbar=_number(data, "nbar", path, 1.0),
            alpha0=_number(data, "alpha0", path, 2.0),
            probe_time=_number(data, "probe_time", path, 7.5e-6, positive=True),
            probe_points=_number(data, "probe_points", path, 31, positive=True, integer=True),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _parse_site(value, path):
    if isinstance(value, bool):
        _fail(path, f"invalid site {value!r}")
    if isinstance(value, int):
        if value < 1:
            _fail(path, "sites are 1-based")
        return value
    if isinstance(value, str) and _SITE_RE.match(value.replace(" ", "")):
        return value.replace(" ", "")
    _fail(path, f"expected a positive integer or 'N' / 'N-k', got {value!r}")


def resolve_site(site, n_ions: int) -> int:
    """Turn ``3``, ``"N"`` or ``"N-1"`` into a 1-based index for a chain of ``n_ions``."""
    if isinstance(site, int):
        idx = site
    else:
        m = _SITE_RE.match(site)
        idx = n_ions - int(m.group(1) or 0)
    if not 1 <= idx <= n_ions:
        raise ConfigInvalid(f"sites: {site!r} is outside 1..{n_ions}")
    return idx


@dataclass(frozen=True)
class ExperimentScenario:
    name: str
    trap: TrapSpec = field(default_factory=TrapSpec)
    n_ions: tuple = (5,)
    engines: tuple = ("Linear",)
    kick: KickSpec = field(default_factory=KickSpec)
    tau_grid: TauGrid = field(default_factory=TauGrid)
    sites: tuple = (1, "N")
    md: MDSpec = field(default_factory=MDSpec)
    readout: ReadoutSpec | None = None
    seed: int = 0
    description: str = ""

    @classmethod
    def parse(cls, data) -> "ExperimentScenario":
        _check_keys(data, [f.name for f in dataclasses.fields(cls)], "scenario")
        name = data.get("name")
        if not isinstance(name, str) or not re.match(r"^[A-Za-z0-9_.-]+$", name):
            _fail("name", "required; letters, digits, '.', '_' or '-' only")
        n = data.get("n_ions", [5])
        n = [n] if isinstance(n, int) and not isinstance(n, bool) else n
        if not (isinstance(n, list) and n and all(isinstance(k, int) and not isinstance(k, bool) and k >= 1 for k in n)):
            _fail("n_ions", "expected a positive integer or a non-empty list of them")
        engines = data.get("engines", ["Linear"])
        engines = [engines] if isinstance(engines, str) else engines
        if not (isinstance(engines, list) and engines and all(e in ENGINES for e in engines)):
            _fail("engines", f"expected a non-empty list drawn from {ENGINES}, got {engines!r}")
        sites = data.get("sites", [1, "N"])
        if not (isinstance(sites, list) and sites):
            _fail("sites", "expected a non-empty list")
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            _fail("seed", f"expected a non-negative integer, got {seed!r}")
        readout = data.get("readout")
        description = data.get("description", "")
        if not isinstance(description, str):
            _fail("description", "expected a string")
        if "tau_grid" not in data:
            _fail("tau_grid", "required field missing")
        scenario = cls(
            name=name,
            trap=TrapSpec.parse(data.get("trap", {})),
            n_ions=tuple(n),
            engines=tuple(dict.fromkeys(engines)),
            kick=KickSpec.parse(data.get("kick", {})),
            tau_grid=TauGrid.parse(data["tau_grid"]),
            sites=tuple(_parse_site(s, f"sites[{i}]") for i, s in enumerate(sites)),
            md=MDSpec.parse(data.get("md", {})),
            readout=None if readout is None else ReadoutSpec.parse(readout),
            seed=seed,
            description=description,
        )
        scenario.check()
        return scenario

    def check(self):
        """Cross-field validation."""
        for n in self.n_ions:
            if self.kick.site > n:
                _fail("kick.site", f"site {self.kick.site} does not exist for n_ions={n}")
            for s in self.sites:
                resolve_site(s, n)
        if self.kick.type == "pulsed" and set(self.engines) - {"MD"}:
            _fail("engines", "a pulsed kick is only supported by the MD engine")
        if self.md.drive_mode == "RFQuadrupole" and "MD" in self.engines and self.trap.rf_hz is None:
            _fail("trap.rf_hz", "required for the RFQuadrupole drive mode")

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "description": self.description,
            "trap": self.trap.to_dict(),
            "n_ions": list(self.n_ions),
            "engines": list(self.engines),
            "kick": self.kick.to_dict(),
            "tau_grid": self.tau_grid.to_dict(),
            "sites": list(self.sites),
            "md": self.md.to_dict(),
            "seed": self.seed,
        }
        if self.readout is not None:
            d["readout"] = self.readout.to_dict()
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentScenario":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigInvalid(f"malformed YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigInvalid("scenario: top level must be a mapping")
        return cls.parse(data)

    @classmethod
    def load(cls, path) -> "ExperimentScenario":
        with open(path) as fh:
            return cls.from_yaml(fh.read())

    def with_overrides(self, seed=None, engines=None) -> "ExperimentScenario":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if engines:
            changes["engines"] = tuple(dict.fromkeys(engines))
        out = dataclasses.replace(self, **changes)
        out.check()
        return out


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named sub-stream of a scenario seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),)))


def preset_names() -> list[str]:
    root = resources.files("iontransport") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> ExperimentScenario:
    if name not in preset_names():
        raise ConfigInvalid(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    text = (resources.files("iontransport") / "presets" / f"{name}.yaml").read_text()
    return ExperimentScenario.from_yaml(text)
