"""Execute a scenario: energy traces per chain length and engine, optional
simulated measurements, and a manifest with content hashes."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
from dataclasses import dataclass
from importlib import metadata

import numpy as np
import scipy

from .dynamics import EnergyTrace, propagate_exact, propagate_full, propagate_hopping
from .errors import ConfigInvalid
from .fileio import atomic_write
from .md import backend as md_backend
from .md.engine import DriveMode, dress_micromotion, KickSchedule, MDState, integrate, local_energy_trace
from .modes import Branch, branch_spectrum, full_mode_spectrum, local_mode_model
from .readout import SidebandConfig, displaced_thermal_pops, lamb_dicke_parameter, pg_values
from .scenario import ExperimentScenario, resolve_site, rng_stream
from .statics import EquilibriumConfiguration, solve_equilibrium
from .trap import TWO_PI, TrapConfig

OUT_DIR_ENV = "IONTRANSPORT_OUT_DIR"
NORMALIZATION = "E/E0: energy divided by the kicked ion's energy right after the excitation"
RF_SAMPLES_PER_PERIOD = 4


@dataclass(frozen=True)
class RunResult:
    out_dir: str
    files: tuple
    manifest_path: str


def package_version() -> str:
    try:
        return metadata.version("iontransport")
    except metadata.PackageNotFoundError:
        return "unknown"


def resolve_out_dir(cli_value: str | None, scenario: ExperimentScenario) -> str:
    """``--out-dir`` wins, then ``$IONTRANSPORT_OUT_DIR``, then ``runs/<name>``."""
    if cli_value:
        return cli_value
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return os.path.join(env, scenario.name)
    return os.path.join("runs", scenario.name)


def _is_x(direction) -> bool:
    d = np.asarray(direction, dtype=float)
    return d[1] == 0.0 and d[2] == 0.0


def linear_trace(config, trap, scenario: ExperimentScenario, taus) -> EnergyTrace:
    kick = scenario.kick
    if config.is_linear and _is_x(kick.direction):
        return propagate_exact(branch_spectrum(config, trap, Branch.RADIAL_X), kick.site, taus)
    return propagate_full(full_mode_spectrum(config, trap), kick.site, taus, kick.direction)


def hopping_trace(config, trap, scenario: ExperimentScenario, taus) -> EnergyTrace:
    if not _is_x(scenario.kick.direction):
        raise ConfigInvalid("kick.direction: the Hopping engine models the x branch only")
    return propagate_hopping(local_mode_model(config, trap), scenario.kick.site, taus)


def _md_step(trap: TrapConfig, scenario: ExperimentScenario):
    """Integrator step (s) and sampling stride for the scenario's MD settings."""
    md = scenario.md
    t_x = TWO_PI / trap.omega_x
    if md.drive_mode == DriveMode.RF_QUADRUPOLE.value:
        t_rf = TWO_PI / trap.rf_drive.omega_rf
        stride = math.ceil(t_rf / (t_x / md.steps_per_period) / RF_SAMPLES_PER_PERIOD)
        return t_rf / (stride * RF_SAMPLES_PER_PERIOD), stride
    return t_x / md.steps_per_period, md.steps_per_period // md.samples_per_period


def md_trace(config, trap, scenario: ExperimentScenario, taus) -> EnergyTrace:
    """MD envelope energies (x plus y) interpolated onto ``taus``, as E/E0."""
    kick, md = scenario.kick, scenario.md
    dt, stride = _md_step(trap, scenario)
    schedule = None
    if kick.type == "pulsed":
        schedule = KickSchedule.resonant(config, trap, pulse_count=kick.pulse_count, force_amplitude=kick.amplitude,
                                         target_site=kick.site, direction=kick.direction,
                                         duty_cycle=kick.duty_cycle)
        state = MDState.at_rest(config)
    else:
        state = MDState.displaced(config, kick.site, kick.amplitude, kick.direction)
        if md.drive_mode == DriveMode.RF_QUADRUPOLE.value:
            state = dress_micromotion(state, config, trap)
    if md.temperature > 0:
        seed = int(rng_stream(scenario.seed, "thermal").integers(2 ** 63))
        hot = MDState.thermal(config, trap, md.temperature, seed)
        state = MDState(state.positions, state.velocities + hot.velocities)
    n_steps = stride * (math.ceil(taus[-1] / (dt * stride)) + 1)
    traj = integrate(state, trap, n_steps, dt=dt, schedule=schedule, drive_mode=md.drive_mode,
                     sample_every=stride, seed=scenario.seed)
    ex = local_energy_trace(traj, config, trap, (1.0, 0.0, 0.0), method="envelope")
    ey = local_energy_trace(traj, config, trap, (0.0, 1.0, 0.0), method="envelope")
    energies = ex.site_energies + ey.site_energies
    ref_time = ex.times[0] if schedule is None else schedule.duration
    e0 = np.interp(ref_time, ex.times, energies[:, kick.site - 1])
    if not e0 > 0:
        raise ConfigInvalid("kick: the excitation leaves the kicked ion with zero energy")
    out = np.column_stack([np.interp(taus, ex.times, energies[:, i]) for i in range(config.n_ions)])
    return EnergyTrace(taus, out / e0)


ENGINE_FUNCS = {"Linear": linear_trace, "Hopping": hopping_trace, "MD": md_trace}


def measurement_csv(trace: EnergyTrace, trap: TrapConfig, scenario: ExperimentScenario, n_ions: int) -> bytes:
    """Seeded Bernoulli shots of the red-sideband ground-state probability."""
    ro = scenario.readout
    sideband = SidebandConfig(TWO_PI * ro.omega_0_hz, lamb_dicke_parameter(trap.omega_x, trap.mass), ro.probe_time)
    probe = sideband.probe_grid(ro.probe_points)
    rng = rng_stream(scenario.seed, f"shots/N{n_ions}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tau_s", "site", "probe_time_s", "shots", "ground_count", "pg_model"])
    for site in trace.sites:
        energy = np.clip(trace.column(site), 0.0, None)
        for tau, e in zip(trace.times, energy):
            dist = displaced_thermal_pops(ro.nbar, ro.alpha0 * math.sqrt(e))
            pg = np.clip(pg_values(dist.probabilities, sideband, probe), 0.0, 1.0)
            counts = rng.binomial(ro.shots, pg)
            for t, c, p in zip(probe, counts, pg):
                writer.writerow([repr(float(tau)), site, repr(float(t)), ro.shots, int(c), repr(float(p))])
    return buf.getvalue().encode()


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run_scenario(scenario: ExperimentScenario, out_dir: str) -> RunResult:
    """Compute every (n_ions, engine) trace and write CSVs plus ``manifest.json``."""
    trap = scenario.trap.build()
    taus = scenario.tau_grid.values()
    outputs, files = [], []
    configs = {}
    for n in scenario.n_ions:
        config = solve_equilibrium(trap, n)
        configs[n] = config
        sites = tuple(dict.fromkeys(resolve_site(s, n) for s in scenario.sites))
        first = None
        for engine in scenario.engines:
            trace = ENGINE_FUNCS[engine](config, trap, scenario, taus).select(sites)
            if first is None:
                first = trace
            name = f"energy_{engine.lower()}_N{n}.csv"
            data = trace.to_csv().encode()
            atomic_write(os.path.join(out_dir, name), data)
            outputs.append({"file": name, "kind": "energy", "engine": engine, "n_ions": n,
                            "sites": list(sites), "sha256": _sha256(data)})
            files.append(name)
        if scenario.readout is not None:
            name = f"measurement_N{n}.csv"
            data = measurement_csv(first, trap, scenario, n)
            atomic_write(os.path.join(out_dir, name), data)
            outputs.append({"file": name, "kind": "measurement", "engine": scenario.engines[0], "n_ions": n,
                            "sites": list(sites), "sha256": _sha256(data)})
            files.append(name)
    manifest = {
        "scenario": scenario.to_dict(),
        "seed": scenario.seed,
        "normalization": NORMALIZATION,
        "configurations": {str(n): c.config_class.value for n, c in configs.items()},
        "versions": {
            "iontransport": package_version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "md_backend": md_backend.BACKEND,
        "outputs": outputs,
    }
    path = os.path.join(out_dir, "manifest.json")
    atomic_write(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return RunResult(out_dir, tuple(files), path)


def describe(target: str, scenario: ExperimentScenario, n_ions: int) -> dict:
    """JSON-ready report of an intermediate quantity for one chain length."""
    trap = scenario.trap.build()
    config: EquilibriumConfiguration = solve_equilibrium(trap, n_ions)
    if target == "equilibrium":
        report = config.to_dict()
        report["positions_um"] = (config.positions_si() * 1e6).tolist()
        return report
    if target == "modes":
        if not config.is_linear:
            full = full_mode_spectrum(config, trap)
            return {
                "n_ions": n_ions,
                "config_class": config.config_class.value,
                "units": "Hz",
                "frequencies": (full.frequencies / TWO_PI).tolist(),
                "dominant_axis": ["xyz"[a] for a in full.dominant_axis],
            }
        from .modes import decompose_unit_displacement
        spec = branch_spectrum(config, trap, Branch.RADIAL_X)
        report = {"n_ions": n_ions, "config_class": config.config_class.value}
        report.update(spec.to_dict())
        report["decomposition"] = decompose_unit_displacement(spec, scenario.kick.site).to_dict()
        return report
    if target == "local-model":
        model = local_mode_model(config, trap)
        report = {"n_ions": n_ions}
        report.update(model.to_dict())
        if n_ions >= 2:
            report["t12"] = model.t(1, 2) / TWO_PI
        return report
    raise ConfigInvalid(f"unknown describe target {target!r}")
