"""Nonlinear classical molecular dynamics of the ion chain.

Positions and velocities are dimensionless (units ``l`` and ``l omega_z``);
integrator time steps and sample times are given in seconds at the API.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.constants as const

from ..dynamics import EnergyTrace
from ..errors import ConfigInvalid, IonCollision, StepTooLarge
from ..modes import full_mode_spectrum, local_mode_model
from ..statics import EquilibriumConfiguration, hessian, potential, solve_equilibrium
from ..trap import TWO_PI, TrapConfig
from . import backend as _backend

MIN_DISTANCE = 1e-6
STEPS_PER_PERIOD = 200
MAX_DT_FRACTION = 1.0 / 100.0
DEFAULT_KICK_DIRECTION = (math.sqrt(0.5), math.sqrt(0.5), 0.0)


class DriveMode(str, enum.Enum):
    PSEUDOPOTENTIAL = "Pseudopotential"
    RF_QUADRUPOLE = "RFQuadrupole"


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(3)
    norm = np.linalg.norm(v)
    if not norm > 0:
        raise ConfigInvalid("direction must be a non-zero 3-vector")
    return v / norm


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MDState:
    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pos = _frozen(self.positions)
        vel = _frozen(self.velocities)
        if pos.shape != vel.shape or pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions and velocities must both be N x 3")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise ValueError("non-finite MD state")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    @classmethod
    def at_rest(cls, config: EquilibriumConfiguration) -> "MDState":
        return cls(config.positions, np.zeros_like(config.positions))

    @classmethod
    def displaced(
        cls, config: EquilibriumConfiguration, site: int, displacement: float, direction=(1.0, 0.0, 0.0)
    ) -> "MDState":
        """Equilibrium with ion ``site`` (1-based) shifted by ``displacement`` (units of l)."""
        pos = np.array(config.positions)
        pos[site - 1] += displacement * _unit(direction)
        return cls(pos, np.zeros_like(pos))

    @classmethod
    def thermal(
        cls, config: EquilibriumConfiguration, trap: TrapConfig, temperature: float, seed: int
    ) -> "MDState":
        """Equilibrium positions with Maxwell-Boltzmann velocities at ``temperature`` (K)."""
        rng = np.random.default_rng(seed)
        sigma = math.sqrt(const.k * temperature / trap.mass) / (trap.length_scale * trap.omega_z)
        return cls(config.positions, rng.normal(0.0, sigma, size=config.positions.shape))


def dress_micromotion(state: MDState, config: EquilibriumConfiguration, trap: TrapConfig) -> MDState:
    """Add lowest-order RF micromotion to a secular (pseudopotential) state.

    A secular displacement ``d`` and velocity ``v`` at time ``t`` become
    ``d (1 - (q/2) cos W t)`` and ``v (1 - (q/2) cos W t) + d (q/2) W sin W t``
    per radial axis, so that the RF trajectory's secular part starts from the
    given state.
    """
    rf = trap.rf_drive
    if rf is None:
        raise ConfigInvalid("dressing requires trap.rf_drive")
    q = np.array([rf.q_x, rf.q_y, 0.0])
    w = rf.omega_rf / trap.omega_z
    d = state.positions - config.positions
    factor = 1.0 - 0.5 * q * math.cos(w * state.time)
    vel = state.velocities * factor + d * 0.5 * q * w * math.sin(w * state.time)
    return MDState(config.positions + d * factor, vel, state.time)


@dataclass(frozen=True)
class KickSchedule:
    """Square-wave force pulses on one ion.

    ``force_amplitude`` is dimensionless (units of ``m l omega_z^2``),
    ``pulse_frequency`` in rad/s and ``start_time`` in s.
    """

    target_site: int
    pulse_frequency: float
    pulse_count: int
    force_amplitude: float
    direction: tuple = DEFAULT_KICK_DIRECTION
    duty_cycle: float = 0.5
    start_time: float = 0.0

    def __post_init__(self):
        if not self.pulse_frequency > 0:
            raise ConfigInvalid("pulse_frequency must be positive")
        if not 0.0 < self.duty_cycle < 1.0:
            raise ConfigInvalid("duty_cycle must lie strictly between 0 and 1")
        if self.pulse_count < 0:
            raise ConfigInvalid("pulse_count must be non-negative")
        if self.target_site < 1:
            raise ConfigInvalid("target_site is 1-based")
        object.__setattr__(self, "direction", tuple(float(c) for c in _unit(self.direction)))

    @property
    def period(self) -> float:
        return TWO_PI / self.pulse_frequency

    @property
    def duration(self) -> float:
        return self.pulse_count * self.period

    @classmethod
    def resonant(
        cls,
        config: EquilibriumConfiguration,
        trap: TrapConfig,
        pulse_count: int,
        force_amplitude: float,
        target_site: int = 1,
        **kwargs,
    ) -> "KickSchedule":
        """Pulse train at the local radial frequency of ``target_site``."""
        freq = local_mode_model(config, trap).site_frequencies[target_site - 1]
        return cls(target_site=target_site, pulse_frequency=float(freq), pulse_count=pulse_count,
                   force_amplitude=force_amplitude, **kwargs)

    def to_dict(self) -> dict:
        return {
            "target_site": self.target_site,
            "pulse_frequency": self.pulse_frequency,
            "pulse_count": self.pulse_count,
            "force_amplitude": self.force_amplitude,
            "direction": list(self.direction),
            "duty_cycle": self.duty_cycle,
            "start_time": self.start_time,
        }


@dataclass(frozen=True)
class Trajectory:
    """Sampled MD states on a uniform grid.

    ``sample_times`` in seconds; ``positions``/``velocities`` have shape
    (samples, N, 3) in dimensionless units.  ``metadata`` records the exact
    integrator step (``dt`` dimensionless, ``dt_s`` seconds), drive mode,
    seed and kernel backend.
    """

    sample_times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return len(self.sample_times)

    @property
    def n_ions(self) -> int:
        return self.positions.shape[1]

    def state(self, k: int) -> MDState:
        return MDState(self.positions[k], self.velocities[k], self.sample_times[k] * self.metadata["omega_z"])

    @property
    def states(self):
        return [self.state(k) for k in range(self.n_samples)]

    def save(self, path) -> str:
        from .trajio import save_trajectory
        return save_trajectory(self, path)

    @classmethod
    def load(cls, path) -> "Trajectory":
        from .trajio import load_trajectory
        return load_trajectory(path)


def _spring_constants(trap: TrapConfig, drive_mode: DriveMode):
    """Static and RF-modulated spring constants per axis plus the dimensionless drive frequency."""
    drive_mode = DriveMode(drive_mode)
    if drive_mode is DriveMode.PSEUDOPOTENTIAL:
        return trap.beta ** 2, np.zeros(3), 0.0
    rf = trap.rf_drive
    if rf is None:
        raise ConfigInvalid("RFQuadrupole drive requires trap.rf_drive")
    w = rf.omega_rf / trap.omega_z
    # Mathieu: x'' = -(W^2/4)(a - 2 q cos W t) x; axial stays static at omega_z
    k0 = np.array([0.25 * w * w * rf.a_x, 0.25 * w * w * rf.a_y, 1.0])
    k1 = np.array([-0.5 * w * w * rf.q_x, -0.5 * w * w * rf.q_y, 0.0])
    return k0, k1, w


def _kick_args(schedule: KickSchedule | None, n_ions: int, omega_z: float):
    if schedule is None:
        return (-1, np.zeros(3), 0.0, 0.0, 1.0, 0.5, 0)
    if schedule.target_site > n_ions:
        raise ConfigInvalid(f"kick target {schedule.target_site} beyond N={n_ions}")
    return (
        schedule.target_site - 1,
        np.array(schedule.direction),
        float(schedule.force_amplitude),
        schedule.start_time * omega_z,
        schedule.period * omega_z,
        float(schedule.duty_cycle),
        int(schedule.pulse_count),
    )


def force_field(positions, trap: TrapConfig, drive_mode=DriveMode.PSEUDOPOTENTIAL, time: float = 0.0,
                schedule: KickSchedule | None = None, kernel=None) -> np.ndarray:
    """Forces (N x 3, dimensionless) at dimensionless ``time``.

    Pseudopotential: harmonic trap plus Coulomb.  RFQuadrupole: radial
    confinement from the time-dependent Mathieu quadrupole, static axial.

    Raises
    ------
    IonCollision
        If two ions are closer than ``MIN_DISTANCE``.
    """
    kernel = kernel or _backend.kernel
    pos = np.array(positions, dtype=float, order="C")
    k0, k1, w = _spring_constants(trap, drive_mode)
    out = np.empty_like(pos)
    status = kernel.forces(pos, float(time), k0, k1, w, *_kick_args(schedule, len(pos), trap.omega_z),
                           MIN_DISTANCE, out)
    if status:
        raise IonCollision(f"two ions closer than {MIN_DISTANCE} l")
    return out


def fastest_frequency(trap: TrapConfig, drive_mode=DriveMode.PSEUDOPOTENTIAL, schedule=None) -> float:
    freqs = [trap.omega_x, trap.omega_y, trap.omega_z]
    if DriveMode(drive_mode) is DriveMode.RF_QUADRUPOLE and trap.rf_drive is not None:
        freqs.append(trap.rf_drive.omega_rf)
    if schedule is not None:
        freqs.append(schedule.pulse_frequency)
    return max(freqs)


def default_dt(trap: TrapConfig, drive_mode=DriveMode.PSEUDOPOTENTIAL, schedule=None) -> float:
    """``(2 pi / omega_fast) / 200`` in seconds."""
    return TWO_PI / fastest_frequency(trap, drive_mode, schedule) / STEPS_PER_PERIOD


def integrate(
    initial: MDState,
    trap: TrapConfig,
    n_steps: int,
    dt: float | None = None,
    schedule: KickSchedule | None = None,
    drive_mode=DriveMode.PSEUDOPOTENTIAL,
    sample_every: int = 1,
    seed: int | None = None,
    kernel=None,
) -> Trajectory:
    """Velocity-Verlet integration of the full nonlinear equations of motion.

    Parameters
    ----------
    dt : float, optional
        Step in seconds; defaults to :func:`default_dt`.  Must not exceed one
        hundredth of the period of the fastest frequency present.
    sample_every : int
        Store one state every this many steps (the initial state is sample 0).
    seed : int, optional
        Recorded in the metadata (the RNG seed used for the initial state).

    Raises
    ------
    StepTooLarge, IonCollision
    """
    drive_mode = DriveMode(drive_mode)
    w_max = fastest_frequency(trap, drive_mode, schedule)
    if dt is None:
        dt = default_dt(trap, drive_mode, schedule)
    if dt > MAX_DT_FRACTION * TWO_PI / w_max * (1 + 1e-12):
        raise StepTooLarge(f"dt={dt:.3e} s exceeds 1/100 of the fastest period {TWO_PI / w_max:.3e} s")
    if n_steps < 0 or sample_every < 1:
        raise ValueError("n_steps must be >= 0 and sample_every >= 1")
    kernel = kernel or _backend.kernel
    k0, k1, w = _spring_constants(trap, drive_mode)
    dt_dimless = dt * trap.omega_z
    pos = np.array(initial.positions, dtype=float, order="C")
    vel = np.array(initial.velocities, dtype=float, order="C")
    n_samples = n_steps // sample_every + 1
    out_pos = np.empty((n_samples, len(pos), 3))
    out_vel = np.empty_like(out_pos)
    status = kernel.run(pos, vel, float(initial.time), float(dt_dimless), int(n_steps), int(sample_every),
                        k0, k1, w, *_kick_args(schedule, len(pos), trap.omega_z), MIN_DISTANCE,
                        out_pos, out_vel)
    if status >= 0:
        raise IonCollision(f"two ions closer than {MIN_DISTANCE} l at step {status}")
    t_dimless = initial.time + dt_dimless * sample_every * np.arange(n_samples)
    metadata = {
        "dt": dt_dimless,
        "dt_s": dt,
        "sample_every": sample_every,
        "drive_mode": drive_mode.value,
        "seed": seed,
        "n_ions": len(pos),
        "omega_z": trap.omega_z,
        "length_scale": trap.length_scale,
        "backend": "cython" if kernel is _backend.compiled_kernel else "python",
        "schedule": schedule.to_dict() if schedule is not None else None,
    }
    out_pos.setflags(write=False)
    out_vel.setflags(write=False)
    return Trajectory(_frozen(t_dimless / trap.omega_z), out_pos, out_vel, metadata)


def total_energy(state: MDState, trap: TrapConfig) -> float:
    """Kinetic plus pseudopotential energy (dimensionless)."""
    return 0.5 * float(np.sum(state.velocities ** 2)) + potential(state.positions, trap.beta)


def _local_stiffness(config, trap, d):
    h = hessian(config.positions, trap.beta)
    n = config.n_ions
    blocks = h.reshape(n, 3, n, 3)[np.arange(n), :, np.arange(n), :]
    return np.einsum("a,iab,b->i", d, blocks, d)


def _micromotion_filter(traj: Trajectory, trap: TrapConfig):
    """Boxcar average of positions and velocities over exactly one RF period."""
    rf = trap.rf_drive
    spacing = traj.metadata["dt_s"] * traj.metadata["sample_every"]
    exact = TWO_PI / rf.omega_rf / spacing
    window = int(round(exact))
    if window < 2 or abs(window - exact) > 1e-6 * exact:
        raise ValueError("sample spacing must divide the RF period to filter micromotion")
    kernel = np.ones(window) / window

    def smooth(a):
        flat = a.reshape(len(a), -1)
        out = np.empty((len(a) - window + 1, flat.shape[1]))
        for c in range(flat.shape[1]):
            out[:, c] = np.convolve(flat[:, c], kernel, mode="valid")
        return out.reshape((-1,) + a.shape[1:])

    times = traj.sample_times[: len(traj.sample_times) - window + 1] + 0.5 * (window - 1) * spacing
    return times, smooth(traj.positions), smooth(traj.velocities)


def local_energy_trace(
    traj: Trajectory,
    config: EquilibriumConfiguration,
    trap: TrapConfig,
    direction=(1.0, 0.0, 0.0),
    method: str = "secular",
) -> EnergyTrace:
    """Per-ion secular energy along ``direction`` (dimensionless units).

    ``method="secular"``: kinetic plus local potential energy,
    ``(v.d)^2 / 2 + k_ii (q.d)^2 / 2`` with ``k_ii`` the local curvature at
    equilibrium.

    ``method="envelope"``: slowly varying amplitude obtained by projecting the
    state on the 3N normal modes, ``E_i = (d.B.d) |a_i . d|^2 / 2`` with
    ``a = sum_n u_n (Q_n + i P_n / omega_n)`` and ``B`` the trap stiffness.
    For a harmonic chain this equals the envelope evolved by
    :func:`iontransport.dynamics.propagate_exact`.

    Under RF drive both are computed from positions and velocities averaged
    over one RF period.
    """
    d = _unit(direction)
    spacing = traj.metadata["dt_s"] * traj.metadata["sample_every"]
    if spacing > TWO_PI / trap.omega_x / 10 * (1 + 1e-9):
        raise ValueError("need at least 10 samples per radial period")
    if traj.metadata.get("drive_mode") == DriveMode.RF_QUADRUPOLE.value:
        times, pos, vel = _micromotion_filter(traj, trap)
    else:
        times, pos, vel = traj.sample_times, traj.positions, traj.velocities
    q = pos - config.positions[None]
    if method == "secular":
        k = _local_stiffness(config, trap, d)
        qd = q @ d
        vd = vel @ d
        energies = 0.5 * vd ** 2 + 0.5 * k[None, :] * qd ** 2
    elif method == "envelope":
        spec = full_mode_spectrum(config, trap)
        u = spec.eigenvectors
        w = spec.frequencies / trap.omega_z
        n = config.n_ions
        amp = (q.reshape(len(q), -1) @ u) + 1j * (vel.reshape(len(vel), -1) @ u) / w
        site = (amp @ u.T).reshape(len(q), n, 3) @ d
        stiffness = float(d @ (trap.beta ** 2 * d))
        energies = 0.5 * stiffness * np.abs(site) ** 2
    else:
        raise ValueError(f"unknown method {method!r}")
    return EnergyTrace(times, energies)


@dataclass(frozen=True)
class PulsedExcitationResult:
    """Kicked-ion energy after each pulse count and the fit E = prefactor * n**exponent.

    The fit is NaN when fewer than two distinct nonzero counts are given.
    """

    pulse_counts: np.ndarray
    energies: np.ndarray
    exponent: float
    prefactor: float


def pulsed_excitation_energy(
    trap: TrapConfig,
    n_ions: int,
    schedule: KickSchedule,
    pulse_counts,
    direction=(1.0, 0.0, 0.0),
    steps_per_pulse: int = STEPS_PER_PERIOD,
    kernel=None,
) -> PulsedExcitationResult:
    """Kicked-ion secular energy after each number of pulses in ``pulse_counts``.

    Starts from the cold equilibrium; the pulse train of ``schedule`` is
    applied with the largest requested count, and the energy is read at the
    end of each pulse.  A least-squares power law ``E = A n^p`` is fitted on
    the non-zero counts.
    """
    counts = np.asarray(pulse_counts, dtype=int)
    config = solve_equilibrium(trap, n_ions)
    n_total = int(counts.max())
    sched = KickSchedule(
        target_site=schedule.target_site, pulse_frequency=schedule.pulse_frequency, pulse_count=n_total,
        force_amplitude=schedule.force_amplitude, direction=schedule.direction,
        duty_cycle=schedule.duty_cycle, start_time=0.0,
    )
    dt = sched.period / steps_per_pulse
    traj = integrate(MDState.at_rest(config), trap, n_steps=n_total * steps_per_pulse, dt=dt,
                     schedule=sched, sample_every=steps_per_pulse, kernel=kernel)
    d = _unit(direction)
    k = _local_stiffness(config, trap, d)[sched.target_site - 1]
    q = (traj.positions[:, sched.target_site - 1] - config.positions[sched.target_site - 1]) @ d
    v = traj.velocities[:, sched.target_site - 1] @ d
    energy_after = 0.5 * v ** 2 + 0.5 * k * q ** 2
    energies = energy_after[counts]
    fit = counts > 0
    if np.unique(counts[fit]).size < 2:
        return PulsedExcitationResult(counts, energies, math.nan, math.nan)
    slope, intercept = np.polyfit(np.log(counts[fit]), np.log(energies[fit]), 1)
    return PulsedExcitationResult(counts, energies, float(slope), float(math.exp(intercept)))
