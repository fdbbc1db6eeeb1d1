"""Classical molecular dynamics with a compiled velocity-Verlet kernel."""

from .backend import BACKEND
from .engine import (
    DriveMode,
    KickSchedule,
    MDState,
    PulsedExcitationResult,
    Trajectory,
    default_dt,
    dress_micromotion,
    force_field,
    integrate,
    local_energy_trace,
    pulsed_excitation_energy,
    total_energy,
)
from .trajio import load_trajectory, save_trajectory

__all__ = [
    "BACKEND",
    "DriveMode",
    "KickSchedule",
    "MDState",
    "PulsedExcitationResult",
    "Trajectory",
    "default_dt",
    "dress_micromotion",
    "force_field",
    "integrate",
    "load_trajectory",
    "local_energy_trace",
    "pulsed_excitation_energy",
    "save_trajectory",
    "total_energy",
]
