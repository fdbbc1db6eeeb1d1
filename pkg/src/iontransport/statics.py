"""Equilibrium configurations of ions in a 3D harmonic trap with Coulomb repulsion.

All functions here work in the dimensionless units described in
:mod:`iontransport.trap`: the potential of ``N`` ions is

    V = 1/2 sum_i (bx^2 x_i^2 + by^2 y_i^2 + z_i^2) + sum_{i<j} 1 / |r_i - r_j|

with ``bx = omega_x / omega_z`` and ``by = omega_y / omega_z``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence
from .trap import TrapConfig

FORCE_TOL = 1e-10
SADDLE_TOL = -1e-10
ZIGZAG_KICK = 1e-3
LINEAR_THRESHOLD = 1e-6
ZIGZAG_THRESHOLD = 1e-3


class ConfigClass(str, enum.Enum):
    LINEAR = "Linear"
    ZIGZAG = "ZigZag"
    OTHER = "Other"


@dataclass(frozen=True)
class EquilibriumConfiguration:
    """Force-balanced ion positions (N x 3, units of ``length_scale``) sorted by z."""

    n_ions: int
    positions: np.ndarray
    length_scale: float
    potential_value: float
    min_hessian_eigenvalue: float
    config_class: ConfigClass

    @property
    def z(self) -> np.ndarray:
        return self.positions[:, 2]

    @property
    def is_linear(self) -> bool:
        return self.config_class is ConfigClass.LINEAR

    def positions_si(self) -> np.ndarray:
        return self.positions * self.length_scale

    def to_dict(self) -> dict:
        return {
            "n_ions": self.n_ions,
            "positions": self.positions.tolist(),
            "length_scale": self.length_scale,
            "potential_value": self.potential_value,
            "min_hessian_eigenvalue": self.min_hessian_eigenvalue,
            "config_class": self.config_class.value,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "EquilibriumConfiguration":
        pos = np.asarray(data["positions"], dtype=float).reshape(-1, 3)
        pos.setflags(write=False)
        return cls(
            n_ions=int(data["n_ions"]),
            positions=pos,
            length_scale=float(data["length_scale"]),
            potential_value=float(data["potential_value"]),
            min_hessian_eigenvalue=float(data["min_hessian_eigenvalue"]),
            config_class=ConfigClass(data["config_class"]),
        )


def _pair_geometry(pos):
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    return d, r2


def potential(pos: np.ndarray, beta: np.ndarray) -> float:
    """Dimensionless potential energy of the configuration ``pos`` (N x 3)."""
    pos = np.asarray(pos, dtype=float)
    trap = 0.5 * np.sum(beta ** 2 * pos ** 2)
    _, r2 = _pair_geometry(pos)
    iu = np.triu_indices(len(pos), k=1)
    return float(trap + np.sum(1.0 / np.sqrt(r2[iu])))


def gradient(pos: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Gradient of :func:`potential` (equals minus the force), N x 3."""
    pos = np.asarray(pos, dtype=float)
    d, r2 = _pair_geometry(pos)
    inv_r3 = r2 ** -1.5
    return beta ** 2 * pos - np.einsum("ij,ijk->ik", inv_r3, d)


def hessian(pos: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Full 3N x 3N Hessian of :func:`potential`, index ``3 * ion + axis``."""
    pos = np.asarray(pos, dtype=float)
    n = len(pos)
    d, r2 = _pair_geometry(pos)
    inv_r3 = r2 ** -1.5
    inv_r5 = r2 ** -2.5
    # second derivative of 1/|r_i - r_j| with respect to r_i (3x3 per pair)
    t = 3.0 * inv_r5[:, :, None, None] * d[:, :, :, None] * d[:, :, None, :]
    t -= inv_r3[:, :, None, None] * np.eye(3)
    h = -t
    diag = np.diag(beta ** 2) + t.sum(axis=1)
    h[np.arange(n), np.arange(n)] = diag
    return h.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)


def _initial_guess(n_ions: int) -> np.ndarray:
    pos = np.zeros((n_ions, 3))
    if n_ions > 1:
        half = n_ions ** 0.56
        pos[:, 2] = np.linspace(-half, half, n_ions)
    return pos


def _newton(pos, beta, max_iter):
    """Saddle-free Newton iteration with backtracking; returns (pos, force_norm)."""
    n = len(pos)
    u = pos.ravel().copy()
    energy = potential(pos, beta)
    g = gradient(pos, beta).ravel()
    previous = np.inf
    for _ in range(max_iter):
        fnorm = np.max(np.abs(g))
        # polish below the tolerance until rounding stalls progress
        if fnorm < 1e-3 * FORCE_TOL or (fnorm < FORCE_TOL and fnorm > 0.5 * previous):
            break
        previous = fnorm
        lam, vec = np.linalg.eigh(hessian(u.reshape(n, 3), beta))
        # |lambda| turns the Newton step into a descent direction near saddles
        step = -vec @ ((vec.T @ g) / np.maximum(np.abs(lam), 1e-12))
        slope = g @ step
        alpha = 1.0
        # predicted decrease below rounding: energies cannot rank steps, take it whole
        rounding = abs(slope) < 1e-12 * max(1.0, abs(energy))
        while not rounding:
            trial = u + alpha * step
            trial_pos = trial.reshape(n, 3)
            trial_energy = potential(trial_pos, beta)
            if trial_energy <= energy + 1e-4 * alpha * slope:
                break
            if alpha < 1e-10:
                # energy differences below rounding: accept if the force shrinks
                trial = u + step
                trial_pos = trial.reshape(n, 3)
                trial_energy = potential(trial_pos, beta)
                break
            alpha *= 0.5
        if rounding:
            trial = u + step
            trial_pos = trial.reshape(n, 3)
            trial_energy = potential(trial_pos, beta)
        u = trial
        energy = trial_energy
        g = gradient(trial_pos, beta).ravel()
    return u.reshape(n, 3), float(np.max(np.abs(g)))


def solve_equilibrium(trap: TrapConfig, n_ions: int, max_iter: int = 200) -> EquilibriumConfiguration:
    """Find a stable equilibrium of ``n_ions`` ions in ``trap``.

    Starts from a uniformly spaced collinear chain.  If the collinear
    stationary point is a saddle, the configuration is pushed along the most
    unstable Hessian eigenvector and minimised again, which selects the
    zig-zag branch.

    Raises
    ------
    NonConvergence
        If the residual force stays above ``FORCE_TOL`` after ``max_iter``
        Newton steps, or no minimum is reached after repeated saddle escapes.
    """
    if n_ions < 1:
        raise ValueError("n_ions must be >= 1")
    beta = trap.beta
    pos = _initial_guess(n_ions)
    for _ in range(10):
        pos, fnorm = _newton(pos, beta, max_iter)
        if fnorm >= FORCE_TOL:
            raise NonConvergence(f"residual force {fnorm:.3e} after {max_iter} Newton steps (N={n_ions})")
        lam, vec = np.linalg.eigh(hessian(pos, beta))
        if lam[0] >= SADDLE_TOL:
            break
        mode = vec[:, 0].reshape(n_ions, 3)
        pos = pos + ZIGZAG_KICK * mode / np.max(np.abs(mode))
    else:
        raise NonConvergence(f"no stable minimum found for N={n_ions}")

    order = np.argsort(pos[:, 2], kind="stable")
    pos = pos[order]
    # clean float noise on coordinates that are zero by symmetry
    pos[np.abs(pos) < 1e-14] = 0.0
    pos.setflags(write=False)
    cls = classify_positions(pos)
    return EquilibriumConfiguration(
        n_ions=n_ions,
        positions=pos,
        length_scale=trap.length_scale,
        potential_value=potential(pos, beta),
        min_hessian_eigenvalue=float(lam[0]),
        config_class=cls,
    )


def classify_positions(pos: np.ndarray) -> ConfigClass:
    transverse = np.asarray(pos)[:, :2]
    amp = np.linalg.norm(transverse, axis=1)
    if np.all(amp < LINEAR_THRESHOLD):
        return ConfigClass.LINEAR
    if np.max(amp) <= ZIGZAG_THRESHOLD:
        return ConfigClass.OTHER
    # planar: transverse vectors share one direction
    _, _, vt = np.linalg.svd(transverse, full_matrices=False)
    axis = vt[0]
    along = transverse @ axis
    perp = transverse - np.outer(along, axis)
    if np.max(np.linalg.norm(perp, axis=1)) >= LINEAR_THRESHOLD:
        return ConfigClass.OTHER
    signs = np.sign(along[np.abs(along) >= LINEAR_THRESHOLD])
    if len(signs) < 2 or np.any(signs[1:] == signs[:-1]):
        return ConfigClass.OTHER
    return ConfigClass.ZIGZAG


def classify_configuration(config: EquilibriumConfiguration) -> ConfigClass:
    """Linear, planar alternating ZigZag, or Other (3D / non-alternating)."""
    return classify_positions(config.positions)


def residual_force(config: EquilibriumConfiguration, trap: TrapConfig) -> float:
    return float(np.max(np.abs(gradient(config.positions, trap.beta))))
