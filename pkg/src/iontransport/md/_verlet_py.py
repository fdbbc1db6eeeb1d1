"""Pure-Python/numpy twin of the compiled ``_verlet`` kernel (same signatures)."""

import math

import numpy as np


def _kick_active(t, t_start, period, duty, count):
    rel = t - t_start
    if count <= 0 or rel < 0.0:
        return False
    k = math.floor(rel / period)
    if k >= count:
        return False
    return (rel - k * period) < duty * period


def forces(pos, t, k0, k1, omega_rf, kick_site, kick_dir, kick_amp, kick_t0,
           kick_period, kick_duty, kick_count, min_dist, out):
    c = math.cos(omega_rf * t) if omega_rf != 0.0 else 0.0
    out[...] = -(np.asarray(k0) + np.asarray(k1) * c) * pos
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    if r2.min() < min_dist * min_dist:
        return 1
    out += np.einsum("ij,ijk->ik", r2 ** -1.5, d)
    if kick_site >= 0 and _kick_active(t, kick_t0, kick_period, kick_duty, kick_count):
        out[kick_site] += kick_amp * np.asarray(kick_dir)
    return 0


def run(pos, vel, t0, dt, n_steps, sample_every, k0, k1, omega_rf,
        kick_site, kick_dir, kick_amp, kick_t0, kick_period, kick_duty, kick_count, min_dist,
        out_pos, out_vel):
    args = (k0, k1, omega_rf, kick_site, kick_dir, kick_amp, kick_t0,
            kick_period, kick_duty, kick_count, min_dist)
    f = np.empty_like(pos)
    if forces(pos, t0, *args, f):
        return 0
    out_pos[0] = pos
    out_vel[0] = vel
    s = 1
    half = 0.5 * dt
    for step in range(n_steps):
        vel += half * f
        pos += dt * vel
        if forces(pos, t0 + (step + 1) * dt, *args, f):
            return step + 1
        vel += half * f
        if (step + 1) % sample_every == 0:
            out_pos[s] = pos
            out_vel[s] = vel
            s += 1
    return -1
