# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled velocity-Verlet loop for N ions with Coulomb repulsion.

Dimensionless units (lengths l, time 1/omega_z).  The trap spring constant
along axis ``a`` at time ``t`` is ``k0[a] + k1[a] * cos(omega_rf * t)``.
"""

from libc.math cimport sqrt, cos, floor


cdef inline bint _kick_active(double t, double t_start, double period, double duty, long count) nogil:
    cdef double rel = t - t_start
    if count <= 0 or rel < 0.0:
        return False
    cdef double k = floor(rel / period)
    if k >= count:
        return False
    return (rel - k * period) < duty * period


cdef int _forces(double[:, ::1] pos, double t, double[::1] k0, double[::1] k1, double omega_rf,
                 long kick_site, double[::1] kick_dir, double kick_amp, double kick_t0,
                 double kick_period, double kick_duty, long kick_count, double min_dist,
                 double[:, ::1] out) nogil:
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i, j, a
    cdef double c = cos(omega_rf * t) if omega_rf != 0.0 else 0.0
    cdef double k, dx, dy, dz, r2, inv_r3
    cdef double min2 = min_dist * min_dist
    for i in range(n):
        for a in range(3):
            k = k0[a] + k1[a] * c
            out[i, a] = -k * pos[i, a]
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 < min2:
                return 1
            inv_r3 = 1.0 / (r2 * sqrt(r2))
            out[i, 0] += dx * inv_r3
            out[i, 1] += dy * inv_r3
            out[i, 2] += dz * inv_r3
            out[j, 0] -= dx * inv_r3
            out[j, 1] -= dy * inv_r3
            out[j, 2] -= dz * inv_r3
    if kick_site >= 0 and _kick_active(t, kick_t0, kick_period, kick_duty, kick_count):
        for a in range(3):
            out[kick_site, a] += kick_amp * kick_dir[a]
    return 0


def forces(double[:, ::1] pos, double t, double[::1] k0, double[::1] k1, double omega_rf,
           long kick_site, double[::1] kick_dir, double kick_amp, double kick_t0,
           double kick_period, double kick_duty, long kick_count, double min_dist,
           double[:, ::1] out):
    """Fill ``out`` with the force on every ion; returns 1 on collision."""
    cdef int status
    with nogil:
        status = _forces(pos, t, k0, k1, omega_rf, kick_site, kick_dir, kick_amp, kick_t0,
                         kick_period, kick_duty, kick_count, min_dist, out)
    return status


def run(double[:, ::1] pos, double[:, ::1] vel, double t0, double dt, long n_steps, long sample_every,
        double[::1] k0, double[::1] k1, double omega_rf,
        long kick_site, double[::1] kick_dir, double kick_amp, double kick_t0,
        double kick_period, double kick_duty, long kick_count, double min_dist,
        double[:, :, ::1] out_pos, double[:, :, ::1] out_vel):
    """Advance ``pos``/``vel`` in place by ``n_steps`` velocity-Verlet steps.

    Samples are written every ``sample_every`` steps, sample 0 being the
    initial state.  Returns ``-1`` on success or the step index of a
    collision.
    """
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i, a, s = 0
    cdef long step
    cdef double t
    cdef double half = 0.5 * dt
    cdef double[:, ::1] f = vel.copy()
    cdef int status
    with nogil:
        status = _forces(pos, t0, k0, k1, omega_rf, kick_site, kick_dir, kick_amp, kick_t0,
                         kick_period, kick_duty, kick_count, min_dist, f)
        if status != 0:
            with gil:
                return 0
        for i in range(n):
            for a in range(3):
                out_pos[0, i, a] = pos[i, a]
                out_vel[0, i, a] = vel[i, a]
        s = 1
        for step in range(n_steps):
            for i in range(n):
                for a in range(3):
                    vel[i, a] += half * f[i, a]
                    pos[i, a] += dt * vel[i, a]
            t = t0 + (step + 1) * dt
            status = _forces(pos, t, k0, k1, omega_rf, kick_site, kick_dir, kick_amp, kick_t0,
                             kick_period, kick_duty, kick_count, min_dist, f)
            if status != 0:
                with gil:
                    return step + 1
            for i in range(n):
                for a in range(3):
                    vel[i, a] += half * f[i, a]
            if (step + 1) % sample_every == 0:
                for i in range(n):
                    for a in range(3):
                        out_pos[s, i, a] = pos[i, a]
                        out_vel[s, i, a] = vel[i, a]
                s += 1
    return -1
