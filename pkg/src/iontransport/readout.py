"""Red-sideband energy readout of a single ion.

Occupation statistics of a phase-averaged displaced thermal state, the
motional-state dependent sideband Rabi frequencies, the ground-state
probability signal ``P_g(t)`` and the inverse fits for ``nbar`` and
``|alpha|``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.constants as const
from scipy.optimize import minimize_scalar

from .errors import FitDiverged, TruncationOverflow
from .trap import CA40_MASS, TWO_PI

PROBE_TIME = 7.5e-6
PROBE_WAVELENGTH = 729e-9
BEAM_ANGLE = math.pi / 4
DEFAULT_TAIL = 1e-10
N_MAX_CAP = 200000
NBAR_BRACKET = (1e-3, 1e3)


def laguerre(n: int, x, alpha: float = 0.0):
    """Generalised Laguerre polynomial ``L_n^alpha(x)`` by upward recurrence."""
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev
    cur = 1.0 + alpha - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur


def lamb_dicke_parameter(
    omega: float,
    mass: float = CA40_MASS,
    wavelength: float = PROBE_WAVELENGTH,
    angle: float = BEAM_ANGLE,
) -> float:
    """``eta = k cos(angle) sqrt(hbar / 2 m omega)`` for a beam at ``angle`` to the mode."""
    k = TWO_PI / wavelength
    return k * math.cos(angle) * math.sqrt(const.hbar / (2.0 * mass * omega))


@dataclass(frozen=True)
class DisplacedThermalDistribution:
    nbar: float
    alpha_mag: float
    n_max: int
    probabilities: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.arange(len(self.probabilities)) @ self.probabilities)


@dataclass(frozen=True)
class SidebandConfig:
    """Bare coupling ``omega_0`` (rad/s), Lamb-Dicke ``eta`` and probe time (s)."""

    omega_0: float
    eta: float
    probe_time: float = PROBE_TIME

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.probe_time > 0:
            raise ValueError("probe_time must be positive")
        if not self.omega_0 > 0:
            raise ValueError("omega_0 must be positive")

    def probe_grid(self, n_points: int = 31) -> np.ndarray:
        """Evenly spaced probe durations from 0 to ``probe_time``."""
        return np.linspace(0.0, self.probe_time, n_points)


@dataclass(frozen=True)
class PgTrace:
    times: np.ndarray
    pg: np.ndarray

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time_s", "pg"])
        for t, p in zip(self.times, self.pg):
            writer.writerow([repr(float(t)), repr(float(p))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "PgTrace":
        text = path_or_text
        if "\n" not in str(path_or_text):
            with open(path_or_text, newline="") as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["time_s", "pg"]:
            raise ValueError("not a P_g CSV")
        data = np.array(rows[1:], dtype=float).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class FitResult:
    """Fitted value, residual sum of squares and truncation used.

    ``at_bound`` flags a minimiser sitting on the lower bracket edge, e.g.
    a dark trace fitted for ``nbar``.
    """

    value: float
    residual: float
    n_max: int
    at_bound: bool = False

    def to_dict(self, name: str) -> dict:
        return {name: self.value, "residual": self.residual, "n_max": self.n_max, "at_bound": self.at_bound}


def displaced_thermal_pops(
    nbar: float, alpha_mag: float, tail_tolerance: float = DEFAULT_TAIL, n_max_cap: int = N_MAX_CAP
) -> DisplacedThermalDistribution:
    """Populations of a phase-averaged displaced thermal state.

    ``p_n = (1/(nbar+1)) w^n exp(-|a|^2/(nbar+1)) L_n(-|a|^2 / (nbar (nbar+1)))``
    with ``w = nbar/(nbar+1)``.  The recurrence runs on ``w^n L_n`` so it
    stays finite as ``nbar -> 0``; ``nbar == 0`` takes the Poisson branch.
    Terms are generated until the discarded tail is below ``tail_tolerance``.
    """
    if nbar < 0 or alpha_mag < 0:
        raise ValueError("nbar and alpha_mag must be non-negative")
    a2 = float(alpha_mag) ** 2
    probs = []
    total = 0.0
    if nbar == 0.0:
        p = math.exp(-a2)
        n = 0
        while True:
            probs.append(p)
            total += p
            if 1.0 - total < tail_tolerance and n >= a2:
                break
            n += 1
            if n > n_max_cap:
                raise TruncationOverflow(f"n_max would exceed {n_max_cap}")
            p *= a2 / n
    elif a2 == 0.0:
        # pure thermal: geometric, tail after n_max is w^(n_max + 1)
        w = nbar / (nbar + 1.0)
        n_max = max(int(math.ceil(math.log(tail_tolerance) / math.log(w))) - 1, int(nbar))
        if n_max > n_max_cap:
            raise TruncationOverflow(f"n_max would exceed {n_max_cap}")
        probs = w ** np.arange(n_max + 1) / (nbar + 1.0)
    else:
        w = nbar / (nbar + 1.0)
        pref = math.exp(-a2 / (nbar + 1.0)) / (nbar + 1.0)
        # m_k = w^k L_k(x) with x = -a2 / (nbar (nbar + 1)); w * x = -a2 / (nbar + 1)^2
        wx = -a2 / (nbar + 1.0) ** 2
        m_prev, m_cur = 0.0, 1.0
        k = 0
        while True:
            p = pref * m_cur
            probs.append(p)
            total += p
            if 1.0 - total < tail_tolerance and k >= nbar + a2:
                break
            m_prev, m_cur = m_cur, ((2 * k + 1) * w * m_cur - wx * m_cur - k * w * w * m_prev) / (k + 1)
            k += 1
            if k > n_max_cap:
                raise TruncationOverflow(f"n_max would exceed {n_max_cap}")
    arr = np.array(probs)
    arr.setflags(write=False)
    return DisplacedThermalDistribution(nbar=nbar, alpha_mag=alpha_mag, n_max=len(arr) - 1, probabilities=arr)


_RABI_TABLES: dict[float, np.ndarray] = {}


def _rabi_table(n_max: int, eta: float) -> np.ndarray:
    """``Omega_{n,n-1} / Omega_0`` for n = 0..n_max (entry 0 is the dark state).

    Tables are cached per ``eta`` and grown on demand.
    """
    table = _RABI_TABLES.get(eta)
    if table is None or len(table) <= n_max:
        size = max(n_max + 1, 2 * len(table) if table is not None else 1024)
        table = _build_rabi_table(size - 1, eta)
        _RABI_TABLES[eta] = table
    return table[: n_max + 1]


def _build_rabi_table(n_max, eta):
    x = eta * eta
    out = np.zeros(n_max + 1)
    prev, cur = 0.0, 1.0  # L^1_{-1}, L^1_0
    for n in range(1, n_max + 1):
        # cur holds L^1_{n-1}(x)
        out[n] = math.exp(-0.5 * x) * eta / math.sqrt(n) * abs(cur)
        k = n - 1
        prev, cur = cur, ((2 * k + 2 - x) * cur - (k + 1) * prev) / (k + 1)
    out.setflags(write=False)
    return out


def rabi_frequency(n: int, sideband: SidebandConfig) -> float:
    """Red-sideband Rabi frequency ``|<n-1| exp(i eta (a + a^dag)) |n>| Omega_0`` (rad/s)."""
    if n < 1:
        raise ValueError("red sideband requires n >= 1")
    x = sideband.eta ** 2
    lag = float(laguerre(n - 1, x, alpha=1.0))
    return sideband.omega_0 * math.exp(-0.5 * x) * sideband.eta / math.sqrt(n) * abs(lag)


def pg_values(probabilities: np.ndarray, sideband: SidebandConfig, times) -> np.ndarray:
    """Ground-state probability; the truncated distribution is renormalised.

    Written as ``1 - sum p_n (1 - cos) / 2`` so that ``P_g(0) = 1`` exactly.
    """
    p = np.asarray(probabilities, dtype=float)
    rabi = sideband.omega_0 * _rabi_table(len(p) - 1, sideband.eta)
    times = np.asarray(times, dtype=float)
    return 1.0 - 0.5 * ((1.0 - np.cos(np.outer(times, rabi))) @ p) / p.sum()


def pg_trace(dist: DisplacedThermalDistribution, sideband: SidebandConfig, times) -> PgTrace:
    """``P_g(t) = (1 + sum_n p_n cos(Omega_{n,n-1} t)) / 2``; ``|g,0>`` is dark."""
    times = np.asarray(times, dtype=float)
    return PgTrace(times=times, pg=pg_values(dist.probabilities, sideband, times))


def sample_shots(trace: PgTrace, shots: int, rng: np.random.Generator) -> PgTrace:
    """Projection-noise version of ``trace``: ground-state fraction of ``shots`` Bernoulli trials."""
    p = np.clip(trace.pg, 0.0, 1.0)
    return PgTrace(times=trace.times, pg=rng.binomial(shots, p) / shots)


def _golden_fit(residual, lo, hi, n_grid, log=False):
    """Grid scan followed by bounded refinement around the best grid point."""
    grid = np.geomspace(lo, hi, n_grid) if log else np.linspace(lo, hi, n_grid)
    values = np.array([residual(g) for g in grid])
    if not np.all(np.isfinite(values)):
        raise FitDiverged("non-finite residual in fit bracket")
    k = int(np.argmin(values))
    left, right = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    if left == right:
        return float(grid[k]), float(values[k])
    if log:
        res = minimize_scalar(lambda u: residual(math.exp(u)), bounds=(math.log(left), math.log(right)),
                              method="bounded", options={"xatol": 1e-10})
        x = math.exp(res.x)
    else:
        res = minimize_scalar(residual, bounds=(left, right), method="bounded", options={"xatol": 1e-10})
        x = float(res.x)
    if res.fun > values[k]:
        return float(grid[k]), float(values[k])
    return x, float(res.fun)


def fit_nbar(trace: PgTrace, sideband: SidebandConfig, bracket=NBAR_BRACKET) -> FitResult:
    """Least-squares ``nbar`` of an unexcited (``alpha = 0``) trace.

    Raises ``FitDiverged`` when the best fit sits on the upper bracket edge;
    the lower edge is returned with ``at_bound=True``.
    """
    lo, hi = bracket
    pg = np.asarray(trace.pg)

    def residual(nbar):
        dist = displaced_thermal_pops(nbar, 0.0)
        return float(np.sum((pg_values(dist.probabilities, sideband, trace.times) - pg) ** 2))

    x, fun = _golden_fit(residual, lo, hi, 41, log=True)
    if x >= hi * (1 - 1e-6):
        raise FitDiverged(f"nbar fit ran into the upper bracket edge {hi}")
    at_bound = x <= lo * (1 + 1e-6)
    return FitResult(value=x, residual=fun, n_max=displaced_thermal_pops(x, 0.0).n_max, at_bound=at_bound)


def fit_alpha(trace: PgTrace, nbar: float, sideband: SidebandConfig, cap: float = 20.0) -> FitResult:
    """Least-squares ``|alpha|`` on ``[0, cap]`` for known ``nbar``."""
    pg = np.asarray(trace.pg)

    def residual(alpha):
        dist = displaced_thermal_pops(nbar, alpha)
        return float(np.sum((pg_values(dist.probabilities, sideband, trace.times) - pg) ** 2))

    x, fun = _golden_fit(residual, 0.0, cap, 81)
    if x >= cap * (1 - 1e-6):
        raise FitDiverged(f"alpha fit ran into the cap {cap}")
    return FitResult(value=x, residual=fun, n_max=displaced_thermal_pops(nbar, x).n_max, at_bound=x <= 1e-9)
