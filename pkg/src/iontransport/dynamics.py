"""Linear time evolution of a single-site kick.

Two propagators are provided: the exact normal-mode evolution and the
hopping Hamiltonian of the local-phonon model (rotating-wave approximation).
Both work with complex site amplitudes in a frame rotating at the radial
trap frequency; the energy of ion ``i`` is the envelope ``|a_i|^2`` in
units of the kick energy.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import find_peaks

from .errors import EmptyTrace
from .modes import FullModeSpectrum, LocalModeModel, ModeSpectrum, _check_site

DEFAULT_PROMINENCE = 0.1


@dataclass(frozen=True)
class EnergyTrace:
    """Per-site energies sampled on a time grid.

    ``site_energies`` has shape (T, N') where column ``k`` belongs to the
    1-based site ``sites[k]``; by default all sites ``1..N``.
    """

    times: np.ndarray
    site_energies: np.ndarray
    sites: tuple[int, ...] = field(default=())

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        energies = np.asarray(self.site_energies, dtype=float)
        if energies.ndim != 2 or energies.shape[0] != times.shape[0]:
            raise ValueError("site_energies must have shape (len(times), n_sites)")
        sites = tuple(int(s) for s in self.sites) or tuple(range(1, energies.shape[1] + 1))
        if len(sites) != energies.shape[1]:
            raise ValueError("one site label per column required")
        times.setflags(write=False)
        energies.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "site_energies", energies)
        object.__setattr__(self, "sites", sites)

    @property
    def n_sites(self) -> int:
        return self.site_energies.shape[1]

    def column(self, site: int) -> np.ndarray:
        try:
            return self.site_energies[:, self.sites.index(site)]
        except ValueError:
            raise IndexError(f"site {site} not in trace (have {self.sites})") from None

    def select(self, sites) -> "EnergyTrace":
        cols = [self.sites.index(s) for s in sites]
        return EnergyTrace(self.times, self.site_energies[:, cols], tuple(sites))

    def normalized(self, site: int) -> "EnergyTrace":
        """Divide by the first-sample energy of ``site``."""
        return EnergyTrace(self.times, self.site_energies / self.column(site)[0], self.sites)

    def to_csv(self, path=None) -> str:
        """CSV with a ``time_s`` column followed by ``site_<i>`` columns."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time_s"] + [f"site_{s}" for s in self.sites])
        for t, row in zip(self.times, self.site_energies):
            writer.writerow([repr(float(t))] + [repr(float(e)) for e in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "EnergyTrace":
        text = path_or_text
        if "\n" not in str(path_or_text):
            with open(path_or_text, newline="") as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if header[0] != "time_s" or not all(h.startswith("site_") for h in header[1:]):
            raise ValueError("not an energy-trace CSV")
        data = np.array(body, dtype=float).reshape(len(body), len(header))
        return cls(data[:, 0], data[:, 1:], tuple(int(h[5:]) for h in header[1:]))


@dataclass(frozen=True)
class RevivalReport:
    site: int
    peak_times: np.ndarray
    peak_energies: np.ndarray
    prominence: float


def _unit_kick(n, kicked_site, amplitude):
    a0 = np.zeros(n, dtype=complex)
    a0[_check_site(kicked_site, n)] = amplitude
    return a0


def _evolve(vecs, freqs, a0, times):
    """Amplitudes sum_n v_n (v_n . a0) exp(-i freqs_n t) for all t, shape (T, N)."""
    times = np.asarray(times, dtype=float)
    coeff = vecs.T @ a0
    phases = np.exp(-1j * np.outer(times, freqs))
    return (phases * coeff) @ vecs.T


def exact_amplitudes(spectrum: ModeSpectrum, initial, times) -> np.ndarray:
    """Site amplitudes under normal-mode evolution, frame rotating at mode 1.

    Negative times evolve backwards.
    """
    freqs = spectrum.frequencies - spectrum.frequencies[0]
    return _evolve(spectrum.eigenvectors, freqs, np.asarray(initial, dtype=complex), times)


def hopping_amplitudes(model: LocalModeModel, initial, times) -> np.ndarray:
    """Site amplitudes under the hopping Hamiltonian ``H_ii = omega_i, H_ij = t_ij``.

    ``exp(-i H t)`` is evaluated by spectral decomposition of ``H - omega_x``.
    """
    h = model.hopping_matrix() - model.omega_x * np.eye(model.n_sites)
    lam, vecs = np.linalg.eigh(h)
    return _evolve(vecs, lam, np.asarray(initial, dtype=complex), times)


def propagate_exact(spectrum: ModeSpectrum, kicked_site: int, times, amplitude: complex = 1.0) -> EnergyTrace:
    """Energies ``|a_i(t)|^2`` after a unit kick of ``kicked_site`` (1-based)."""
    a0 = _unit_kick(spectrum.n_modes, kicked_site, amplitude)
    amps = exact_amplitudes(spectrum, a0, times)
    return EnergyTrace(times, np.abs(amps) ** 2)


def propagate_hopping(model: LocalModeModel, kicked_site: int, times, amplitude: complex = 1.0) -> EnergyTrace:
    a0 = _unit_kick(model.n_sites, kicked_site, amplitude)
    amps = hopping_amplitudes(model, a0, times)
    return EnergyTrace(times, np.abs(amps) ** 2)


def full_amplitudes(spectrum: FullModeSpectrum, initial, times) -> np.ndarray:
    """3N complex amplitudes (ion-major, x/y/z minor) under all-mode evolution."""
    freqs = spectrum.frequencies - spectrum.frequencies[0]
    return _evolve(spectrum.eigenvectors, freqs, np.asarray(initial, dtype=complex), times)


def propagate_full(spectrum: FullModeSpectrum, kicked_site: int, times, direction=(1.0, 0.0, 0.0)) -> EnergyTrace:
    """Linear evolution over all 3N modes; per-ion energy summed over x and y.

    Needed for zig-zag crystals, where the collinear local model is not
    defined.  ``direction`` is the kick direction (normalised internally).
    """
    n = spectrum.n_ions
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    a0 = np.zeros(3 * n, dtype=complex)
    idx = _check_site(kicked_site, n)
    a0[3 * idx:3 * idx + 3] = d
    amps = full_amplitudes(spectrum, a0, times).reshape(len(np.atleast_1d(times)), n, 3)
    return EnergyTrace(times, np.sum(np.abs(amps[:, :, :2]) ** 2, axis=2))


def find_revivals(trace: EnergyTrace, site: int, prominence: float = DEFAULT_PROMINENCE) -> RevivalReport:
    """Local maxima of one site's energy whose prominence exceeds ``prominence``.

    Prominence is the peak height above the higher of its two bounding
    valleys.
    """
    if prominence <= 0:
        raise ValueError("prominence must be positive")
    if len(trace.times) == 0:
        raise EmptyTrace("trace has no samples")
    e = trace.column(site)
    idx, _ = find_peaks(e, prominence=prominence)
    return RevivalReport(
        site=site,
        peak_times=trace.times[idx],
        peak_energies=e[idx],
        prominence=prominence,
    )


def transfer_asymmetry(trace: EnergyTrace, window: float, sites: tuple[int, int] | None = None) -> float:
    """Ratio of time-averaged energies of two sites over ``[t0, t0 + window]``.

    Defaults to the rightmost ion over its neighbour, ``<E_N> / <E_{N-1}>``.
    """
    if sites is None:
        if trace.n_sites < 3:
            raise ValueError("transfer_asymmetry needs N >= 3")
        last = trace.sites[-1]
        sites = (last, last - 1)
    t = trace.times
    mask = t <= t[0] + window * (1 + 1e-12)
    if mask.sum() < 2:
        raise EmptyTrace("window contains fewer than two samples")
    num = trapezoid(trace.column(sites[0])[mask], t[mask])
    den = trapezoid(trace.column(sites[1])[mask], t[mask])
    return float(num / den)


def time_average(trace: EnergyTrace, site: int, window: float) -> float:
    t = trace.times
    mask = t <= t[0] + window * (1 + 1e-12)
    span = t[mask][-1] - t[mask][0]
    return float(trapezoid(trace.column(site)[mask], t[mask]) / span)
