"""Normal modes, the local-phonon model and single-site mode decompositions.

Site and mode indices are 1-based throughout the public API so that
``site=1`` is the leftmost ion and mode 1 is the radial center-of-mass mode.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .errors import BranchUnavailable, NumericalFailure
from .statics import EquilibriumConfiguration, hessian
from .trap import TWO_PI, TrapConfig

EIGEN_RESIDUAL_TOL = 1e-9


class Branch(str, enum.Enum):
    RADIAL_X = "RadialX"
    RADIAL_Y = "RadialY"
    AXIAL = "Axial"

    @property
    def axis(self) -> int:
        return {"RadialX": 0, "RadialY": 1, "Axial": 2}[self.value]


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_site(site: int, n: int) -> int:
    if not 1 <= site <= n:
        raise IndexError(f"site {site} out of range 1..{n}")
    return site - 1


@dataclass(frozen=True)
class QuadraticForm:
    """Second-order expansion of the potential along one branch.

    ``matrix`` is dimensionless (units of ``m omega_z^2``); its eigenvalues
    are the squared mode frequencies in units of ``omega_z^2``.
    """

    matrix: np.ndarray
    branch: Branch
    omega_z: float


@dataclass(frozen=True)
class ModeSpectrum:
    """Eigenfrequencies (rad/s) and orthonormal eigenvectors (columns) of one branch."""

    branch: Branch
    frequencies: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    def mode(self, n: int) -> np.ndarray:
        """Eigenvector of mode ``n`` (1-based)."""
        return self.eigenvectors[:, _check_site(n, self.n_modes)]

    def to_dict(self) -> dict:
        return {
            "branch": self.branch.value,
            "units": "Hz",
            "frequencies": (self.frequencies / TWO_PI).tolist(),
            "modes": [
                {"index": n + 1, "frequency": float(self.frequencies[n] / TWO_PI),
                 "vector": self.eigenvectors[:, n].tolist()}
                for n in range(self.n_modes)
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass(frozen=True)
class FullModeSpectrum:
    """All 3N modes of a (possibly non-linear) crystal.

    ``dominant_axis[k]`` is the Cartesian axis (0=x, 1=y, 2=z) carrying the
    largest share of mode ``k``'s displacement.
    """

    frequencies: np.ndarray
    eigenvectors: np.ndarray
    dominant_axis: np.ndarray

    @property
    def n_ions(self) -> int:
        return len(self.frequencies) // 3

    def branch(self, branch: Branch) -> np.ndarray:
        """0-based indices of the modes classified into ``branch``."""
        return np.flatnonzero(self.dominant_axis == branch.axis)


@dataclass(frozen=True)
class LocalModeModel:
    """Site frequencies and tunnelling matrix of the local-phonon picture (rad/s)."""

    site_frequencies: np.ndarray
    tunneling: np.ndarray
    omega_x: float

    @property
    def n_sites(self) -> int:
        return len(self.site_frequencies)

    def t(self, i: int, j: int) -> float:
        """Tunnelling amplitude between 1-based sites ``i`` and ``j``."""
        return float(self.tunneling[_check_site(i, self.n_sites), _check_site(j, self.n_sites)])

    def hopping_matrix(self) -> np.ndarray:
        return np.diag(self.site_frequencies) + self.tunneling

    def to_dict(self) -> dict:
        return {
            "units": "Hz",
            "omega_x": self.omega_x / TWO_PI,
            "site_frequencies": (self.site_frequencies / TWO_PI).tolist(),
            "tunneling": (self.tunneling / TWO_PI).tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass(frozen=True)
class ModeDecomposition:
    """Coefficients ``c_n`` of a unit displacement of ``site`` in the mode basis."""

    site: int
    coefficients: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        """Squared coefficients; they sum to one."""
        return self.coefficients ** 2

    def to_dict(self) -> dict:
        return {
            "site": self.site,
            "mode_index": list(range(1, len(self.coefficients) + 1)),
            "c_n": self.coefficients.tolist(),
            "abs_c_n": np.abs(self.coefficients).tolist(),
            "c_n_squared": self.weights.tolist(),
        }


def _inverse_cube_distances(z):
    dz = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(dz, np.inf)
    return dz ** -3.0


def _require_linear(config: EquilibriumConfiguration, what: str):
    if not config.is_linear:
        raise BranchUnavailable(
            f"{what} assumes a linear chain; configuration is {config.config_class.value} "
            "(use full_mode_spectrum)"
        )


def quadratic_form(config: EquilibriumConfiguration, trap: TrapConfig, branch: Branch | str) -> QuadraticForm:
    """Small-displacement expansion of the potential of a linear chain along ``branch``.

    Radial branches: diagonal ``beta^2 - sum_j 1/|dz_ij|^3``, off-diagonal
    ``+1/|dz_ij|^3``.  Axial: diagonal ``1 + 2 sum_j 1/|dz_ij|^3``,
    off-diagonal ``-2/|dz_ij|^3``.
    """
    branch = Branch(branch)
    _require_linear(config, "quadratic_form")
    k = _inverse_cube_distances(np.asarray(config.z))
    row = k.sum(axis=1)
    if branch is Branch.AXIAL:
        m = np.diag(1.0 + 2.0 * row) - 2.0 * k
    else:
        b2 = trap.beta[branch.axis] ** 2
        m = np.diag(b2 - row) + k
    return QuadraticForm(matrix=_readonly(m), branch=branch, omega_z=trap.omega_z)


def _fix_signs(vecs):
    """Make the largest-magnitude component of every column positive.

    Near-ties (mirror-symmetric modes) resolve to the lowest index.
    """
    vecs = vecs.copy()
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        mag = np.abs(col)
        idx = int(np.flatnonzero(mag >= mag.max() - 1e-9)[0])
        if col[idx] < 0:
            vecs[:, k] = -col
    return vecs


def _eigh_checked(matrix):
    matrix = np.asarray(matrix, dtype=float)
    if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-12 * max(1.0, np.abs(matrix).max())):
        raise ValueError("matrix is not symmetric")
    lam, vecs = np.linalg.eigh(matrix)
    residual = np.max(np.abs(matrix @ vecs - vecs * lam)) if len(lam) else 0.0
    if residual > EIGEN_RESIDUAL_TOL:
        raise NumericalFailure(f"eigen-solve residual {residual:.3e} exceeds {EIGEN_RESIDUAL_TOL}")
    return lam, vecs


def mode_spectrum(form: QuadraticForm) -> ModeSpectrum:
    """Diagonalise a quadratic form into an orthonormal, sorted mode spectrum.

    Radial branches are sorted by decreasing frequency (mode 1 is the
    center-of-mass mode), the axial branch by increasing frequency.
    """
    lam, vecs = _eigh_checked(form.matrix)
    if np.any(lam <= 0):
        raise NumericalFailure("non-positive squared frequency: configuration is not stable on this branch")
    order = np.argsort(lam, kind="stable")
    if form.branch is not Branch.AXIAL:
        order = order[::-1]
    lam = lam[order]
    vecs = _fix_signs(vecs[:, order])
    return ModeSpectrum(
        branch=form.branch,
        frequencies=_readonly(np.sqrt(lam) * form.omega_z),
        eigenvectors=_readonly(vecs),
    )


def branch_spectrum(config: EquilibriumConfiguration, trap: TrapConfig, branch: Branch | str = Branch.RADIAL_X) -> ModeSpectrum:
    return mode_spectrum(quadratic_form(config, trap, branch))


def full_mode_spectrum(config: EquilibriumConfiguration, trap: TrapConfig) -> FullModeSpectrum:
    """Diagonalise the full 3N x 3N Hessian at equilibrium.

    Works for any stable configuration, including zig-zag crystals.  Modes are
    sorted by decreasing frequency and labelled by their dominant axis.
    """
    h = hessian(config.positions, trap.beta)
    lam, vecs = _eigh_checked(h)
    if np.any(lam <= 0):
        raise NumericalFailure("configuration is not a minimum (non-positive Hessian eigenvalue)")
    order = np.argsort(lam, kind="stable")[::-1]
    lam = lam[order]
    vecs = _fix_signs(vecs[:, order])
    share = (vecs ** 2).reshape(config.n_ions, 3, -1).sum(axis=0)
    return FullModeSpectrum(
        frequencies=_readonly(np.sqrt(lam) * trap.omega_z),
        eigenvectors=_readonly(vecs),
        dominant_axis=np.argmax(share, axis=0),
    )


def local_mode_model(config: EquilibriumConfiguration, trap: TrapConfig) -> LocalModeModel:
    """Site-dependent local frequencies and tunnelling amplitudes along x.

    ``omega_i = omega_x - (omega_z^2 / 2 omega_x) sum_j 1/dz_ij^3`` and
    ``t_ij = (omega_z^2 / 2 omega_x) / dz_ij^3`` with dimensionless ``dz``.
    """
    _require_linear(config, "local_mode_model")
    k = _inverse_cube_distances(np.asarray(config.z))
    scale = trap.omega_z ** 2 / (2.0 * trap.omega_x)
    return LocalModeModel(
        site_frequencies=_readonly(trap.omega_x - scale * k.sum(axis=1)),
        tunneling=_readonly(scale * k),
        omega_x=trap.omega_x,
    )


def decompose_unit_displacement(spectrum: ModeSpectrum, site: int) -> ModeDecomposition:
    """Project a unit displacement of ``site`` (1-based) onto the modes: ``c_n = v_n[site]``."""
    idx = _check_site(site, spectrum.n_modes)
    return ModeDecomposition(site=site, coefficients=_readonly(spectrum.eigenvectors[idx, :]))
