"""Trap parameters, physical constants and the dimensionless unit system.

Internally every length is measured in units of the characteristic length
``l = (e^2 / (4 pi eps0 m omega_z^2))^(1/3)``, every time in units of
``1/omega_z`` and every energy in units of ``m l^2 omega_z^2``.  SI values
only appear at API boundaries.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.constants as const
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import ConfigInvalid

TWO_PI = 2.0 * math.pi

#: 40Ca+ ion mass (atomic mass minus one electron), kg
CA40_MASS = 39.962590863 * const.atomic_mass - const.electron_mass

SPECIES_MASS = {
    "Ca40": CA40_MASS,
}

#: Trap frequencies of the energy-transport experiment, Hz
DEFAULT_FREQUENCIES_HZ = (2.25e6, 2.0e6, 0.153e6)

#: Pseudopotential consistency tolerance for an RF drive (relative)
RF_CONSISTENCY_RTOL = 0.01


@dataclass(frozen=True)
class RFDrive:
    """Mathieu parameters of a linear Paul trap drive.

    ``omega_rf`` is an angular frequency (rad/s); ``a_*`` and ``q_*`` are the
    dimensionless Mathieu parameters of each axis.  The axial direction is
    static (``q_z = 0``).
    """

    omega_rf: float
    q_x: float
    q_y: float
    a_x: float
    a_y: float
    a_z: float

    def lowest_order_secular(self) -> tuple[float, float, float]:
        """Secular angular frequencies from ``omega = (Omega/2) sqrt(a + q^2/2)``."""
        out = []
        for a, q in ((self.a_x, self.q_x), (self.a_y, self.q_y), (self.a_z, 0.0)):
            b2 = a + 0.5 * q * q
            out.append(0.5 * self.omega_rf * math.sqrt(b2) if b2 > 0 else float("nan"))
        return tuple(out)

    def exact_secular(self) -> tuple[float, float, float]:
        """Secular frequencies from the Floquet exponent of the Mathieu equation."""
        return tuple(
            0.5 * self.omega_rf * mathieu_beta(a, q)
            for a, q in ((self.a_x, self.q_x), (self.a_y, self.q_y), (self.a_z, 0.0))
        )

    @classmethod
    def matched(
        cls,
        omega_x: float,
        omega_y: float,
        omega_z: float,
        omega_rf: float = TWO_PI * 25e6,
        exact: bool = False,
    ) -> "RFDrive":
        """Drive parameters of a linear Paul trap reproducing given secular frequencies.

        Uses ``q_y = -q_x`` and the Laplace condition ``a_x + a_y + a_z = 0``.
        With ``exact=True`` the radial ``a`` values are refined so that the
        Floquet secular frequencies (not the lowest-order ones) match.
        """
        bx2 = (2.0 * omega_x / omega_rf) ** 2
        by2 = (2.0 * omega_y / omega_rf) ** 2
        a_z = (2.0 * omega_z / omega_rf) ** 2
        q = math.sqrt(bx2 + by2 + a_z)
        a_x = bx2 - 0.5 * q * q
        a_y = by2 - 0.5 * q * q
        if exact:
            bx = 2.0 * omega_x / omega_rf
            by = 2.0 * omega_y / omega_rf
            # higher-order corrections to a are O(q^4), well inside +-q^2/10
            w = 0.1 * q * q
            a_x = brentq(lambda a: mathieu_beta(a, q) - bx, a_x - w, a_x + w, xtol=1e-15)
            a_y = brentq(lambda a: mathieu_beta(a, -q) - by, a_y - w, a_y + w, xtol=1e-15)
        return cls(omega_rf=omega_rf, q_x=q, q_y=-q, a_x=a_x, a_y=a_y, a_z=a_z)


def mathieu_beta(a: float, q: float) -> float:
    """Characteristic exponent ``beta`` of ``u'' + (a - 2 q cos 2 xi) u = 0``.

    Only the first stability region (``0 < beta < 1``) is supported; raises
    ``ConfigInvalid`` outside it.
    """

    def rhs(xi, y):
        return [y[1], -(a - 2.0 * q * math.cos(2.0 * xi)) * y[0]]

    # monodromy matrix over one drive period; cos(pi beta) = trace / 2
    cosine = solve_ivp(rhs, (0.0, math.pi), [1.0, 0.0], rtol=1e-12, atol=1e-14, method="DOP853")
    sine = solve_ivp(rhs, (0.0, math.pi), [0.0, 1.0], rtol=1e-12, atol=1e-14, method="DOP853")
    half_trace = 0.5 * (cosine.y[0, -1] + sine.y[1, -1])
    if not -1.0 < half_trace < 1.0:
        raise ConfigInvalid(f"Mathieu parameters a={a}, q={q} are outside the first stability region")
    return math.acos(half_trace) / math.pi


@dataclass(frozen=True)
class TrapConfig:
    """Secular trap frequencies (rad/s), ion mass (kg) and charge (C)."""

    omega_x: float
    omega_y: float
    omega_z: float
    mass: float = CA40_MASS
    charge: float = const.elementary_charge
    rf_drive: RFDrive | None = field(default=None)

    def __post_init__(self):
        for name in ("omega_x", "omega_y", "omega_z", "mass", "charge"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigInvalid(f"{name} must be finite and strictly positive, got {value!r}")
        if self.omega_x == self.omega_y:
            raise ConfigInvalid("degenerate radial frequencies (omega_x == omega_y) are not supported")
        if self.rf_drive is not None:
            derived = self.rf_drive.lowest_order_secular()
            for label, got, want in zip("xyz", derived, (self.omega_x, self.omega_y, self.omega_z)):
                if not (np.isfinite(got) and abs(got - want) <= RF_CONSISTENCY_RTOL * want):
                    raise ConfigInvalid(
                        f"rf_drive secular frequency along {label} is {got / TWO_PI:.6g} Hz, "
                        f"expected {want / TWO_PI:.6g} Hz within {RF_CONSISTENCY_RTOL:.0%}"
                    )

    @classmethod
    def from_hz(cls, f_x: float, f_y: float, f_z: float, **kwargs) -> "TrapConfig":
        return cls(TWO_PI * f_x, TWO_PI * f_y, TWO_PI * f_z, **kwargs)

    @classmethod
    def default(cls, **kwargs) -> "TrapConfig":
        """The 40Ca+ trap at 2 pi x (2.25, 2.0, 0.153) MHz."""
        return cls.from_hz(*DEFAULT_FREQUENCIES_HZ, **kwargs)

    @property
    def length_scale(self) -> float:
        return characteristic_length(self)

    @property
    def beta(self) -> np.ndarray:
        """Trap frequencies in units of ``omega_z`` (x, y, z)."""
        return np.array([self.omega_x / self.omega_z, self.omega_y / self.omega_z, 1.0])

    @property
    def energy_scale(self) -> float:
        """SI value (J) of the dimensionless energy unit ``m l^2 omega_z^2``."""
        return self.mass * self.length_scale ** 2 * self.omega_z ** 2

    def with_frequencies(self, omega_x=None, omega_y=None, omega_z=None) -> "TrapConfig":
        return TrapConfig(
            omega_x=self.omega_x if omega_x is None else omega_x,
            omega_y=self.omega_y if omega_y is None else omega_y,
            omega_z=self.omega_z if omega_z is None else omega_z,
            mass=self.mass,
            charge=self.charge,
            rf_drive=None,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def characteristic_length(trap: TrapConfig) -> float:
    """Return ``l = (e^2 / (4 pi eps0 m omega_z^2))^(1/3)`` in metres."""
    k = trap.charge ** 2 / (4.0 * math.pi * const.epsilon_0)
    return (k / (trap.mass * trap.omega_z ** 2)) ** (1.0 / 3.0)
