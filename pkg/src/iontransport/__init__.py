"""Energy transport in trapped-ion chains.

Equilibrium crystals, normal and local modes, linear phonon dynamics,
nonlinear molecular dynamics and red-sideband readout.
"""

from .dynamics import (
    EnergyTrace,
    find_revivals,
    propagate_exact,
    propagate_full,
    propagate_hopping,
    time_average,
    transfer_asymmetry,
)
from .errors import (
    BranchUnavailable,
    ConfigInvalid,
    EmptyTrace,
    FitDiverged,
    IoFailure,
    IonChainError,
    IonCollision,
    NonConvergence,
    NumericalFailure,
    StepTooLarge,
    TruncationOverflow,
)
from .modes import (
    Branch,
    branch_spectrum,
    decompose_unit_displacement,
    full_mode_spectrum,
    local_mode_model,
    mode_spectrum,
    quadratic_form,
)
from .readout import (
    SidebandConfig,
    displaced_thermal_pops,
    fit_alpha,
    fit_nbar,
    lamb_dicke_parameter,
    pg_trace,
)
from .statics import ConfigClass, EquilibriumConfiguration, classify_configuration, solve_equilibrium
from .trap import RFDrive, TrapConfig

__version__ = "0.1.0"
