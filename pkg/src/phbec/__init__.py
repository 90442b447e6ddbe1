"""Ground states of trapped bosons by the potential-harmonics expansion method."""

__version__ = "0.1.0"

from .errors import CollapseError, ConfigError, ConvergenceError, DomainError, PhbecError, PoleError
from .gpref import GpProblem, GpResult, solve_gp
from .phem import (
    AdiabaticTable,
    ChannelMatrix,
    SystemSpec,
    build_adiabatic_table,
    effective_matrix,
    f_squared,
    lowest_channel,
    raw_matrix_element,
    symmetrized_matrix,
)
from .radial import SpectrumResult, metastable_window, solve_bound_states
from .specfun import (
    JacobiParams,
    QuadratureRule,
    gauss_jacobi_rule,
    jacobi_norm,
    jacobi_P,
    log_gamma,
)
from .twobody import (
    GaussianPotential,
    ScatteringResult,
    TrapUnits,
    born_scattering_length,
    find_first_pole,
    invert_v0,
    scattering_length,
    to_oscillator_units,
)
