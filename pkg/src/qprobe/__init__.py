"""Dissipative qubit-probe dynamics and quantum Fisher information.

Three engines compute the reduced dynamics of a qubit coupled to a
zero-temperature bosonic environment with exponential memory: a numerically
exact auxiliary-density-operator hierarchy (HEOM), the Born-approximated
memory-kernel Bloch equations solved by exact Laplace inversion, and the
rotating-wave closed form.  On top of them sits a finite-difference
pipeline for the quantum Fisher information of the tunneling frequency,
plus independent oracles (Lindblad limit, pure-dephasing closed form, and
a brute-force few-mode wave-function propagation) used for validation.
"""

__version__ = "0.1.0"

from .bath import DiscretizedBath, discretize_bath, markovianity_ratio, ou_correlation
from .core import (
    MIXED,
    PERPENDICULAR_Z,
    ConfigError,
    CouplingOperator,
    ModelParams,
    NumericsError,
    QProbeError,
    Trajectory,
    bloch_from_density,
    coupling_operator,
    density_from_bloch,
)
from .gbe import build_transfer_matrix, gbe_propagate, kernel_laplace, volterra_propagate
from .heom import (
    AdoHierarchy,
    HeomConfig,
    HeomSettings,
    heom_converged_propagate,
    heom_propagate,
    heom_propagate_grid,
    heom_rhs,
)
from .oracles import dephasing_coherence, few_mode_schrodinger, lindblad_propagate
from .qfi import (
    QfiSample,
    cramer_rao_bound,
    finite_diff,
    qfi_bloch,
    qfi_eigen,
    qfi_via_solver,
)
from .rwa import decay_factor, rwa_propagate, rwa_qfi, rwa_state

__all__ = [
    "AdoHierarchy",
    "ConfigError",
    "CouplingOperator",
    "DiscretizedBath",
    "HeomConfig",
    "HeomSettings",
    "MIXED",
    "ModelParams",
    "NumericsError",
    "PERPENDICULAR_Z",
    "QProbeError",
    "QfiSample",
    "Trajectory",
    "bloch_from_density",
    "build_transfer_matrix",
    "coupling_operator",
    "cramer_rao_bound",
    "decay_factor",
    "density_from_bloch",
    "dephasing_coherence",
    "discretize_bath",
    "few_mode_schrodinger",
    "finite_diff",
    "gbe_propagate",
    "heom_converged_propagate",
    "heom_propagate",
    "heom_propagate_grid",
    "heom_rhs",
    "kernel_laplace",
    "lindblad_propagate",
    "markovianity_ratio",
    "ou_correlation",
    "qfi_bloch",
    "qfi_eigen",
    "qfi_via_solver",
    "rwa_propagate",
    "rwa_qfi",
    "rwa_state",
    "volterra_propagate",
]
