"""Structure-preserving model reduction for canonical Hamiltonian systems."""

from .basis import (
    ReducedBasis,
    block_qp,
    complex_svd,
    cotangent_lift,
    ordinary_pod,
    projection_error,
    reduced_symplectic,
    snapshot_energy,
)
from .fom import (
    HamiltonianSystem,
    NonlinearTerm,
    SnapshotSet,
    build_from_matrices,
    build_lattice_fom,
    build_wave_fom,
    hamiltonian_value,
    integrate_midpoint,
    integrate_newmark,
    midpoint_stepper,
)
from .metrics import RunReport, bound_report, canonicity_deviation, hamiltonian_trace, relative_l2
from .opinf import (
    InferenceProblem,
    assemble_opinf_rom,
    build_problem,
    centered_shift_nonintrusive,
    finite_difference_velocity,
    infer_consistent,
    infer_galerkin,
    infer_lsq,
    reproject_states,
)
from .rom import (
    ReducedModel,
    build_consistent_ham,
    build_galerkin,
    build_lsq_ham,
    integrate_rom,
    reconstruct,
)

__version__ = "0.1.0"
