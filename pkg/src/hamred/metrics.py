"""Run-level error metrics and error-bound diagnostics.

Reported quantities follow the reproducibility conventions of the rest of
the package: the Hamiltonian trace is always referenced to the full-order
initial energy, L2-in-time norms use trapezoidal quadrature on the sampling
grid, and the bound terms expose the raw projection-tail / canonicity /
gradient-norm / derivative-residual factors without estimating any
Lipschitz or Gronwall constants.
"""

from dataclasses import dataclass, field
import numpy as np

from .basis import DegenerateBasisError, reduced_symplectic
from .opinf import finite_difference_velocity, reprojection_points
from .fom import SnapshotSet
from .symplectic import apply_jt


@dataclass
class BoundTerms:
    """Raw terms of the state-error decomposition.

    ``proj_tail`` is sqrt(sum of squared discarded singular values),
    ``canon_dev`` is lambda_max(Jhat^-T Jhat^-1 - I), ``grad_norm`` is the
    L2-in-time norm of the Hamiltonian gradient along the reference
    trajectory, and ``eps_dt`` / ``eps_a`` are the velocity-approximation
    and inference residual norms (identically zero with exact velocities).
    """

    proj_tail: float
    canon_dev: float
    grad_norm: float
    eps_dt: float = 0.0
    eps_a: float = 0.0


@dataclass
class RunReport:
    """Metrics for one (model, run) pair plus provenance for the CSV schema."""

    rel_l2: float
    ham_trace: np.ndarray
    bound_terms: BoundTerms
    provenance: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def ham_err_first(self):
        return float(self.ham_trace[0, 1])

    @property
    def ham_err_max(self):
        return float(np.max(np.abs(self.ham_trace[:, 1])))


def relative_l2(x, x_tilde):
    """Frobenius-relative error ||X - Xtilde||_F / ||X||_F."""
    x = np.asarray(x, dtype=float)
    x_tilde = np.asarray(x_tilde, dtype=float)
    if x.shape != x_tilde.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_tilde.shape}")
    denom = np.linalg.norm(x)
    if denom == 0.0:
        raise ValueError("reference matrix has zero norm")
    return float(np.linalg.norm(x - x_tilde) / denom)


def hamiltonian_trace(system, snaps):
    """Signed energy errors (t_k, H(x_k) - H(x0)) against the full-order level."""
    if snaps.states.shape[0] != system.dim_n:
        raise ValueError("snapshot dimension does not match the system")
    h_ref = system.hamiltonian(system.x0)
    h = system.hamiltonian_columns(snaps.states)
    return np.column_stack((snaps.times, h - h_ref))


def canonicity_deviation(j_hat):
    """lambda_max(Jhat^-T Jhat^-1 - I), computed stably as 1/sigma_min^2 - 1."""
    svals = np.linalg.svd(np.asarray(j_hat, dtype=float), compute_uv=False)
    sigma_min = float(svals[-1])
    if sigma_min == 0.0:
        raise ValueError("reduced symplectic matrix is singular")
    return 1.0 / sigma_min**2 - 1.0


def _l2_in_time(col_norms_sq, times):
    """Trapezoidal L2-in-time norm from squared columnwise norms."""
    if len(times) == 1:
        return float(np.sqrt(col_norms_sq[0]))
    return float(np.sqrt(np.trapezoid(col_norms_sq, times)))


def projection_tail(basis):
    """sqrt of the discarded singular-value energy sum_{i>n} sigma_i^2.

    Uses the mode count actually drawn from the underlying decomposition
    (n/2 for the J-equivariant constructions).
    """
    cut = basis.mode_count()
    tail = basis.singular_values[cut:]
    return float(np.sqrt(np.sum(tail**2)))


def bound_report(system, basis, model, fom_snaps, rom_snaps, velocity_matrix=None,
                 inferred_op=None, fd_scheme=None, provenance=None, wall_time=0.0):
    """Assemble a RunReport for a reconstructed trajectory against the FOM.

    ``rom_snaps`` must hold full-order (reconstructed) states on the same
    grid as ``fom_snaps``.  When the run used finite-difference velocities,
    pass the D_t matrix as ``velocity_matrix`` (and the inferred operator
    plus scheme) so the derivative residual norms can be evaluated;
    otherwise both residual terms are reported as exactly zero.  Constants
    multiplying the terms are not estimated.
    """
    rel = relative_l2(fom_snaps.states, rom_snaps.states)
    trace = hamiltonian_trace(system, rom_snaps)

    try:
        rsym = reduced_symplectic(basis)
        canon = rsym.canon_dev
    except DegenerateBasisError:
        canon = float("inf")

    grads = system.apply_quad(fom_snaps.states)
    if system.nonlin is not None:
        grads = grads + np.stack(
            [system.nonlin.grad(fom_snaps.states[:, j])
             for j in range(fom_snaps.num_columns)], axis=1)
    grad_norm = _l2_in_time(np.einsum("ij,ij->j", grads, grads), fom_snaps.times)

    eps_dt = 0.0
    eps_a = 0.0
    if velocity_matrix is not None:
        exact_vel = system.apply_vecfield(fom_snaps.states)
        diff_sq = np.einsum("ij,ij->j", exact_vel - velocity_matrix,
                            exact_vel - velocity_matrix)
        eps_dt = _l2_in_time(diff_sq, fom_snaps.times)
        if inferred_op is not None and fd_scheme is not None:
            center = model.x_ref if model.centered else None
            pts = reprojection_points(basis, fom_snaps.states, center)
            d_proj = finite_difference_velocity(SnapshotSet(pts, fom_snaps.times), fd_scheme)
            lhs = basis.U.T @ apply_jt(d_proj)
            rhs = inferred_op @ (basis.U.T @ pts)
            if system.nonlin is not None:
                rhs = rhs + np.stack(
                    [basis.U.T @ system.nonlin.grad(pts[:, j])
                     for j in range(pts.shape[1])], axis=1)
            res_sq = np.einsum("ij,ij->j", lhs - rhs, lhs - rhs)
            eps_a = _l2_in_time(res_sq, fom_snaps.times)

    terms = BoundTerms(projection_tail(basis), canon, grad_norm, eps_dt, eps_a)
    return RunReport(rel, trace, terms, provenance=dict(provenance or {}),
                     wall_time=wall_time)
