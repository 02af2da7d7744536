"""Intrusive reduced models and their symplectic time integration.

Three projections of the same full-order system are supported:

* ``galerkin``        xhat' = U^T J A (xref + U xhat), integrated directly;
* ``lsq_ham``         xhat' = Jhat (Ahat xhat + g), Jhat = U^T J U;
* ``consistent_ham``  Jhat^T xhat' = Ahat xhat + g, a Petrov-Galerkin
  projection with test basis J U that stays Hamiltonian for any basis.

The consistent variant never forms Jhat^-T: each implicit-midpoint step
solves the combined system (Jhat^T/dt - Ahat/2) x+ = (Jhat^T/dt + Ahat/2) x + g.
Centered models shift the state approximation by xref = x0, which zeroes the
reduced initial condition and pins the energy at its full-order value.
"""

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .fom import SnapshotSet
from .symplectic import apply_j

VARIANT_GALERKIN = "galerkin"
VARIANT_LSQ = "lsq_ham"
VARIANT_CONSISTENT = "consistent_ham"
ALL_VARIANTS = (VARIANT_GALERKIN, VARIANT_LSQ, VARIANT_CONSISTENT)

PROV_INTRUSIVE = "intrusive"
PROV_OPINF = "opinf"
PROV_OPINF_REPROJECTED = "opinf_reprojected"

_DEGENERACY_TOL = 1e-12


@dataclass
class ReducedModel:
    """Tagged reduced system ready for time integration.

    ``A_hat`` (symmetric) and ``J_hat`` (skew) drive the Hamiltonian
    variants; the Galerkin variant stores its projected vector-field matrix
    in ``galerkin_op`` and leaves those two unset.  ``shift_grad`` carries
    the constant centered forcing (the reduced-gradient shift for the
    Hamiltonian variants, the vector-field shift for Galerkin).  ``x_ref``
    is the full-order reference state: the centering vector for centered
    models and the source of the reduced initial condition otherwise.
    """

    variant: str
    basis: object
    centered: bool
    x_ref: np.ndarray
    A_hat: Optional[np.ndarray] = None
    J_hat: Optional[np.ndarray] = None
    shift_grad: Optional[np.ndarray] = None
    galerkin_op: Optional[np.ndarray] = None
    provenance: str = PROV_INTRUSIVE
    jhat_sigma_min: Optional[float] = None
    nonlin_grad: Optional[Callable] = None
    nonlin_hess: Optional[Callable] = None

    @property
    def n(self):
        return self.basis.U.shape[1]

    def initial_reduced_state(self):
        if self.centered:
            return np.zeros(self.n)
        return self.basis.U.T @ self.x_ref

    def reduced_energy(self, xhat):
        """Quadratic reduced energy 1/2 xhat^T Ahat xhat + g . xhat (no constant).

        Differences of this quantity along a trajectory measure conservation;
        the constant offset H(x_ref) is not recoverable nonintrusively.
        """
        if self.A_hat is None:
            raise ValueError("the Galerkin variant does not define a reduced energy")
        if xhat.ndim == 2:
            vals = 0.5 * np.einsum("ij,ij->j", xhat, self.A_hat @ xhat)
        else:
            vals = 0.5 * float(xhat @ (self.A_hat @ xhat))
        if self.shift_grad is not None:
            vals = vals + (self.shift_grad @ xhat)
        return vals


def _symmetrize(a):
    return 0.5 * (a + a.T)


def _skew(a):
    return 0.5 * (a - a.T)


def _reduced_operators(system, basis):
    u = basis.U
    a_hat = _symmetrize(u.T @ system.apply_quad(u))
    j_hat = _skew(u.T @ apply_j(u))
    return a_hat, j_hat


def _reference_state(system, centered):
    return system.x0.copy() if centered else np.zeros(system.dim_n)


def _reduced_nonlin(system, basis, x_ref):
    if system.nonlin is None:
        return None, None
    u = basis.U

    def red_grad(xhat):
        return u.T @ system.nonlin.grad(x_ref + u @ xhat)

    red_hess = None
    if system.nonlin.hess is not None:
        def red_hess(xhat):
            return u.T @ (system.nonlin.hess(x_ref + u @ xhat) @ u)

    return red_grad, red_hess


def build_galerkin(system, basis, centered=False):
    """Plain Galerkin reduction: stores U^T J A U and the centered shift U^T J A xref."""
    if basis.dim != system.dim_n:
        raise ValueError("basis and system dimensions do not agree")
    u = basis.U
    xref = _reference_state(system, centered)
    op = u.T @ system.apply_vecfield(u)
    shift = u.T @ system.apply_vecfield(xref) if centered else None
    grad, hess = _reduced_nonlin(system, basis, xref)
    return ReducedModel(
        VARIANT_GALERKIN, basis, centered, system.x0.copy(),
        galerkin_op=op, shift_grad=shift,
        nonlin_grad=grad, nonlin_hess=hess,
    )


def build_lsq_ham(system, basis, centered=False):
    """Least-squares Hamiltonian reduction xhat' = Jhat (Ahat xhat + g).

    Valid for almost every basis; a warning diagnostic is attached when the
    reduced symplectic matrix is near-degenerate (no inverse is needed here).
    """
    if basis.dim != system.dim_n:
        raise ValueError("basis and system dimensions do not agree")
    a_hat, j_hat = _reduced_operators(system, basis)
    sigma_min = float(np.linalg.svd(j_hat, compute_uv=False)[-1])
    if sigma_min <= _DEGENERACY_TOL:
        warnings.warn(
            f"reduced symplectic matrix is near-degenerate (sigma_min = {sigma_min:.3e})",
            RuntimeWarning,
        )
    xref = _reference_state(system, centered)
    shift = basis.U.T @ system.apply_quad(xref) if centered else None
    grad, hess = _reduced_nonlin(system, basis, xref)
    return ReducedModel(
        VARIANT_LSQ, basis, centered, system.x0.copy(),
        A_hat=a_hat, J_hat=j_hat, shift_grad=shift,
        jhat_sigma_min=sigma_min, nonlin_grad=grad, nonlin_hess=hess,
    )


def build_consistent_ham(system, basis, centered=False):
    """Variationally consistent reduction Jhat^T xhat' = Ahat xhat + g.

    Requires an invertible reduced symplectic matrix (isotropic bases are
    excluded); the implicit solve keeps the model Hamiltonian for any basis.
    """
    if basis.dim != system.dim_n:
        raise ValueError("basis and system dimensions do not agree")
    a_hat, j_hat = _reduced_operators(system, basis)
    sigma_min = float(np.linalg.svd(j_hat, compute_uv=False)[-1])
    if sigma_min <= _DEGENERACY_TOL:
        raise ValueError(
            f"reduced symplectic matrix is degenerate (sigma_min = {sigma_min:.3e}); "
            "isotropic bases must be excluded"
        )
    xref = _reference_state(system, centered)
    shift = basis.U.T @ system.apply_quad(xref) if centered else None
    grad, hess = _reduced_nonlin(system, basis, xref)
    return ReducedModel(
        VARIANT_CONSISTENT, basis, centered, system.x0.copy(),
        A_hat=a_hat, J_hat=j_hat, shift_grad=shift,
        jhat_sigma_min=sigma_min, nonlin_grad=grad, nonlin_hess=hess,
    )


def _midpoint_operators(model, dt):
    """(lhs, rhs, const) with lhs x+ = rhs x + const for one midpoint step."""
    n = model.n
    shift = model.shift_grad if model.shift_grad is not None else np.zeros(n)
    if model.variant == VARIANT_GALERKIN:
        op = model.galerkin_op
        lhs = np.eye(n) - (dt / 2.0) * op
        rhs = np.eye(n) + (dt / 2.0) * op
        const = dt * shift
    elif model.variant == VARIANT_LSQ:
        op = model.J_hat @ model.A_hat
        lhs = np.eye(n) - (dt / 2.0) * op
        rhs = np.eye(n) + (dt / 2.0) * op
        const = dt * (model.J_hat @ shift)
    elif model.variant == VARIANT_CONSISTENT:
        lhs = model.J_hat.T / dt - model.A_hat / 2.0
        rhs = model.J_hat.T / dt + model.A_hat / 2.0
        const = shift
    else:
        raise ValueError(f"unknown model variant {model.variant!r}")
    return lhs, rhs, const


def _newton_step(model, dt, rhs_mat, const, x, newton_tol=1e-12, max_iter=25):
    """Solve the implicit midpoint residual for a model with a nonlinear term."""
    if model.nonlin_hess is None:
        raise ValueError("nonlinear integration requires an analytic Hessian callback")
    u = model.basis.U
    lhs, _, _ = _midpoint_operators(model, dt)
    xref = model.x_ref if model.centered else np.zeros(u.shape[0])
    x_new = x.copy()
    for _ in range(max_iter):
        mid = 0.5 * (x + x_new)
        fgrad = model.nonlin_grad(mid)
        if model.variant == VARIANT_CONSISTENT:
            res = lhs @ x_new - (rhs_mat @ x + const + fgrad)
            jac = lhs - 0.5 * model.nonlin_hess(mid)
        elif model.variant == VARIANT_LSQ:
            res = lhs @ x_new - (rhs_mat @ x + const + dt * (model.J_hat @ fgrad))
            jac = lhs - 0.5 * dt * (model.J_hat @ model.nonlin_hess(mid))
        else:
            res = lhs @ x_new - (rhs_mat @ x + const + dt * fgrad)
            jac = lhs - 0.5 * dt * model.nonlin_hess(mid)
        if np.linalg.norm(res) <= newton_tol * max(1.0, np.linalg.norm(x_new)):
            return x_new
        x_new = x_new - np.linalg.solve(jac, res)
    return x_new


def integrate_rom(model, t_final, dt, sample_every=1):
    """Implicit-midpoint integration of a reduced model.

    One factorization of the constant step matrix per call; samples include
    step 0.  Returns an n-dimensional SnapshotSet of reduced states.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    sample_every = int(sample_every)
    if sample_every < 1:
        raise ValueError("sample_every must be a positive integer")
    nsteps = int(round(t_final / dt))

    lhs, rhs, const = _midpoint_operators(model, dt)
    try:
        factor = lu_factor(lhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("reduced step matrix factorization failed") from exc

    x = model.initial_reduced_state()
    kept = [x.copy()]
    kept_idx = [0]
    nonlinear = model.nonlin_grad is not None
    for i in range(1, nsteps + 1):
        if nonlinear:
            x = _newton_step(model, dt, rhs, const, x)
        else:
            x = lu_solve(factor, rhs @ x + const)
        if i % sample_every == 0:
            kept.append(x.copy())
            kept_idx.append(i)
    states = np.column_stack(kept)
    times = dt * np.asarray(kept_idx, dtype=float)
    return SnapshotSet(states, times)


def reconstruct(basis, reduced_snaps, center=None):
    """Lift reduced snapshots back to full order: x = center + U xhat columnwise."""
    xhat = reduced_snaps.states
    if xhat.shape[0] != basis.n:
        raise ValueError("reduced snapshot dimension does not match the basis")
    states = basis.U @ xhat
    if center is not None:
        center = np.asarray(center, dtype=float).ravel()
        if center.size != basis.dim:
            raise ValueError("center length does not match the basis")
        states = states + center[:, None]
    return SnapshotSet(states, reduced_snaps.times, center=center)
