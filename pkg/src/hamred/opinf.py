"""Nonintrusive inference of reduced operators from snapshot data.

The symmetric reduced operator of a Hamiltonian model is recovered from
(approximate) velocity data by solving the normal equations of a
symmetry-constrained least squares problem.  Two Hamiltonian routes exist:

* ``consistent_ham``: rotating full-order velocities by (J U)^T turns them
  into reduced-gradient data, so the normal equations collapse to the
  Lyapunov-form system  S Abar + Abar S = C  with S = Xhat Xhat^T.  With
  exact velocities and re-projected states this recovers the intrusive
  operator U^T A U to solver precision for any basis.
* ``lsq_ham``: the inconsistent model's normal equations give the
  generalized symmetric Sylvester system  G Abar S + S Abar G = C  with
  G = Jhat^T Jhat, solved by congruence to a Lyapunov problem (dense
  Kronecker fallback for small ill-conditioned cases).

Both are solved in O(n^3); the dense n^2 x n^2 Kronecker form exists only
as a brute-force oracle for testing.  The Galerkin baseline is plain ridge
least squares with no structure constraint.

Re-projection makes the training data Markovian: states are pulled back
onto the basis span before each full-order step, so the learned operator
matches the intrusive one pre-asymptotically instead of plateauing.
Centering is handled nonintrusively through the initial velocity vector.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fom import SnapshotSet
from .rom import (
    PROV_OPINF,
    PROV_OPINF_REPROJECTED,
    ReducedModel,
    VARIANT_CONSISTENT,
    VARIANT_GALERKIN,
    VARIANT_LSQ,
)
from .symplectic import apply_j, apply_jt

_GALERKIN_RIDGE = 1e-12
_DEGENERACY_TOL = 1e-12

VELOCITY_EXACT = "exact"
VELOCITY_CENTRAL2 = "central2"
VELOCITY_FORWARD1 = "forward1"


@dataclass
class InferenceProblem:
    """Assembled data matrices for one reduced-operator inference.

    ``X_hat`` is n x K.  ``X_t`` is the velocity-derived right-hand-side
    data: full order (N x K) for the consistent variant, reduced (n x K)
    for the least-squares and Galerkin variants.  ``F_hat`` holds reduced
    nonlinearity snapshots (None means zero).  ``v0`` is the full-order
    initial velocity used by nonintrusive centering.
    """

    X_hat: np.ndarray
    X_t: np.ndarray
    variant: str
    F_hat: Optional[np.ndarray] = None
    reprojected: bool = False
    centered: bool = False
    v0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.X_hat.shape[1] != self.X_t.shape[1]:
            raise ValueError("state and velocity data must have the same column count")
        if self.F_hat is not None and self.F_hat.shape[1] != self.X_hat.shape[1]:
            raise ValueError("nonlinearity data must match the state column count")


# -- velocity approximation -------------------------------------------------


def finite_difference_velocity(snaps, scheme=VELOCITY_CENTRAL2):
    """Columnwise time-derivative estimates on the snapshot grid.

    ``central2`` uses second-order interior differences with one-sided
    second-order stencils at both ends (exact for polynomials in t of
    degree <= 2); ``forward1`` uses first-order forward differences with a
    backward difference at the last column.
    """
    x = snaps.states
    dt = snaps.dt
    ncols = x.shape[1]
    if scheme == VELOCITY_CENTRAL2:
        if ncols < 3:
            raise ValueError("central2 differences need at least 3 snapshot columns")
        d = np.empty_like(x)
        d[:, 1:-1] = (x[:, 2:] - x[:, :-2]) / (2.0 * dt)
        d[:, 0] = (-3.0 * x[:, 0] + 4.0 * x[:, 1] - x[:, 2]) / (2.0 * dt)
        d[:, -1] = (3.0 * x[:, -1] - 4.0 * x[:, -2] + x[:, -3]) / (2.0 * dt)
        return d
    if scheme == VELOCITY_FORWARD1:
        if ncols < 2:
            raise ValueError("forward1 differences need at least 2 snapshot columns")
        d = np.empty_like(x)
        d[:, :-1] = (x[:, 1:] - x[:, :-1]) / dt
        d[:, -1] = (x[:, -1] - x[:, -2]) / dt
        return d
    raise ValueError(f"unknown finite-difference scheme {scheme!r}")


# -- re-projection ----------------------------------------------------------


def reproject_states(stepper, basis, x0, steps, dt, centered=False, velocity=None):
    """Generate the Markovian re-projected snapshot sequence.

    Each stored state is the basis projection of one full-order step taken
    from the previous projected state; in centered mode the recursion is
    x_k = P_U(phi(x0 + P_U(x_{k-1} - x0))) with x_0 = x0 kept unprojected.
    When a ``velocity`` oracle is supplied, the velocity matrix holds the
    exact flow velocity evaluated at the (shifted) projected states, which
    removes the need for finite differencing downstream.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    states = np.empty((x0.size, steps + 1))
    if centered:
        states[:, 0] = x0
        prev = x0
        for k in range(1, steps + 1):
            arg = x0 + basis.project(prev - x0)
            states[:, k] = basis.project(stepper(arg))
            prev = states[:, k]
    else:
        states[:, 0] = basis.project(x0)
        prev = states[:, 0]
        for k in range(1, steps + 1):
            states[:, k] = basis.project(stepper(basis.project(prev)))
            prev = states[:, k]

    velocities = None
    if velocity is not None:
        eval_pts = reprojection_points(basis, states, x0 if centered else None)
        velocities = velocity(eval_pts)
    times = dt * np.arange(steps + 1, dtype=float)
    return SnapshotSet(states, times, velocities=velocities,
                       center=x0.copy() if centered else None)


def reprojection_points(basis, states, center=None):
    """States pulled back onto the basis span (shifted by ``center`` if given)."""
    if center is None:
        return basis.project(states)
    return center[:, None] + basis.project(states - center[:, None])


# -- symmetric linear-system solvers ----------------------------------------


def solve_lyapunov_sym(s, c, refine=2):
    """Solve S X + X S = C for symmetric S (PD on the data) and symmetric C.

    Diagonalizing S reduces the system to entrywise divisions by
    eigenvalue pair sums; a couple of refinement sweeps in the original
    coordinates push the residual to roundoff.
    """
    lam, q = np.linalg.eigh(0.5 * (s + s.T))
    pair = lam[:, None] + lam[None, :]
    tol = max(lam[-1], 0.0) * s.shape[0] * np.finfo(float).eps
    if np.min(pair) <= tol:
        raise ValueError(
            "Lyapunov system is singular (eigenvalue pair sum "
            f"{np.min(pair):.3e}); the reduced data matrix is rank deficient"
        )

    def solve_once(rhs):
        return q @ ((q.T @ rhs @ q) / pair) @ q.T

    x = solve_once(c)
    for _ in range(refine):
        x = x + solve_once(c - s @ x - x @ s)
    return 0.5 * (x + x.T)


def solve_sylvester_sym(g, s, c, refine=2, cond_limit=1e12, kron_limit=64):
    """Solve G X S + S X G = C for SPD G, symmetric S and C.

    A Cholesky congruence with G reduces the problem to a Lyapunov system;
    when G is too ill conditioned for that route, small problems fall back
    to the dense Kronecker solve.
    """
    g = 0.5 * (g + g.T)
    gvals = np.linalg.eigvalsh(g)
    if gvals[0] <= 0:
        raise ValueError("Gram matrix of the symplectic factor is not positive definite")
    if gvals[-1] / gvals[0] > cond_limit:
        if g.shape[0] <= kron_limit:
            return kron_pair_solve(g, s, c)
        raise ValueError("Gram matrix too ill conditioned for the congruence route")
    ell = np.linalg.cholesky(g)
    s_w = np.linalg.solve(ell, np.linalg.solve(ell, s.T).T)
    c_w = np.linalg.solve(ell, np.linalg.solve(ell, c.T).T)
    x_w = solve_lyapunov_sym(s_w, c_w, refine=0)
    x = np.linalg.solve(ell.T, np.linalg.solve(ell.T, x_w.T).T)
    for _ in range(refine):
        resid = c - g @ x @ s - s @ x @ g
        r_w = np.linalg.solve(ell, np.linalg.solve(ell, resid.T).T)
        d_w = solve_lyapunov_sym(s_w, r_w, refine=0)
        x = x + np.linalg.solve(ell.T, np.linalg.solve(ell.T, d_w.T).T)
    return 0.5 * (x + x.T)


def kron_pair_solve(g, s, c):
    """Brute-force oracle: solve (G (x) S + S (x) G) vec X = vec C densely.

    Column-major vectorization, so (G (x) S) vec X = vec(S X G^T).  Kept for
    verification and as a small-problem fallback; O(n^6).
    """
    n = g.shape[0]
    big = np.kron(g, s) + np.kron(s, g)
    x = np.linalg.solve(big, c.reshape(n * n, order="F"))
    return x.reshape((n, n), order="F")


# -- inference --------------------------------------------------------------


def _check_reduced_rank(x_hat):
    svals = np.linalg.svd(x_hat, compute_uv=False)
    tol = x_hat.shape[1] * svals[0] * np.finfo(float).eps * 10.0
    if svals[-1] <= tol:
        raise ValueError(
            f"reduced data matrix is rank deficient (sigma_min = {svals[-1]:.3e}, "
            f"need > {tol:.3e}); reduce the basis size or add snapshots"
        )
    return svals


def infer_consistent(problem, basis):
    """Symmetric operator for the variationally consistent model.

    Solves  S Abar + Abar S = (J U)^T X_t Xhat^T + Xhat X_t^T (J U)
    - Fhat Xhat^T - Xhat Fhat^T  with S = Xhat Xhat^T, which is the
    normal-equation form of the constrained least squares problem.
    """
    if problem.variant != VARIANT_CONSISTENT:
        raise ValueError(f"problem variant is {problem.variant!r}, expected consistent_ham")
    x_hat = problem.X_hat
    _check_reduced_rank(x_hat)
    if problem.X_t.shape[0] != basis.dim:
        raise ValueError("the consistent inference needs full-order velocity data")
    s = x_hat @ x_hat.T
    rotated = basis.U.T @ apply_jt(problem.X_t)
    c = rotated @ x_hat.T
    if problem.F_hat is not None:
        c = c - problem.F_hat @ x_hat.T
    c = c + c.T
    return solve_lyapunov_sym(s, c)


def infer_lsq(problem, basis):
    """Symmetric operator for the least-squares Hamiltonian model.

    Solves  G Abar S + S Abar G = Jhat^T Xt_hat Xhat^T + Xhat Xt_hat^T Jhat
    - G Fhat Xhat^T - Xhat Fhat^T G  with G = Jhat^T Jhat.
    """
    if problem.variant != VARIANT_LSQ:
        raise ValueError(f"problem variant is {problem.variant!r}, expected lsq_ham")
    x_hat = problem.X_hat
    _check_reduced_rank(x_hat)
    n = x_hat.shape[0]
    if problem.X_t.shape[0] != n:
        raise ValueError("the least-squares inference needs reduced velocity data")
    j_hat = basis.U.T @ apply_j(basis.U)
    j_hat = 0.5 * (j_hat - j_hat.T)
    if np.linalg.svd(j_hat, compute_uv=False)[-1] <= _DEGENERACY_TOL:
        raise ValueError("reduced symplectic matrix is degenerate; inference undefined")
    g = j_hat.T @ j_hat
    s = x_hat @ x_hat.T
    c = (j_hat.T @ problem.X_t) @ x_hat.T
    if problem.F_hat is not None:
        c = c - (g @ problem.F_hat) @ x_hat.T
    c = c + c.T
    return solve_sylvester_sym(g, s, c)


def infer_galerkin(problem, basis):
    """Unconstrained least squares for the Galerkin vector-field matrix.

    Normal equations with an absolute ridge of 1e-12 on the Gram matrix;
    no symmetry or skew constraint is imposed.
    """
    if problem.variant != VARIANT_GALERKIN:
        raise ValueError(f"problem variant is {problem.variant!r}, expected galerkin")
    x_hat = problem.X_hat
    _check_reduced_rank(x_hat)
    if problem.X_t.shape[0] != x_hat.shape[0]:
        raise ValueError("the Galerkin inference needs reduced velocity data")
    rhs = problem.X_t
    if problem.F_hat is not None:
        rhs = rhs - problem.F_hat
    gram = x_hat @ x_hat.T + _GALERKIN_RIDGE * np.eye(x_hat.shape[0])
    return np.linalg.solve(gram, x_hat @ rhs.T).T


def infer_operator(problem, basis):
    """Dispatch to the variant-specific inference."""
    if problem.variant == VARIANT_CONSISTENT:
        return infer_consistent(problem, basis)
    if problem.variant == VARIANT_LSQ:
        return infer_lsq(problem, basis)
    if problem.variant == VARIANT_GALERKIN:
        return infer_galerkin(problem, basis)
    raise ValueError(f"unknown inference variant {problem.variant!r}")


# -- nonintrusive centering ---------------------------------------------------


def centered_shift_nonintrusive(v0, x0, basis, variant, snaps=None, nonlin_grad0=None):
    """Constant forcing vector of a centered model, from the initial velocity.

    For the Hamiltonian variants this is (J U)^T (v0 - J grad_f(x0)), which
    equals the intrusive shift U^T A x0 when v0 is the exact initial
    velocity; for Galerkin it is U^T v0.  When ``v0`` is None it is taken
    from the snapshot velocities, or estimated by finite differences.
    """
    if v0 is None:
        if snaps is None or snaps.num_columns < 2:
            raise ValueError("initial velocity unavailable: need v0 or at least 2 snapshots")
        if snaps.velocities is not None:
            v0 = snaps.velocities[:, 0]
        elif snaps.num_columns >= 3:
            v0 = finite_difference_velocity(snaps, VELOCITY_CENTRAL2)[:, 0]
        else:
            v0 = finite_difference_velocity(snaps, VELOCITY_FORWARD1)[:, 0]
    v0 = np.asarray(v0, dtype=float).ravel()
    if variant == VARIANT_GALERKIN:
        return basis.U.T @ v0
    if variant in (VARIANT_CONSISTENT, VARIANT_LSQ):
        w = v0
        if nonlin_grad0 is not None:
            w = w - apply_j(nonlin_grad0)
        return basis.U.T @ apply_jt(w)
    raise ValueError(f"unknown variant {variant!r}")


# -- problem assembly (Markovian and vanilla data paths) ----------------------


def build_problem(snaps, basis, variant, system=None, reprojected=False, centered=False,
                  velocity_source=VELOCITY_EXACT, stepper=None):
    """Assemble an InferenceProblem from snapshots for one variant.

    With re-projection and exact velocities the velocity oracle is evaluated
    at the projections of the original snapshots (no new trajectory is
    needed); with finite differences a Markovian trajectory is generated
    with the supplied stepper (or a midpoint stepper built from ``system``)
    and differenced along itself, never mixing the two trajectories.
    """
    x0 = snaps.states[:, 0]
    dt = snaps.dt
    exact = velocity_source == VELOCITY_EXACT

    if exact and not reprojected and snaps.velocities is None:
        raise ValueError("snapshots carry no exact velocities; choose a difference scheme")

    if reprojected:
        if exact:
            if system is None:
                raise ValueError("re-projection with exact velocities needs the system oracle")
            states = snaps.states
            pts = reprojection_points(basis, states, x0 if centered else None)
            vel = system.apply_vecfield(pts)
        else:
            if stepper is None:
                if system is None:
                    raise ValueError("re-projection needs a stepper or the system")
                from .fom import midpoint_stepper

                stepper = midpoint_stepper(system, dt)
            markov = reproject_states(stepper, basis, x0, snaps.num_columns - 1, dt,
                                      centered=centered)
            states = markov.states
            pts = reprojection_points(basis, states, x0 if centered else None)
            vel = finite_difference_velocity(
                SnapshotSet(pts, markov.times), scheme=velocity_source
            )
    else:
        states = snaps.states
        vel = snaps.velocities if exact else finite_difference_velocity(
            snaps, scheme=velocity_source
        )

    v0 = vel[:, 0].copy()
    if centered:
        x_hat = basis.U.T @ (states - x0[:, None])
        vel_data = vel - v0[:, None]
    else:
        x_hat = basis.U.T @ states
        vel_data = vel

    if variant == VARIANT_CONSISTENT:
        x_t = vel_data
    else:
        x_t = basis.U.T @ vel_data
    return InferenceProblem(
        X_hat=x_hat, X_t=x_t, variant=variant,
        reprojected=reprojected, centered=centered, v0=v0,
    )


def assemble_opinf_rom(a_bar, shift, basis, variant, centered, x0=None, reprojected=False):
    """Package an inferred operator into a ReducedModel.

    The model integrates identically to its intrusive counterpart; the
    provenance tag records whether re-projection was used.  A centered model
    requires a shift vector (and vice versa).
    """
    if centered and shift is None:
        raise ValueError("a centered model needs the nonintrusive shift vector")
    if not centered and shift is not None:
        raise ValueError("an uncentered model must not carry a shift vector")
    if x0 is None:
        raise ValueError("the full-order initial state is required")
    x0 = np.asarray(x0, dtype=float).ravel()
    provenance = PROV_OPINF_REPROJECTED if reprojected else PROV_OPINF

    if variant == VARIANT_GALERKIN:
        return ReducedModel(
            variant, basis, centered, x0, galerkin_op=np.asarray(a_bar, dtype=float),
            shift_grad=shift, provenance=provenance,
        )
    if variant not in (VARIANT_LSQ, VARIANT_CONSISTENT):
        raise ValueError(f"unknown variant {variant!r}")
    a_bar = 0.5 * (np.asarray(a_bar, dtype=float) + np.asarray(a_bar, dtype=float).T)
    j_hat = basis.U.T @ apply_j(basis.U)
    j_hat = 0.5 * (j_hat - j_hat.T)
    sigma_min = float(np.linalg.svd(j_hat, compute_uv=False)[-1])
    if variant == VARIANT_CONSISTENT and sigma_min <= _DEGENERACY_TOL:
        raise ValueError(
            f"reduced symplectic matrix is degenerate (sigma_min = {sigma_min:.3e})"
        )
    return ReducedModel(
        variant, basis, centered, x0, A_hat=a_bar, J_hat=j_hat, shift_grad=shift,
        provenance=provenance, jhat_sigma_min=sigma_min,
    )
