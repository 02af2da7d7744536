"""Full-order canonical Hamiltonian systems and symplectic time integration.

Systems have the form

    xdot = J (A x + grad_f(x)),    H(x) = 1/2 x^T A x + f(x),

with x = (q, p), N = 2M, and the quadratic operator A stored block
structured as A = diag(K, M^-1) for a symmetric positive semidefinite
stiffness map K and an SPD mass matrix M.  The mass inverse is applied
through a stored factorization; it is never formed densely unless M is
diagonal.  A general symmetric A is also accepted for small systems.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve
from scipy.sparse.linalg import splu

from .symplectic import apply_j, split_qp

_SYM_TOL = 1e-12

_FACE_AXIS = {"x-": 0, "x+": 0, "y-": 1, "y+": 1, "z-": 2, "z+": 2}


@dataclass
class NonlinearTerm:
    """Nonquadratic Hamiltonian contribution f with its gradient.

    ``value(x)`` returns f(x), ``grad(x)`` returns the gradient of f, and the
    optional ``hess(x)`` returns the Hessian (needed only by the implicit
    nonlinear ROM step).  No nonlinear benchmark ships; this is the hook for
    user-supplied systems.
    """

    value: Callable
    grad: Callable
    hess: Optional[Callable] = None


def _max_abs(a):
    if sp.issparse(a):
        return abs(a).max() if a.nnz else 0.0
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _check_symmetric(mat, name):
    asym = _max_abs(mat - mat.T)
    scale = max(_max_abs(mat), 1.0)
    if asym > _SYM_TOL * scale:
        raise ValueError(f"{name} must be symmetric (max asymmetry {asym:.3e})")


class HamiltonianSystem:
    """Canonical Hamiltonian full-order model.

    Construct through :func:`build_wave_fom`, :func:`build_lattice_fom`,
    :func:`build_from_matrices`, or directly with either a stiffness/mass
    block pair or a full symmetric operator.
    """

    def __init__(self, x0, k_block=None, mass=None, quad_full=None, nonlin=None):
        x0 = np.asarray(x0, dtype=float).ravel()
        if x0.size % 2:
            raise ValueError(f"state dimension must be even, got {x0.size}")
        self.x0 = x0
        self.nonlin = nonlin
        self._m = x0.size // 2

        if quad_full is not None:
            if k_block is not None or mass is not None:
                raise ValueError("pass either (k_block, mass) or quad_full, not both")
            quad_full = np.asarray(quad_full, dtype=float)
            if quad_full.shape != (x0.size, x0.size):
                raise ValueError("quad_full shape does not match the state dimension")
            _check_symmetric(quad_full, "quadratic operator")
            self._quad_full = quad_full
            self._k = None
        else:
            if k_block is None:
                raise ValueError("k_block is required when quad_full is absent")
            if not sp.issparse(k_block):
                k_block = np.asarray(k_block, dtype=float)
            if k_block.shape != (self._m, self._m):
                raise ValueError("k_block shape does not match the state dimension")
            _check_symmetric(k_block, "stiffness block")
            self._quad_full = None
            self._k = k_block
            self._init_mass(mass)

    # -- mass handling ----------------------------------------------------

    def _init_mass(self, mass):
        self._mass_diag = None
        self._mass_mat = None
        self._mass_cho = None
        if mass is None:
            self._mass_kind = "identity"
            return
        if sp.issparse(mass):
            off = mass - sp.diags(mass.diagonal())
            if off.nnz == 0 or _max_abs(off) == 0.0:
                mass = mass.diagonal()
            else:
                mass = mass.toarray()
        mass = np.asarray(mass, dtype=float)
        if mass.ndim == 1:
            if mass.size != self._m:
                raise ValueError("diagonal mass length does not match")
            if np.any(mass <= 0):
                raise ValueError("mass matrix not SPD")
            self._mass_kind = "diag"
            self._mass_diag = mass
            return
        if mass.shape != (self._m, self._m):
            raise ValueError("mass matrix shape does not match")
        _check_symmetric(mass, "mass matrix")
        if np.count_nonzero(mass - np.diag(np.diag(mass))) == 0:
            return self._init_mass(np.diag(mass))
        try:
            self._mass_cho = cho_factor(mass)
        except np.linalg.LinAlgError as exc:
            raise ValueError("mass matrix not SPD") from exc
        self._mass_kind = "dense"
        self._mass_mat = mass

    def mass_apply(self, v):
        if self._mass_kind == "identity":
            return np.array(v, dtype=float, copy=True)
        if self._mass_kind == "diag":
            d = self._mass_diag if v.ndim == 1 else self._mass_diag[:, None]
            return d * v
        return self._mass_mat @ v

    def mass_solve(self, v):
        """Apply M^-1 through the stored factorization (diagonal fast path)."""
        if self._mass_kind == "identity":
            return np.array(v, dtype=float, copy=True)
        if self._mass_kind == "diag":
            d = self._mass_diag if v.ndim == 1 else self._mass_diag[:, None]
            return v / d
        return cho_solve(self._mass_cho, v)

    def mass_representation(self):
        """The stored mass data: None (identity), a diagonal vector, or a matrix."""
        if self._mass_kind == "identity":
            return None
        if self._mass_kind == "diag":
            return self._mass_diag
        return self._mass_mat

    # -- operator applications --------------------------------------------

    @property
    def dim_n(self):
        return 2 * self._m

    @property
    def dim_half(self):
        return self._m

    @property
    def is_block(self):
        return self._quad_full is None

    @property
    def k_block(self):
        return self._k

    def apply_quad(self, x):
        """A x for a vector or column-stacked matrix x."""
        if self._quad_full is not None:
            return self._quad_full @ x
        q, p = split_qp(x)
        return np.concatenate((self._k @ q, self.mass_solve(p)), axis=0)

    def apply_vecfield(self, x):
        """Exact velocity J A x of the linear part."""
        return apply_j(self.apply_quad(x))

    def gradient(self, x):
        g = self.apply_quad(x)
        if self.nonlin is not None:
            g = g + self.nonlin.grad(x)
        return g

    def hamiltonian(self, x):
        # Contiguity-normalized so bitwise-equal states (for example a strided
        # snapshot column versus the stored x0) give bitwise-equal energies.
        x = np.ascontiguousarray(x, dtype=float)
        if x.shape[0] != self.dim_n:
            raise ValueError(f"state has dimension {x.shape[0]}, expected {self.dim_n}")
        h = 0.5 * float(x @ self.apply_quad(x))
        if self.nonlin is not None:
            h += float(self.nonlin.value(x))
        return h

    def hamiltonian_columns(self, states):
        """H evaluated on every column of an N x K matrix.

        Evaluates column by column through the same code path as
        :meth:`hamiltonian`, so a column that is bitwise equal to another
        state yields a bitwise-equal energy (the centered-trace tests rely
        on this).
        """
        return np.array([self.hamiltonian(states[:, j]) for j in range(states.shape[1])])


def hamiltonian_value(system, x):
    """H(x) = 1/2 x^T A x + f(x); f contributes zero when absent."""
    return system.hamiltonian(x)


@dataclass
class SnapshotSet:
    """Dense state snapshots on a uniform time grid.

    ``states`` is N x (K+1) with column k the state at ``times[k]``;
    ``velocities`` (same shape, optional) holds exact time derivatives;
    ``center`` is the vector subtracted before basis construction, if any.
    """

    states: np.ndarray
    times: np.ndarray
    velocities: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.times = np.asarray(self.times, dtype=float).ravel()
        if self.states.ndim != 2:
            raise ValueError("states must be a 2-D matrix")
        if self.times.size != self.states.shape[1]:
            raise ValueError("times length must equal the snapshot column count")
        if self.times.size > 1:
            steps = np.diff(self.times)
            if np.any(steps <= 0):
                raise ValueError("times must be strictly increasing")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise ValueError("variable time spacing rejected; grid must be uniform")
        if self.velocities is not None:
            self.velocities = np.asarray(self.velocities, dtype=float)
            if self.velocities.shape != self.states.shape:
                raise ValueError("velocities shape must match states")
        if self.center is not None:
            self.center = np.asarray(self.center, dtype=float).ravel()
            if self.center.size != self.states.shape[0]:
                raise ValueError("center length must match the state dimension")

    @property
    def dt(self):
        if self.times.size < 2:
            return None
        return float(self.times[1] - self.times[0])

    @property
    def num_columns(self):
        return self.states.shape[1]


# -- built-in full-order models -------------------------------------------


def _bump_profile(y):
    """Compactly supported cubic bump used as the wave initial condition."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inner = y <= 1.0
    out[inner] = 1.0 - 1.5 * y[inner] ** 2 + 0.75 * y[inner] ** 3
    mid = (y > 1.0) & (y <= 2.0)
    out[mid] = 0.25 * (2.0 - y[mid]) ** 3
    return out


def wave_initial_profile(y):
    """Evaluate the piecewise-cubic initial displacement profile h(y)."""
    return _bump_profile(np.atleast_1d(y)) if np.ndim(y) else float(_bump_profile([y])[0])


def build_wave_fom(num_cells, wave_speed, length):
    """Periodic 1-D linear wave, discretized on ``num_cells`` grid points.

    The stiffness block is the circulant second-difference map scaled by
    c^2 / (2 ds^2), the exact gradient of the discrete energy
    1/2 sum_i [p_i^2 + c^2 ((q_{i+1}-q_i)^2 + (q_i-q_{i-1})^2) / (4 ds^2)],
    which averages the two one-sided differences.  (This carries half the
    scale of the usual 3-point Laplacian; the operator is derived from the
    energy so that symmetry is exact.)
    """
    m = int(num_cells)
    if m < 3:
        raise ValueError("need at least 3 cells for the second-difference stencil")
    if wave_speed <= 0 or length <= 0:
        raise ValueError("wave speed and domain length must be positive")
    ds = length / m
    coeff = wave_speed**2 / (2.0 * ds**2)
    main = np.full(m, 2.0 * coeff)
    off = np.full(m - 1, -coeff)
    k = sp.diags([off, main, off], (-1, 0, 1), format="lil")
    k[0, m - 1] = -coeff
    k[m - 1, 0] = -coeff
    k = k.tocsc()

    grid = ds * np.arange(m)
    q0 = _bump_profile(np.abs(grid - 0.5))
    x0 = np.concatenate((q0, np.zeros(m)))
    return HamiltonianSystem(x0, k_block=k)


def build_lattice_fom(nx, ny, nz, stiffness, mass, clamped_face, kick_face, kick_speed):
    """Nearest-neighbor mass-spring lattice on an nx*ny*nz grid.

    Axial unit-rest-length springs along grid edges, linearized for small
    displacements: a spring along axis d couples only the d-components of
    its endpoints, giving a symmetric PSD graph-Laplacian-style stiffness.
    Nodes on ``clamped_face`` are removed from the unknowns; nodes on
    ``kick_face`` start with momentum mass*kick_speed along the face normal.
    """
    dims = (int(nx), int(ny), int(nz))
    if min(dims) < 2:
        raise ValueError("lattice needs at least 2 nodes per axis")
    if stiffness <= 0 or mass <= 0:
        raise ValueError("stiffness and mass must be positive")
    for face in (clamped_face, kick_face):
        if face not in _FACE_AXIS:
            raise ValueError(f"unknown face id {face!r}; use one of {sorted(_FACE_AXIS)}")
    if clamped_face == kick_face:
        raise ValueError("clamped and kicked faces must be distinct")

    def on_face(node, face):
        axis = _FACE_AXIS[face]
        return node[axis] == (0 if face.endswith("-") else dims[axis] - 1)

    nodes = [(i, j, l) for i in range(dims[0]) for j in range(dims[1]) for l in range(dims[2])]
    free = [node for node in nodes if not on_face(node, clamped_face)]
    index = {node: i for i, node in enumerate(free)}
    ndof = 3 * len(free)

    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    for node in nodes:
        for axis in range(3):
            nbr = list(node)
            nbr[axis] += 1
            nbr = tuple(nbr)
            if nbr[axis] >= dims[axis]:
                continue
            a = index.get(node)
            b = index.get(nbr)
            if a is None and b is None:
                continue
            if a is not None:
                add(3 * a + axis, 3 * a + axis, stiffness)
            if b is not None:
                add(3 * b + axis, 3 * b + axis, stiffness)
            if a is not None and b is not None:
                add(3 * a + axis, 3 * b + axis, -stiffness)
                add(3 * b + axis, 3 * a + axis, -stiffness)

    k = sp.coo_matrix((vals, (rows, cols)), shape=(ndof, ndof)).tocsc()

    p0 = np.zeros(ndof)
    kick_axis = _FACE_AXIS[kick_face]
    for node in free:
        if on_face(node, kick_face):
            p0[3 * index[node] + kick_axis] = mass * kick_speed
    x0 = np.concatenate((np.zeros(ndof), p0))
    return HamiltonianSystem(x0, k_block=k, mass=np.full(ndof, float(mass)))


def build_from_matrices(mass, stiffness, q0, qdot0):
    """First-order Hamiltonian system from mass/stiffness matrices.

    Momentum is defined by p = M qdot, so H(x) = 1/2 (q^T K q + p^T M^-1 p).
    The mass matrix must be SPD (checked by Cholesky factorization success).
    """
    if not sp.issparse(stiffness):
        stiffness = np.atleast_2d(np.asarray(stiffness, dtype=float))
    _check_symmetric(stiffness, "stiffness matrix")
    q0 = np.atleast_1d(np.asarray(q0, dtype=float)).ravel()
    qdot0 = np.atleast_1d(np.asarray(qdot0, dtype=float)).ravel()
    m = stiffness.shape[0]
    if q0.size != m or qdot0.size != m:
        raise ValueError("initial condition length does not match the matrices")

    mass = _coerce_mass(mass, m)
    if mass is None:
        p0 = qdot0.copy()
    elif sp.issparse(mass):
        p0 = mass @ qdot0
    elif np.asarray(mass).ndim == 1:
        p0 = np.asarray(mass) * qdot0
    else:
        p0 = np.asarray(mass) @ qdot0
    return HamiltonianSystem(np.concatenate((q0, p0)), k_block=stiffness, mass=mass)


def _coerce_mass(mass, m):
    if mass is None:
        return None
    if sp.issparse(mass):
        return mass
    mass = np.asarray(mass, dtype=float)
    if mass.ndim == 0:
        return np.full(m, float(mass))
    return mass


# -- time integration ------------------------------------------------------


def _num_steps(t_final, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    return int(round(t_final / dt))


def _factor_spd(mat):
    """Return a solve closure for an SPD (possibly sparse) matrix."""
    if sp.issparse(mat):
        lu = splu(mat.tocsc())
        return lambda b: lu.solve(b) if b.ndim == 1 else lu.solve(b)
    factor = cho_factor(np.asarray(mat))
    return lambda b: cho_solve(factor, b)


def _block_midpoint_step(system, dt):
    """One implicit-midpoint step for A = diag(K, M^-1), via the q-Schur form.

    Eliminating p from the midpoint equations gives
        (M + dt^2/4 K) q+ = (M - dt^2/4 K) q + dt p,
        p+ = p - dt/2 K (q + q+),
    so a single factorization of the SPD matrix M + dt^2/4 K suffices.
    """
    k = system.k_block
    c = dt * dt / 4.0
    m = system.dim_half
    if system._mass_kind == "identity":
        eff = (sp.identity(m, format="csc") + c * k) if sp.issparse(k) else np.eye(m) + c * k
    elif system._mass_kind == "diag":
        eff = (sp.diags(system._mass_diag) + c * k) if sp.issparse(k) else (
            np.diag(system._mass_diag) + c * k
        )
    else:
        eff = system._mass_mat + c * (k.toarray() if sp.issparse(k) else k)
    solve = _factor_spd(eff)

    def step(x):
        q, p = split_qp(x)
        kq = k @ q
        qn = solve(system.mass_apply(q) - c * kq + dt * p)
        pn = p - (dt / 2.0) * (kq + k @ qn)
        return np.concatenate((qn, pn))

    return step


def _general_midpoint_step(system, dt):
    a = system._quad_full
    m = system.dim_half
    ja = np.vstack((a[m:], -a[:m]))
    lhs = np.eye(2 * m) - (dt / 2.0) * ja
    try:
        factor = lu_factor(lhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("midpoint step matrix factorization failed") from exc

    def step(x):
        return lu_solve(factor, x + (dt / 2.0) * (ja @ x))

    return step


def midpoint_stepper(system, dt):
    """Single-step implicit-midpoint flow map for a linear system.

    The factorization of the constant step matrix is done once and reused
    by the returned closure; build a new stepper when dt changes.
    """
    if system.nonlin is not None:
        raise ValueError("implicit midpoint is implemented for linear systems only")
    if dt == 0:
        raise ValueError("dt must be nonzero")
    # negative dt is allowed: it integrates the reverse flow (time reversal)
    if system.is_block:
        return _block_midpoint_step(system, dt)
    return _general_midpoint_step(system, dt)


def integrate_midpoint(system, t_final, dt, sample_every=1):
    """Advance with the implicit midpoint rule and sample every few steps.

    Samples include step 0; exact velocities J A x are stored alongside the
    sampled states.  The midpoint rule conserves the quadratic Hamiltonian
    of a linear system up to roundoff.
    """
    sample_every = int(sample_every)
    if sample_every < 1:
        raise ValueError("sample_every must be a positive integer")
    if dt <= 0:
        raise ValueError("dt must be positive")
    nsteps = _num_steps(t_final, dt)
    step = midpoint_stepper(system, dt)

    kept = [system.x0.copy()]
    kept_idx = [0]
    x = system.x0.copy()
    for i in range(1, nsteps + 1):
        x = step(x)
        if i % sample_every == 0:
            kept.append(x.copy())
            kept_idx.append(i)
    states = np.column_stack(kept)
    times = dt * np.asarray(kept_idx, dtype=float)
    return SnapshotSet(states, times, velocities=system.apply_vecfield(states))


def integrate_newmark(mass, stiffness, q0, qdot0, t_final, dt, beta=0.25, gamma=0.5,
                      sample_every=1):
    """Newmark time stepping for M qddot + K q = 0, emitted in first-order form.

    Snapshots are x = (q, M qdot) with exact velocities (qdot, -K q).  With
    beta = 1/4, gamma = 1/2 (average acceleration) the discrete energy
    1/2 (q^T K q + qdot^T M qdot) is conserved to roundoff for linear systems.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    sample_every = int(sample_every)
    if sample_every < 1:
        raise ValueError("sample_every must be a positive integer")
    nsteps = _num_steps(t_final, dt)

    system = build_from_matrices(mass, stiffness, q0, qdot0)
    k = system.k_block
    m = system.dim_half

    if system._mass_kind == "identity":
        eff = (sp.identity(m, format="csc") if sp.issparse(k) else np.eye(m)) + beta * dt * dt * k
    elif system._mass_kind == "diag":
        eff = (sp.diags(system._mass_diag) if sp.issparse(k) else np.diag(system._mass_diag)) \
            + beta * dt * dt * k
    else:
        eff = system._mass_mat + beta * dt * dt * (k.toarray() if sp.issparse(k) else k)
    try:
        solve = _factor_spd(eff)
    except np.linalg.LinAlgError as exc:
        raise ValueError("effective stiffness factorization failed") from exc

    q = np.asarray(q0, dtype=float).ravel().copy()
    v = np.asarray(qdot0, dtype=float).ravel().copy()
    a = system.mass_solve(-(k @ q))

    def pack(qc, vc):
        return np.concatenate((qc, system.mass_apply(vc)))

    kept = [pack(q, v)]
    kept_idx = [0]
    for i in range(1, nsteps + 1):
        q_pred = q + dt * v + (0.5 - beta) * dt * dt * a
        a_new = solve(-(k @ q_pred))
        q = q_pred + beta * dt * dt * a_new
        v = v + dt * ((1.0 - gamma) * a + gamma * a_new)
        a = a_new
        if i % sample_every == 0:
            kept.append(pack(q, v))
            kept_idx.append(i)
    states = np.column_stack(kept)
    times = dt * np.asarray(kept_idx, dtype=float)
    return SnapshotSet(states, times, velocities=system.apply_vecfield(states))
