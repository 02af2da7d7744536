"""Reduced-basis constructions from snapshot data.

Four constructions are provided: plain POD of the full state, the
J-equivariant cotangent lift and complex-SVD bases (which satisfy
U^T J U = J_n by construction), and the independent block (q, p) basis.
All bases are column orthonormal with an even number of columns, and an
optional centering shift (by the initial snapshot) is supported.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .symplectic import apply_j, split_qp

KIND_POD = "pod"
KIND_COTANGENT = "cotangent_lift"
KIND_COMPLEX = "complex_svd"
KIND_BLOCK_QP = "block_qp"
ALL_KINDS = (KIND_POD, KIND_COTANGENT, KIND_COMPLEX, KIND_BLOCK_QP)


class DegenerateBasisError(ValueError):
    """Raised when the reduced symplectic matrix is (near-)singular."""


@dataclass
class ReducedBasis:
    """Column-orthonormal reduced basis with construction metadata.

    ``singular_values`` records the full spectrum of the decomposition that
    produced the basis: the state SVD for ``pod``, the stacked (q|p) SVD for
    ``cotangent_lift``, the complex SVD for ``complex_svd``, and the merged
    descending spectra of the two block SVDs for ``block_qp``.  ``center``
    is the vector subtracted from the snapshots before decomposition (the
    initial snapshot), or None for an uncentered build.
    """

    U: np.ndarray
    kind: str
    singular_values: np.ndarray
    center: Optional[np.ndarray] = None

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.singular_values = np.asarray(self.singular_values, dtype=float).ravel()
        if self.U.ndim != 2:
            raise ValueError("basis must be a 2-D matrix")
        if self.U.shape[1] % 2:
            raise ValueError("reduced dimension must be even")

    @property
    def n(self):
        return self.U.shape[1]

    @property
    def dim(self):
        return self.U.shape[0]

    def project(self, x):
        """Orthogonal projection U U^T x onto the span of the basis."""
        return self.U @ (self.U.T @ x)

    def mode_count(self):
        """Number of modes drawn per underlying decomposition.

        n for pod and block_qp, n/2 for the two J-equivariant kinds (whose
        half-basis is reused for both state blocks).
        """
        if self.kind in (KIND_COTANGENT, KIND_COMPLEX):
            return self.n // 2
        return self.n


def _fix_signs(u):
    """Make the largest-magnitude entry of each column positive (real case)."""
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def _fix_phases(u):
    """Rotate each complex column so its largest-magnitude entry is real positive."""
    idx = np.argmax(np.abs(u), axis=0)
    lead = u[idx, np.arange(u.shape[1])]
    phase = np.where(np.abs(lead) > 0, lead / np.abs(lead), 1.0)
    return u / phase


def _thin_svd(x):
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    return u, s


def numerical_rank(singular_values, shape):
    """Count of singular values above max(shape) * s_max * machine epsilon."""
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = max(shape) * s[0] * np.finfo(float).eps
    return int(np.count_nonzero(s > tol))


def _check_even(n):
    n = int(n)
    if n <= 0 or n % 2:
        raise ValueError(f"reduced dimension must be a positive even integer, got {n}")
    return n


def _check_modes(wanted, s, shape, what):
    rank = numerical_rank(s, shape)
    if wanted > rank:
        raise ValueError(
            f"requested {wanted} {what} modes but the numerical rank is {rank}; "
            f"achievable maximum is {rank}"
        )


def _split_centered(snaps, centered):
    q, p = split_qp(snaps.states)
    if centered:
        return q - q[:, :1], p - p[:, :1], snaps.states[:, 0].copy()
    return q, p, None


def ordinary_pod(snaps, n, centered=False):
    """Leading left singular vectors of the (optionally centered) snapshots."""
    n = _check_even(n)
    x = snaps.states
    center = None
    if centered:
        center = x[:, 0].copy()
        x = x - center[:, None]
    u, s = _thin_svd(x)
    _check_modes(n, s, x.shape, "POD")
    return ReducedBasis(_fix_signs(u[:, :n]), KIND_POD, s, center)


def cotangent_lift(snaps, n, centered=False):
    """J-equivariant basis diag(W, W) from the SVD of stacked [Q P] snapshots."""
    n = _check_even(n)
    m = n // 2
    q, p, center = _split_centered(snaps, centered)
    stacked = np.hstack((q, p))
    u, s = _thin_svd(stacked)
    _check_modes(m, s, stacked.shape, "cotangent-lift")
    w = _fix_signs(u[:, :m])
    half = q.shape[0]
    big = np.zeros((2 * half, n))
    big[:half, :m] = w
    big[half:, m:] = w
    return ReducedBasis(big, KIND_COTANGENT, s, center)


def complex_svd(snaps, n, centered=False):
    """J-equivariant basis from the complex SVD of Q + iP.

    With Phi = X + iY the leading complex left singular vectors, the
    assembled basis [X, -Y; Y, X] is orthonormal and satisfies
    U^T J U = J_n exactly up to roundoff.
    """
    n = _check_even(n)
    m = n // 2
    q, p, center = _split_centered(snaps, centered)
    z = q + 1j * p
    u, s, _ = np.linalg.svd(z, full_matrices=False)
    _check_modes(m, s, z.shape, "complex-SVD")
    phi = _fix_phases(u[:, :m])
    re, im = phi.real, phi.imag
    big = np.block([[re, -im], [im, re]])
    return ReducedBasis(big, KIND_COMPLEX, s, center)


def block_qp(snaps, n, centered=False):
    """Block-diagonal basis from independent SVDs of the q and p snapshots."""
    n = _check_even(n)
    m = n // 2
    q, p, center = _split_centered(snaps, centered)
    uq, sq = _thin_svd(q)
    up, sp_ = _thin_svd(p)
    _check_modes(m, sq, q.shape, "position-block")
    _check_modes(m, sp_, p.shape, "momentum-block")
    half = q.shape[0]
    big = np.zeros((2 * half, n))
    big[:half, :m] = _fix_signs(uq[:, :m])
    big[half:, m:] = _fix_signs(up[:, :m])
    merged = np.sort(np.concatenate((sq, sp_)))[::-1]
    return ReducedBasis(big, KIND_BLOCK_QP, merged, center)


def snapshot_energy(singular_values, n):
    """Fraction of cumulative singular-value mass captured by n modes.

    Uses first powers of the singular values (not their squares).
    """
    s = np.asarray(singular_values, dtype=float).ravel()
    n = int(n)
    if n < 0 or n > s.size:
        raise ValueError(f"mode count {n} outside [0, {s.size}]")
    total = float(np.sum(s))
    if total == 0.0:
        raise ValueError("all singular values are zero")
    return float(np.sum(s[:n]) / total)


def projection_error(snaps, basis):
    """Frobenius norm of the out-of-span part of the (centered) snapshots."""
    x = snaps.states
    if basis.center is not None:
        x = x - basis.center[:, None]
    if x.shape[0] != basis.dim:
        raise ValueError("snapshot and basis dimensions do not agree")
    residual = x - basis.U @ (basis.U.T @ x)
    return float(np.linalg.norm(residual))


@dataclass
class ReducedSymplectic:
    """Reduced symplectic matrix with its invertibility diagnostics."""

    J_hat: np.ndarray
    sigma_min: float
    canon_dev: float


def reduced_symplectic(basis, degeneracy_tol=1e-12):
    """U^T J U with its minimum singular value and canonicity deviation.

    The deviation lambda_max(Jhat^-T Jhat^-1 - I) equals 1/sigma_min^2 - 1
    and vanishes exactly when Jhat is orthogonal symplectic.  Raises
    DegenerateBasisError for isotropic or near-degenerate bases.
    """
    jhat = basis.U.T @ apply_j(basis.U)
    jhat = 0.5 * (jhat - jhat.T)
    svals = np.linalg.svd(jhat, compute_uv=False)
    sigma_min = float(svals[-1])
    if sigma_min <= degeneracy_tol:
        raise DegenerateBasisError(
            f"isotropic or near-degenerate basis: sigma_min(U^T J U) = {sigma_min:.3e}"
        )
    canon_dev = 1.0 / sigma_min**2 - 1.0
    return ReducedSymplectic(jhat, sigma_min, canon_dev)
