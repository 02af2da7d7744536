"""Canonical symplectic structure helpers.

The full-order symplectic matrix J = [0 I; -I 0] is never materialized:
applying it to a state x = (q, p) is the swap-negate map (q, p) -> (p, -q).
Only the small reduced matrix J_n is ever formed densely.
"""

import numpy as np


def split_qp(x):
    """Split a state vector or column-stacked state matrix into (q, p) halves."""
    n = x.shape[0]
    if n % 2:
        raise ValueError(f"state dimension must be even, got {n}")
    m = n // 2
    return x[:m], x[m:]


def apply_j(x):
    """Apply J = [0 I; -I 0]: (q, p) -> (p, -q). Works on vectors and matrices."""
    q, p = split_qp(x)
    return np.concatenate((p, -q), axis=0)


def apply_jt(x):
    """Apply J^T = -J: (q, p) -> (-p, q)."""
    q, p = split_qp(x)
    return np.concatenate((-p, q), axis=0)


def canonical_j(n):
    """Dense canonical symplectic matrix J_n of even dimension n."""
    if n % 2:
        raise ValueError(f"canonical symplectic matrix needs even dimension, got {n}")
    m = n // 2
    jn = np.zeros((n, n))
    jn[:m, m:] = np.eye(m)
    jn[m:, :m] = -np.eye(m)
    return jn
