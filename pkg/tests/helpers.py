"""Shared builders and independent oracles for the test suite.

Oracles here deliberately avoid the code paths they check: dense
matrices come from the explicit CSR export through scipy, least-squares
reference solutions from numpy's lstsq, and the box-QP oracle from
brute-force active-set enumeration.
"""

from __future__ import annotations

import itertools

import numpy as np

from tfopt import ScalarVolume, TransferFunction, build_csr, preshaded_colors


def random_volume(rng, dims=(8, 8, 8), spacing=(1.0, 1.0, 1.0), lo=0.0, hi=1.0):
    nx, ny, nz = dims
    return ScalarVolume.from_values(rng.uniform(lo, hi, size=(nz, ny, nx)), spacing=spacing)


def volume_from_flat(values, dims, spacing=(1.0, 1.0, 1.0)):
    """Volume from an x-fastest flat list."""
    nx, ny, nz = dims
    data = np.asarray(values, dtype=np.float64).reshape(nz, ny, nx)
    return ScalarVolume(dims=dims, spacing=spacing, data=data)


def dense_A(vol_o: ScalarVolume, n_t: int) -> np.ndarray:
    return build_csr(vol_o, n_t).to_scipy().toarray()


def target_vector(vol_r: ScalarVolume, tf_r: TransferFunction) -> np.ndarray:
    """b: preshaded reference colors, flattened voxel-major (4 per voxel)."""
    return preshaded_colors(vol_r, tf_r).reshape(-1)


def dense_lstsq_clamped(vol_o, vol_r, tf_r, n_t) -> np.ndarray:
    """64-bit dense least-squares solution, truncated to [0, 1].

    Assumes no missing voxels (so the row sets of A and b agree).
    """
    assert np.all(np.isfinite(vol_o.data)) and np.all(np.isfinite(vol_r.data))
    A = dense_A(vol_o, n_t)
    b = target_vector(vol_r, tf_r)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return np.clip(x, 0.0, 1.0)


def box_qp_bruteforce(G: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact minimizer of x^T G x - 2 c^T x over [0, 1]^n by active-set search.

    G must be positive definite. Every variable is tried as free, pinned
    at 0, or pinned at 1; the unique KKT-consistent candidate wins.
    Exponential in n, so only for tiny systems.
    """
    n = len(c)
    best = None
    for status in itertools.product((0, 1, 2), repeat=n):   # 0 free, 1 at lo, 2 at hi
        x = np.zeros(n)
        free = [i for i, s in enumerate(status) if s == 0]
        for i, s in enumerate(status):
            if s == 2:
                x[i] = 1.0
        if free:
            idx = np.array(free)
            rhs = c[idx] - G[np.ix_(idx, [i for i in range(n) if i not in free])] @ \
                x[[i for i in range(n) if i not in free]]
            x[idx] = np.linalg.solve(G[np.ix_(idx, idx)], rhs)
        if np.any(x < -1e-10) or np.any(x > 1.0 + 1e-10):
            continue
        g = 2.0 * (G @ x - c)
        ok = True
        for i, s in enumerate(status):
            if s == 1 and g[i] < -1e-8:
                ok = False
            elif s == 2 and g[i] > 1e-8:
                ok = False
            elif s == 0 and abs(g[i]) > 1e-7 * max(1.0, np.abs(g).max()):
                ok = False
        if not ok:
            continue
        obj = float(x @ G @ x - 2.0 * c @ x)
        if best is None or obj < best[0] - 1e-12:
            best = (obj, np.clip(x, 0.0, 1.0))
    assert best is not None, "no KKT point found; G not positive definite?"
    return best[1]
