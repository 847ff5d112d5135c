"""Linear relation between TF entries and pre-shaded voxel colors.

Each voxel's RGBA is a convex combination of two adjacent TF entries, so
the system matrix has exactly two nonzeros per row with a stride of 4
between them (one row per voxel per channel). Because channels do not
couple, the Gram matrix collapses to a single symmetric tridiagonal
n_T x n_T block shared by all four channels, with one right-hand side
per channel.

All accumulation happens in float64 regardless of volume storage
precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import (
    DimsMismatch,
    ScalarVolume,
    TransferFunction,
    normalized_values,
    quantize_array,
    tf_eval,
)


class EmptySystem(Exception):
    """Raised when no non-missing voxels are available for assembly."""


@dataclass(frozen=True)
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.row_offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have n_rows + 1 entries")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != len(self.values):
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if len(self.col_indices) != len(self.values):
            raise ValueError("col_indices and values must have equal length")

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_scipy(self):
        from scipy.sparse import csr_matrix

        return csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.n_rows, self.n_cols),
        )


@dataclass(frozen=True)
class GramSystem:
    """Per-channel tridiagonal A^T A plus the four right-hand sides A^T b.

    ``diag``/``offdiag`` encode the shared tridiagonal block; ``rhs`` has
    shape (4, n_T). ``target_sq_sum`` carries sum(b^2) over all channels
    so solvers can report the true least-squares objective.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    rhs: np.ndarray
    voxel_count_used: int
    target_sq_sum: float = 0.0

    def __post_init__(self):
        if self.offdiag.shape != (self.diag.shape[0] - 1,):
            raise ValueError("offdiag must have n_T - 1 entries")
        if self.rhs.shape != (4, self.diag.shape[0]):
            raise ValueError("rhs must have shape (4, n_T)")

    @property
    def n_t(self) -> int:
        return self.diag.shape[0]

    def dense(self) -> np.ndarray:
        """Materialize the tridiagonal block (tests and small solves only)."""
        g = np.diag(self.diag)
        idx = np.arange(self.n_t - 1)
        g[idx, idx + 1] = self.offdiag
        g[idx + 1, idx] = self.offdiag
        return g

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Tridiagonal product G @ x; x may be (n_T,) or (n_T, k)."""
        x = np.asarray(x, dtype=np.float64)
        d = self.diag if x.ndim == 1 else self.diag[:, None]
        out = d * x
        if self.n_t > 1:
            e = self.offdiag if x.ndim == 1 else self.offdiag[:, None]
            out[:-1] += e * x[1:]
            out[1:] += e * x[:-1]
        return out

    def objective(self, x: np.ndarray) -> float:
        """||b - Ax||^2 for entry-major x of length 4*n_T."""
        xe = np.asarray(x, dtype=np.float64).reshape(self.n_t, 4)
        gx = self.matvec(xe)
        quad = float(np.sum(xe * gx))
        lin = float(np.sum(self.rhs.T * xe))
        return self.target_sq_sum - 2.0 * lin + quad


def _joint_bins(vol_o: ScalarVolume, vol_r: ScalarVolume | None, n_t: int):
    """Bin indices/weights for vol_o voxels non-missing in both volumes."""
    mask = np.isfinite(vol_o.data).ravel()
    if vol_r is not None:
        if vol_o.dims != vol_r.dims:
            raise DimsMismatch(f"dims {vol_o.dims} vs {vol_r.dims}")
        mask &= np.isfinite(vol_r.data).ravel()
    d01 = normalized_values(vol_o).ravel()[mask]
    j, w = quantize_array(d01, n_t)
    return mask, j, w


def preshaded_colors(vol: ScalarVolume, tf: TransferFunction,
                     mask: np.ndarray | None = None) -> np.ndarray:
    """Apply the TF to normalized voxel densities; (m, 4) for masked voxels."""
    if mask is None:
        mask = np.isfinite(vol.data).ravel()
    d01 = normalized_values(vol).ravel()[mask]
    return tf_eval(tf, d01)


def assemble_gram(vol_o: ScalarVolume, vol_r: ScalarVolume,
                  tf_r: TransferFunction, n_t: int) -> GramSystem:
    """Accumulate A^T A and A^T b over voxels non-missing in both volumes."""
    mask, j, w = _joint_bins(vol_o, vol_r, n_t)
    b = preshaded_colors(vol_r, tf_r, mask)
    one_w = 1.0 - w
    diag = np.bincount(j, weights=one_w * one_w, minlength=n_t)
    diag += np.bincount(j + 1, weights=w * w, minlength=n_t)
    offdiag = np.bincount(j, weights=one_w * w, minlength=n_t - 1)[: n_t - 1]
    rhs = np.empty((4, n_t))
    for ch in range(4):
        rhs[ch] = np.bincount(j, weights=one_w * b[:, ch], minlength=n_t)
        rhs[ch] += np.bincount(j + 1, weights=w * b[:, ch], minlength=n_t)
    return GramSystem(
        diag=diag,
        offdiag=offdiag,
        rhs=rhs,
        voxel_count_used=int(mask.sum()),
        target_sq_sum=float(np.sum(b * b)),
    )


def build_csr(vol_o: ScalarVolume, n_t: int) -> CsrMatrix:
    """Explicit CSR system matrix: 4 rows per non-missing voxel.

    Row 4*i + ch holds (1-w) at column 4*j + ch and w at 4*(j+1) + ch.
    """
    mask, j, w = _joint_bins(vol_o, None, n_t)
    m_v = int(mask.sum())
    if m_v == 0:
        raise EmptySystem("volume has no non-missing voxels")
    ch = np.arange(4, dtype=np.int64)
    cols = np.empty((m_v, 4, 2), dtype=np.int64)
    cols[:, :, 0] = 4 * j[:, None] + ch
    cols[:, :, 1] = 4 * (j[:, None] + 1) + ch
    vals = np.empty((m_v, 4, 2))
    vals[:, :, 0] = (1.0 - w)[:, None]
    vals[:, :, 1] = w[:, None]
    return CsrMatrix(
        n_rows=4 * m_v,
        n_cols=4 * n_t,
        row_offsets=np.arange(4 * m_v + 1, dtype=np.int64) * 2,
        col_indices=cols.reshape(-1),
        values=vals.reshape(-1),
    )


def _apply_bins(j: np.ndarray, w: np.ndarray, x: np.ndarray, n_t: int) -> np.ndarray:
    xe = np.asarray(x, dtype=np.float64).reshape(n_t, 4)
    out = (1.0 - w)[:, None] * xe[j] + w[:, None] * xe[j + 1]
    return out.reshape(-1)


def _apply_bins_t(j: np.ndarray, w: np.ndarray, v: np.ndarray, n_t: int) -> np.ndarray:
    ve = np.asarray(v, dtype=np.float64).reshape(-1, 4)
    out = np.empty((n_t, 4))
    one_w = 1.0 - w
    for ch in range(4):
        out[:, ch] = np.bincount(j, weights=one_w * ve[:, ch], minlength=n_t)
        out[:, ch] += np.bincount(j + 1, weights=w * ve[:, ch], minlength=n_t)
    return out.reshape(-1)


def apply_A(vol_o: ScalarVolume, n_t: int, x: np.ndarray) -> np.ndarray:
    """Matrix-free A @ x: pre-shaded voxel colors for TF-space x."""
    _, j, w = _joint_bins(vol_o, None, n_t)
    if len(x) != 4 * n_t:
        raise ValueError(f"x must have length {4 * n_t}, got {len(x)}")
    return _apply_bins(j, w, x, n_t)


def apply_At(vol_o: ScalarVolume, n_t: int, v: np.ndarray) -> np.ndarray:
    """Matrix-free A^T @ v for a voxel-color vector v."""
    mask, j, w = _joint_bins(vol_o, None, n_t)
    if len(v) != 4 * int(mask.sum()):
        raise ValueError(f"v must have length {4 * int(mask.sum())}, got {len(v)}")
    return _apply_bins_t(j, w, v, n_t)
