"""Scalar volumes, transfer functions, quantization and histograms.

Shared vocabulary for the whole toolkit: a volume is a regular grid of
densities (non-finite values mark missing data), a transfer function is a
table of RGBA entries in [0, 1] with piecewise-linear lookup between
entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class DegenerateRange(Exception):
    """Raised when a volume's value range collapses to a single value."""


class DimsMismatch(Exception):
    """Raised when two volumes that must share a grid do not."""


@dataclass(frozen=True)
class ScalarVolume:
    """A 3D grid of scalar densities.

    ``data`` has shape (nz, ny, nx), so a C-order ravel enumerates voxels
    x-fastest. Non-finite entries are missing values; they are excluded
    from the cached range and from every downstream computation.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    data: np.ndarray
    vmin: float = field(init=False)
    vmax: float = field(init=False)

    def __post_init__(self):
        nx, ny, nz = self.dims
        if min(nx, ny, nz) < 1:
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if min(self.spacing) <= 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.size != nx * ny * nz:
            raise ValueError(
                f"data size {data.size} does not match dims {self.dims}"
            )
        data = data.reshape(nz, ny, nx)
        object.__setattr__(self, "data", data)
        finite = data[np.isfinite(data)]
        if finite.size:
            object.__setattr__(self, "vmin", float(finite.min()))
            object.__setattr__(self, "vmax", float(finite.max()))
        else:
            object.__setattr__(self, "vmin", 0.0)
            object.__setattr__(self, "vmax", 0.0)

    @classmethod
    def from_values(cls, values: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> "ScalarVolume":
        """Build a volume from a (nz, ny, nx) array."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError("expected a 3D array (nz, ny, nx)")
        nz, ny, nx = values.shape
        return cls(dims=(nx, ny, nz), spacing=tuple(float(s) for s in spacing), data=values)

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def missing_mask(self) -> np.ndarray:
        """Boolean (nz, ny, nx) array, True where the voxel is missing."""
        return ~np.isfinite(self.data)

    @property
    def box_size(self) -> np.ndarray:
        """World-space extent of the volume, (3,) in (x, y, z) order."""
        return np.array(self.dims, dtype=np.float64) * np.asarray(self.spacing)


@dataclass(frozen=True)
class TransferFunction:
    """Table of n_T RGBA entries in [0, 1], linearly interpolated."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[1] != 4:
            raise ValueError("entries must have shape (n_T, 4)")
        if entries.shape[0] < 2:
            raise ValueError("a transfer function needs at least 2 entries")
        if entries.min() < -1e-12 or entries.max() > 1.0 + 1e-12:
            raise ValueError("entries must lie in [0, 1]")
        object.__setattr__(self, "entries", np.clip(entries, 0.0, 1.0))

    @property
    def n_t(self) -> int:
        return self.entries.shape[0]

    def linearized(self) -> np.ndarray:
        """Entry-major flat vector of length 4*n_T (index 4k+ch)."""
        return self.entries.reshape(-1).copy()

    @classmethod
    def from_linear(cls, x: np.ndarray, n_t: int | None = None) -> "TransferFunction":
        x = np.asarray(x, dtype=np.float64)
        if x.size % 4 != 0:
            raise ValueError("linearized TF length must be a multiple of 4")
        if n_t is not None and x.size != 4 * n_t:
            raise ValueError(f"expected {4 * n_t} values for n_t={n_t}, got {x.size}")
        return cls(entries=x.reshape(-1, 4))

    @classmethod
    def flat(cls, n_t: int, rgba) -> "TransferFunction":
        return cls(entries=np.tile(np.asarray(rgba, dtype=np.float64), (n_t, 1)))

    @classmethod
    def gray_ramp(cls, n_t: int = 256) -> "TransferFunction":
        """Linear gray ramp with opacity rising from 0 to 1."""
        t = np.linspace(0.0, 1.0, n_t)
        return cls(entries=np.stack([t, t, t, t], axis=1))

    @classmethod
    def blue_red(cls, n_t: int = 256, alpha_max: float = 0.8) -> "TransferFunction":
        """Diverging blue-to-red map with a V-shaped opacity profile."""
        t = np.linspace(0.0, 1.0, n_t)
        r = t
        g = 0.15 + 0.25 * (1.0 - np.abs(2 * t - 1))
        b = 1.0 - t
        a = alpha_max * np.abs(2 * t - 1)
        return cls(entries=np.stack([r, g, b, a], axis=1))

    @classmethod
    def random(cls, rng: np.random.Generator, n_t: int = 8) -> "TransferFunction":
        return cls(entries=rng.uniform(0.0, 1.0, size=(n_t, 4)))


class BinCoordinate(NamedTuple):
    """Lower bin index and interpolation weight of a quantized density."""

    j: int
    w: float


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    edges: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]


def normalize_density(vol: ScalarVolume, value: float) -> float:
    """Map a density into [0, 1] by the volume's finite value range.

    Raises DegenerateRange when vmin == vmax; callers then map every
    voxel to bin 0 with weight 0.
    """
    if vol.vmin == vol.vmax:
        raise DegenerateRange(f"volume range is degenerate at {vol.vmin}")
    d = (value - vol.vmin) / (vol.vmax - vol.vmin)
    return float(min(max(d, 0.0), 1.0))


def normalized_values(vol: ScalarVolume, values: np.ndarray | None = None) -> np.ndarray:
    """Vectorized normalization with the degenerate-range rule applied.

    Returns an array of d01 values in [0, 1]; NaNs pass through so
    missing voxels stay missing. A degenerate range maps everything to 0.
    """
    if values is None:
        values = vol.data
    values = np.asarray(values, dtype=np.float64)
    if vol.vmin == vol.vmax:
        out = np.zeros_like(values)
        out[~np.isfinite(values)] = np.nan
        return out
    return np.clip((values - vol.vmin) / (vol.vmax - vol.vmin), 0.0, 1.0)


def quantize(d01: float, n_t: int) -> BinCoordinate:
    """Quantize a normalized density to a bin index and weight.

    w = 1 occurs only at d01 = 1 (upper edge falls into the last
    interval), so a matrix row always has exactly two columns.
    """
    j, w = quantize_array(np.asarray(d01, dtype=np.float64), n_t)
    return BinCoordinate(j=int(j), w=float(w))


def quantize_array(d01: np.ndarray, n_t: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized quantize; NaN inputs produce bin 0 with weight NaN."""
    u = np.asarray(d01, dtype=np.float64) * (n_t - 1)
    j = np.minimum(np.floor(u), n_t - 2)
    j = np.where(np.isfinite(j), j, 0.0).astype(np.int64)
    w = u - j
    return j, w


def tf_eval(tf: TransferFunction, d01) -> np.ndarray:
    """Piecewise-linear transfer function lookup.

    Accepts a scalar or an array of normalized densities; returns RGBA
    with shape d01.shape + (4,). All outputs lie in [0, 1] by convexity.
    """
    d01 = np.asarray(d01, dtype=np.float64)
    j, w = quantize_array(d01, tf.n_t)
    w = w[..., None]
    return (1.0 - w) * tf.entries[j] + w * tf.entries[j + 1]


def histogram(vol: ScalarVolume, n_bins: int) -> Histogram:
    """Counts of non-missing voxels per equal-width bin over [vmin, vmax].

    The top edge is inclusive. A degenerate range puts every non-missing
    voxel into bin 0.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    finite = vol.data[np.isfinite(vol.data)]
    edges = np.linspace(vol.vmin, vol.vmax, n_bins + 1)
    if vol.vmin == vol.vmax:
        counts = np.zeros(n_bins, dtype=np.int64)
        counts[0] = finite.size
        return Histogram(counts=counts, edges=edges)
    counts, edges = np.histogram(finite, bins=n_bins, range=(vol.vmin, vol.vmax))
    return Histogram(counts=counts.astype(np.int64), edges=edges)
