"""Synthetic test volumes and ensemble correlation fields.

The synthetic generators reproduce two controlled scenarios: a linear
ramp and its mirror (identical histograms, reversed value-position
association) and a two-valued step field with a nested inner cube whose
values are flipped. Correlation fields (Pearson, Kendall tau-b) against
a reference point provide realistic demo inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .volume import ScalarVolume

SYNTHETIC_KINDS = ("ramp_x", "ramp_x_inverted", "step_x", "nested_cube")


class ConstantSeries(Exception):
    """Raised when the reference-point ensemble series has no variance."""


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    dims: tuple[int, int, int]
    inner_fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        if min(self.dims) < 1 or self.dims[0] < 2:
            raise ValueError("synthetic volumes need nx >= 2 and all dims >= 1")
        if self.kind == "nested_cube" and not 0.0 < self.inner_fraction < 1.0:
            raise ValueError("inner_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class EnsembleStack:
    """E >= 2 member volumes on a shared grid."""

    members: tuple[ScalarVolume, ...]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("an ensemble needs at least 2 members")
        first = self.members[0]
        for m in self.members[1:]:
            if m.dims != first.dims or m.spacing != first.spacing:
                raise ValueError("ensemble members must share dims and spacing")

    @property
    def member_count(self) -> int:
        return len(self.members)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.members[0].dims

    def stacked(self) -> np.ndarray:
        """(E, nz, ny, nx) array of member data."""
        return np.stack([m.data for m in self.members], axis=0)


def make_synthetic(spec: SyntheticSpec) -> ScalarVolume:
    nx, ny, nz = spec.dims
    x = np.arange(nx, dtype=np.float64)
    if spec.kind == "ramp_x":
        line = x / (nx - 1)
    elif spec.kind == "ramp_x_inverted":
        # computed as a reversal of ramp_x so the two are exact permutations
        # of each other (identical histograms bit-for-bit)
        line = x[::-1] / (nx - 1)
    else:
        line = (x >= nx / 2.0).astype(np.float64)
    data = np.broadcast_to(line, (nz, ny, nx)).copy()
    if spec.kind == "nested_cube":
        inner = [max(1, int(round(spec.inner_fraction * n))) for n in spec.dims]
        lo = [(n - s) // 2 for n, s in zip(spec.dims, inner)]
        hi = [l + s for l, s in zip(lo, inner)]
        sx, sy, sz = (slice(lo[i], hi[i]) for i in range(3))
        data[sz, sy, sx] = 1.0 - data[sz, sy, sx]
    return ScalarVolume(dims=spec.dims, spacing=(1.0, 1.0, 1.0), data=data)


def load_ensemble(manifest_path: str | Path) -> EnsembleStack:
    """Read an ensemble from a JSON manifest listing member header files."""
    from .io import FormatError, load_volume

    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    names = doc["members"] if isinstance(doc, dict) else doc
    if not isinstance(names, list) or not names:
        raise FormatError("ensemble manifest must list member volume headers")
    members = tuple(load_volume(manifest_path.parent / n) for n in names)
    return EnsembleStack(members=members)


def _reference_series(ens: EnsembleStack, ref_point) -> np.ndarray:
    ix, iy, iz = ref_point
    nx, ny, nz = ens.dims
    if not (0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz):
        raise IndexError(f"ref_point {ref_point} outside dims {ens.dims}")
    y = ens.stacked()[:, iz, iy, ix]
    if not np.all(np.isfinite(y)):
        raise ConstantSeries("reference series contains missing values")
    if np.ptp(y) == 0.0:
        raise ConstantSeries("reference series is constant")
    return y


def pearson_field(ens: EnsembleStack, ref_point) -> ScalarVolume:
    """Per-voxel Pearson correlation against the reference-point series.

    Voxels whose series has zero variance (or missing members) come back
    as missing (NaN).
    """
    y = _reference_series(ens, ref_point)
    stack = ens.stacked()
    e = ens.member_count
    flat = stack.reshape(e, -1)
    valid = np.all(np.isfinite(flat), axis=0)

    yc = y - y.mean()
    xm = flat.mean(axis=0)
    xc = flat - xm
    num = xc.T @ yc
    xvar = np.einsum("ev,ev->v", xc, xc)
    yvar = float(yc @ yc)
    denom = np.sqrt(xvar * yvar)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / denom
    r = np.clip(r, -1.0, 1.0)
    r[~valid | (xvar == 0.0)] = np.nan
    nz, ny, nx = stack.shape[1:]
    return ScalarVolume(dims=ens.dims, spacing=ens.members[0].spacing,
                        data=r.reshape(nz, ny, nx))


def kendall_field(ens: EnsembleStack, ref_point, chunk: int = 8192) -> ScalarVolume:
    """Per-voxel Kendall tau-b against the reference-point series.

    Computed by counting concordant/discordant pairs over all E*(E-1)/2
    member pairs, with tie correction on both sides. Fully-tied voxel
    series come back missing.
    """
    y = _reference_series(ens, ref_point)
    stack = ens.stacked()
    e = ens.member_count
    flat = stack.reshape(e, -1)
    m = flat.shape[1]
    valid = np.all(np.isfinite(flat), axis=0)

    pairs = np.array(list(combinations(range(e), 2)), dtype=np.int64)
    ia, ib = pairs[:, 0], pairs[:, 1]
    sy = np.sign(y[ia] - y[ib])
    n0 = e * (e - 1) // 2
    ties_y = int(np.count_nonzero(sy == 0))

    tau = np.full(m, np.nan)
    for start in range(0, m, chunk):
        sl = slice(start, min(start + chunk, m))
        sx = np.sign(flat[ia, sl.start:sl.stop] - flat[ib, sl.start:sl.stop])
        concord = sx.T @ sy
        ties_x = np.count_nonzero(sx == 0, axis=0)
        denom = np.sqrt((n0 - ties_x).astype(np.float64) * (n0 - ties_y))
        with np.errstate(invalid="ignore", divide="ignore"):
            tau[sl] = np.clip(concord / denom, -1.0, 1.0)
        tau[sl][denom == 0.0] = np.nan
    tau[~valid] = np.nan
    nz, ny, nx = stack.shape[1:]
    return ScalarVolume(dims=ens.dims, spacing=ens.members[0].spacing,
                        data=tau.reshape(nz, ny, nx))
