"""Emission-absorption ray marcher with post-classification.

Rays are marched front to back through the volume bounding box at a
fixed world-space step. Sampled densities are normalized, pushed through
the transfer function, converted to per-step opacity with the
Beer-Lambert correction a = 1 - exp(-dt * sigma * alpha), and
alpha-blended. The TF stores opacity in [0, 1]; the extinction scale
sigma bridges it to the Beer-Lambert exponent.

All rays advance in lockstep over vectorized per-step arrays, so images
are deterministic regardless of how pixels are partitioned (`row_chunk`
only bounds memory).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .volume import ScalarVolume, TransferFunction, normalized_values, quantize_array


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; construct directly or via `Camera.orbit`."""

    eye: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov: float = math.radians(45.0)
    width: int = 512
    height: int = 512

    def __post_init__(self):
        if not 0.0 < self.fov < math.pi:
            raise ValueError("fov must lie in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if np.allclose(self.eye, self.look_at):
            raise ValueError("eye and look_at coincide")

    @classmethod
    def orbit(cls, azimuth: float, elevation: float, distance: float, center,
              fov: float = math.radians(45.0), width: int = 512, height: int = 512) -> "Camera":
        """Place the eye on a sphere around `center` (z is the pole axis)."""
        if distance <= 0:
            raise ValueError("orbit distance must be positive")
        ce, se = math.cos(elevation), math.sin(elevation)
        d = np.array([ce * math.cos(azimuth), ce * math.sin(azimuth), se])
        eye = np.asarray(center, dtype=np.float64) + distance * d
        up = (0.0, 0.0, 1.0) if abs(se) < 0.99 else (0.0, 1.0, 0.0)
        return cls(eye=tuple(eye), look_at=tuple(np.asarray(center, dtype=np.float64)),
                   up=up, fov=fov, width=width, height=height)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        forward = np.asarray(self.look_at, dtype=np.float64) - np.asarray(self.eye, dtype=np.float64)
        forward /= np.linalg.norm(forward)
        up_hint = np.asarray(self.up, dtype=np.float64)
        right = np.cross(forward, up_hint)
        if np.linalg.norm(right) < 1e-9:
            up_hint = np.array([0.0, 1.0, 0.0])
            right = np.cross(forward, up_hint)
            if np.linalg.norm(right) < 1e-9:
                right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
        right /= np.linalg.norm(right)
        return forward, right, np.cross(right, forward)


@dataclass(frozen=True)
class RenderConfig:
    """Step size, termination, background and opacity-model parameters.

    `step_size` of None means 0.25 * min(spacing). `opacity_clamp` caps
    per-sample opacity; the differentiable path sets it so compositing
    stays invertible. `background` is premultiplied RGBA.
    """

    step_size: float | None = None
    early_termination_alpha: float = 0.99
    early_termination: bool = True
    background: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    max_samples: int = 4096
    extinction_scale: float = 100.0
    opacity_clamp: float | None = None

    def __post_init__(self):
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0.0 < self.early_termination_alpha <= 1.0:
            raise ValueError("early_termination_alpha must lie in (0, 1]")
        if self.max_samples < 1:
            raise ValueError("max_samples must be >= 1")


def diff_render_config(rc: RenderConfig | None = None,
                       inversion_eps: float = 1e-4) -> RenderConfig:
    """Variant of `rc` for differentiable rendering.

    Early termination is hard-disabled so forward and backward passes see
    the same samples, and per-sample opacity is clamped away from 1 to
    keep the compositing inversion well-posed.
    """
    rc = rc or RenderConfig()
    return replace(rc, early_termination=False, opacity_clamp=1.0 - inversion_eps)


@dataclass(frozen=True)
class ImageRGBA:
    """Premultiplied RGBA image, data shape (height, width, 4)."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.height, self.width, 4):
            raise ValueError("image data must have shape (height, width, 4)")
        a = self.data[..., 3]
        if a.min() < -1e-9 or a.max() > 1.0 + 1e-9:
            raise ValueError("alpha channel out of [0, 1]")
        if np.any(self.data[..., :3] > a[..., None] + 1e-6):
            raise ValueError("color channels exceed alpha; image must be premultiplied")

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1, 4)


@dataclass
class CompositingState:
    """Running premultiplied color and opacity of one ray."""

    color: np.ndarray = field(default_factory=lambda: np.zeros(3))
    alpha: float = 0.0


def composite_step(state: CompositingState, color, a: float) -> CompositingState:
    """One front-to-back blend of an emission sample with opacity a."""
    trans = 1.0 - state.alpha
    return CompositingState(
        color=state.color + trans * a * np.asarray(color, dtype=np.float64),
        alpha=state.alpha + trans * a,
    )


# ---------------------------------------------------------------------------
# sampling


def _trilinear_many(data: np.ndarray, dims, spacing, pts: np.ndarray) -> np.ndarray:
    """Trilinear interpolation at world points (n, 3); NaN outside the box.

    Cell-centered grid with clamped borders: voxel (ix, iy, iz) sits at
    ((ix + 0.5) * sx, ...) and border voxels extend to the box faces.
    """
    dims = np.asarray(dims, dtype=np.int64)
    spacing = np.asarray(spacing, dtype=np.float64)
    box = dims * spacing
    inside = np.all((pts >= 0.0) & (pts <= box), axis=1)
    u = pts / spacing - 0.5
    lo = np.clip(np.floor(u), 0, np.maximum(dims - 2, 0)).astype(np.int64)
    hi = np.minimum(lo + 1, dims - 1)
    f = np.clip(u - lo, 0.0, 1.0)

    flat = data.reshape(-1)
    nx, ny = int(dims[0]), int(dims[1])

    def at(ix, iy, iz):
        return flat[(iz * ny + iy) * nx + ix]

    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    x0, y0, z0 = lo[:, 0], lo[:, 1], lo[:, 2]
    x1, y1, z1 = hi[:, 0], hi[:, 1], hi[:, 2]
    c00 = at(x0, y0, z0) * (1 - fx) + at(x1, y0, z0) * fx
    c10 = at(x0, y1, z0) * (1 - fx) + at(x1, y1, z0) * fx
    c01 = at(x0, y0, z1) * (1 - fx) + at(x1, y0, z1) * fx
    c11 = at(x0, y1, z1) * (1 - fx) + at(x1, y1, z1) * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out = c0 * (1 - fz) + c1 * fz
    out = np.where(inside, out, np.nan)
    return out


def trilinear_sample(vol: ScalarVolume, p) -> float:
    """Density at a world point; NaN when outside or any corner missing."""
    pts = np.asarray(p, dtype=np.float64).reshape(1, 3)
    return float(_trilinear_many(vol.data, vol.dims, vol.spacing, pts)[0])


def density_field(vol: ScalarVolume) -> Callable[[np.ndarray], np.ndarray]:
    """Field returning normalized densities d01 (NaN = missing/outside)."""
    if vol.vmin == vol.vmax:
        def f(pts):
            d = _trilinear_many(vol.data, vol.dims, vol.spacing, pts)
            return np.where(np.isfinite(d), 0.0, np.nan)
        return f

    lo, rng = vol.vmin, vol.vmax - vol.vmin

    def f(pts):
        d = _trilinear_many(vol.data, vol.dims, vol.spacing, pts)
        return np.clip((d - lo) / rng, 0.0, 1.0)

    return f


def prenormalized_field(values: np.ndarray, dims, spacing) -> Callable[[np.ndarray], np.ndarray]:
    """Field over values already in [0, 1] (residual volumes); no rescaling."""
    def f(pts):
        d = _trilinear_many(values, dims, spacing, pts)
        return np.clip(d, 0.0, 1.0)

    return f


# ---------------------------------------------------------------------------
# ray setup and the marching core


@dataclass(frozen=True)
class RayBundle:
    eye: np.ndarray        # (3,)
    dirs: np.ndarray       # (n, 3) unit directions
    t0: np.ndarray         # (n,) march start along each ray
    nsteps: np.ndarray     # (n,) sample counts
    dt: float


def make_ray_bundle(cam: Camera, box_size: np.ndarray, dt: float,
                    max_samples: int, rows: slice | None = None) -> RayBundle:
    """Per-pixel rays clipped against the volume box [0, box_size]."""
    forward, right, up = cam.basis()
    eye = np.asarray(cam.eye, dtype=np.float64)
    th = math.tan(cam.fov / 2.0)
    aspect = cam.width / cam.height
    xs = (np.arange(cam.width) + 0.5) / cam.width * 2.0 - 1.0
    ys = 1.0 - (np.arange(cam.height)[rows if rows is not None else slice(None)] + 0.5) / cam.height * 2.0
    dirs = (forward[None, None, :]
            + xs[None, :, None] * (th * aspect) * right[None, None, :]
            + ys[:, None, None] * th * up[None, None, :])
    dirs = dirs.reshape(-1, 3)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    # slab intersection; tiny direction components are nudged so t-values stay finite
    d = np.where(np.abs(dirs) < 1e-300, np.copysign(1e-300, dirs + 1e-320), dirs)
    tA = (0.0 - eye) / d
    tB = (np.asarray(box_size) - eye) / d
    tmin = np.minimum(tA, tB).max(axis=1)
    tmax = np.maximum(tA, tB).min(axis=1)
    t0 = np.maximum(tmin, 0.0)
    span = np.maximum(tmax - t0, 0.0)
    span[tmax <= t0] = 0.0
    nsteps = np.minimum(np.floor(span / dt + 0.5).astype(np.int64), max_samples)
    return RayBundle(eye=eye, dirs=dirs, t0=t0, nsteps=nsteps, dt=dt)


@dataclass(frozen=True)
class ShadedSamples:
    """Per-sample TF lookup results at one marching step."""

    valid: np.ndarray      # finite density under the field
    j: np.ndarray
    w: np.ndarray
    rgba: np.ndarray       # straight-color TF output (k, 4)
    a: np.ndarray          # corrected (and possibly clamped) opacity; 0 where invalid
    a_unclamped: np.ndarray


def shade_points(field01, tf: TransferFunction, pts: np.ndarray,
                 dt_sigma: float, opacity_clamp: float | None) -> ShadedSamples:
    d01 = field01(pts)
    valid = np.isfinite(d01)
    j, w = quantize_array(np.where(valid, d01, 0.0), tf.n_t)
    rgba = (1.0 - w)[:, None] * tf.entries[j] + w[:, None] * tf.entries[j + 1]
    a_raw = 1.0 - np.exp(-dt_sigma * rgba[:, 3])
    a = np.minimum(a_raw, opacity_clamp) if opacity_clamp is not None else a_raw
    a = np.where(valid, a, 0.0)
    return ShadedSamples(valid=valid, j=j, w=w, rgba=rgba, a=a, a_unclamped=a_raw)


def march_forward(bundle: RayBundle, field01, tf: TransferFunction,
                  rc: RenderConfig, collect_states: list | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Front-to-back compositing of all rays; returns (L (n,3), alpha (n,))."""
    n = bundle.dirs.shape[0]
    L = np.zeros((n, 3))
    alpha = np.zeros(n)
    frozen = np.zeros(n, dtype=bool)
    dt_sigma = bundle.dt * rc.extinction_scale
    smax = int(bundle.nsteps.max()) if n else 0
    for s in range(smax):
        idx = np.flatnonzero((s < bundle.nsteps) & ~frozen)
        if idx.size == 0:
            break
        t = bundle.t0[idx] + (s + 0.5) * bundle.dt
        pts = bundle.eye + t[:, None] * bundle.dirs[idx]
        sh = shade_points(field01, tf, pts, dt_sigma, rc.opacity_clamp)
        contrib = (1.0 - alpha[idx]) * sh.a
        L[idx] += contrib[:, None] * sh.rgba[:, :3]
        alpha[idx] += contrib
        if rc.early_termination:
            frozen[idx] |= alpha[idx] >= rc.early_termination_alpha
        if collect_states is not None:
            collect_states.append((L.copy(), alpha.copy()))
    return L, np.minimum(alpha, 1.0)


def _finish_image(L: np.ndarray, alpha: np.ndarray, rc: RenderConfig,
                  width: int, rows: int) -> np.ndarray:
    bg = np.asarray(rc.background, dtype=np.float64)
    out = np.empty((rows * width, 4))
    out[:, :3] = L + (1.0 - alpha)[:, None] * bg[:3]
    out[:, 3] = alpha + (1.0 - alpha) * bg[3]
    return out.reshape(rows, width, 4)


def _render_field(field01, dims_spacing_box, tf, cam, rc, row_chunk):
    dt = rc.step_size if rc.step_size is not None else 0.25 * min(dims_spacing_box[1])
    box = np.asarray(dims_spacing_box[0], dtype=np.float64) * np.asarray(dims_spacing_box[1])
    chunks = []
    step = row_chunk if row_chunk else cam.height
    for y0 in range(0, cam.height, step):
        rows = slice(y0, min(y0 + step, cam.height))
        bundle = make_ray_bundle(cam, box, dt, rc.max_samples, rows)
        L, alpha = march_forward(bundle, field01, tf, rc)
        chunks.append(_finish_image(L, alpha, rc, cam.width, rows.stop - rows.start))
    data = np.concatenate(chunks, axis=0)
    return ImageRGBA(width=cam.width, height=cam.height, data=np.clip(data, 0.0, 1.0))


def render(vol: ScalarVolume, tf: TransferFunction, cam: Camera,
           rc: RenderConfig | None = None, row_chunk: int | None = None) -> ImageRGBA:
    """Render a volume; missing samples and empty ray spans contribute nothing."""
    rc = rc or RenderConfig()
    return _render_field(density_field(vol), (vol.dims, vol.spacing), tf, cam, rc, row_chunk)


def render_residual(resvol, cam: Camera, rc: RenderConfig | None = None,
                    residual_tf: TransferFunction | None = None,
                    row_chunk: int | None = None) -> ImageRGBA:
    """Render a residual volume through a (typically linear-ramp) TF.

    Residual values are already normalized to [0, 1], so they feed the TF
    directly without per-volume range normalization.
    """
    rc = rc or RenderConfig()
    tf = residual_tf if residual_tf is not None else TransferFunction.gray_ramp(256)
    field = prenormalized_field(resvol.values_with_missing(), resvol.dims, resvol.spacing)
    return _render_field(field, (resvol.dims, resvol.spacing), tf, cam, rc, row_chunk)


def trace_ray(vol: ScalarVolume, tf: TransferFunction, cam: Camera, pixel: tuple[int, int],
              rc: RenderConfig | None = None) -> list[CompositingState]:
    """Per-step compositing states of a single pixel's ray (testing hook)."""
    rc = rc or RenderConfig()
    px, py = pixel
    dt = rc.step_size if rc.step_size is not None else 0.25 * min(vol.spacing)
    bundle = make_ray_bundle(cam, vol.box_size, dt, rc.max_samples, rows=slice(py, py + 1))
    one = RayBundle(eye=bundle.eye, dirs=bundle.dirs[px:px + 1],
                    t0=bundle.t0[px:px + 1], nsteps=bundle.nsteps[px:px + 1], dt=dt)
    states: list = []
    march_forward(one, density_field(vol), tf, rc, collect_states=states)
    return [CompositingState(color=L[0], alpha=float(a[0])) for L, a in states]
