"""Volume-space residuals and image-space comparison metrics.

The residual field measures, per voxel, how far apart two preshaded
ensemble members are in premultiplied RGBA space; the factor 1/2
normalizes the 4-vector distance into [0, 1]. Image metrics (RMSE, PSNR,
SSIM) are computed on renders composited over white and scaled to the
8-bit range, without quantizing to integers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .render import ImageRGBA
from .volume import DimsMismatch, ScalarVolume, TransferFunction, normalized_values, tf_eval


@dataclass(frozen=True)
class ResidualVolume:
    """Per-voxel residual in [0, 1]; 0 where either input was missing."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    values: np.ndarray            # (nz, ny, nx), already normalized
    missing: np.ndarray           # bool (nz, ny, nx)

    def __post_init__(self):
        nx, ny, nz = self.dims
        if self.values.shape != (nz, ny, nx) or self.missing.shape != (nz, ny, nx):
            raise DimsMismatch("residual arrays do not match dims")

    def values_with_missing(self) -> np.ndarray:
        """Values with NaN at missing voxels (for rendering)."""
        out = self.values.copy()
        out[self.missing] = np.nan
        return out

    def to_volume(self) -> ScalarVolume:
        return ScalarVolume(dims=self.dims, spacing=self.spacing,
                            data=self.values_with_missing())


def _premultiplied(vol: ScalarVolume, tf: TransferFunction) -> tuple[np.ndarray, np.ndarray]:
    d01 = normalized_values(vol)
    missing = ~np.isfinite(d01)
    rgba = tf_eval(tf, np.where(missing, 0.0, d01))
    pm = np.empty_like(rgba)
    pm[..., :3] = rgba[..., :3] * rgba[..., 3:]
    pm[..., 3] = rgba[..., 3]
    return pm, missing


def residual_field(vol_r: ScalarVolume, tf_r: TransferFunction,
                   vol_o: ScalarVolume, tf_o: TransferFunction) -> ResidualVolume:
    """Half the Euclidean distance of preshaded premultiplied RGBA per voxel."""
    if vol_r.dims != vol_o.dims:
        raise DimsMismatch(f"volume dims differ: {vol_r.dims} vs {vol_o.dims}")
    pm_r, miss_r = _premultiplied(vol_r, tf_r)
    pm_o, miss_o = _premultiplied(vol_o, tf_o)
    diff = pm_r - pm_o
    res = 0.5 * np.sqrt(np.einsum("...i,...i->...", diff, diff))
    missing = miss_r | miss_o
    res[missing] = 0.0
    return ResidualVolume(dims=vol_r.dims, spacing=vol_r.spacing,
                          values=np.clip(res, 0.0, 1.0), missing=missing)


# ---------------------------------------------------------------------------
# image metrics


def to_rgb255_over_white(img: ImageRGBA) -> np.ndarray:
    """Composite over white and scale to [0, 255] (float, not quantized)."""
    rgb = img.data[..., :3] + (1.0 - img.data[..., 3:])
    return np.clip(rgb, 0.0, 1.0) * 255.0


def _check_same_size(a: ImageRGBA, b: ImageRGBA):
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")


def image_rmse(a: ImageRGBA, b: ImageRGBA) -> float:
    _check_same_size(a, b)
    diff = to_rgb255_over_white(a) - to_rgb255_over_white(b)
    return float(np.sqrt(np.mean(diff * diff)))


def image_psnr(a: ImageRGBA, b: ImageRGBA) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    rmse = image_rmse(a, b)
    if rmse == 0.0:
        return math.inf
    return 20.0 * math.log10(255.0 / rmse)


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def image_ssim(a: ImageRGBA, b: ImageRGBA, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity over an 11x11 Gaussian window (sigma 1.5).

    Channels are compared independently on the white-composited 8-bit
    scale and averaged. Images smaller than the window fall back to a
    single global window.
    """
    _check_same_size(a, b)
    x = to_rgb255_over_white(a)
    y = to_rgb255_over_white(b)
    data_range = 255.0
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    if a.height < 11 or a.width < 11:
        vals = []
        for ch in range(3):
            xc, yc = x[..., ch], y[..., ch]
            mx, my = xc.mean(), yc.mean()
            vx = np.mean(xc * xc) - mx * mx
            vy = np.mean(yc * yc) - my * my
            cxy = np.mean(xc * yc) - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        return float(np.mean(vals))

    kern = _gaussian_kernel()
    vals = []
    for ch in range(3):
        xc, yc = x[..., ch], y[..., ch]
        mx = convolve2d(xc, kern, mode="valid")
        my = convolve2d(yc, kern, mode="valid")
        vx = convolve2d(xc * xc, kern, mode="valid") - mx * mx
        vy = convolve2d(yc * yc, kern, mode="valid") - my * my
        cxy = convolve2d(xc * yc, kern, mode="valid") - mx * my
        s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        vals.append(float(s.mean()))
    return float(np.mean(vals))


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    psnr: float
    ssim: float

    @classmethod
    def from_images(cls, a: ImageRGBA, b: ImageRGBA) -> "MetricReport":
        return cls(rmse=image_rmse(a, b), psnr=image_psnr(a, b), ssim=image_ssim(a, b))

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "psnr": None if not math.isfinite(self.psnr) else self.psnr,
            "ssim": self.ssim,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)
