"""Differentiable volume rendering for image-space TF optimization.

The backward pass re-walks each ray from back to front and inverts the
front-to-back compositing recurrence to recover intermediate states, so
no per-step state has to be stored during the forward pass. Per-sample
opacity is clamped to 1 - INVERSION_EPS to keep the inversion
denominator bounded away from zero; the clamp derivative is zero, which
matches the forward computation exactly.

Gradients flow into the transfer-function entries only; camera, volume
and step size stay fixed. TF entries are updated with Adam under a
[0, 1] box projection, averaging gradients over freshly sampled orbits
each iteration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .render import (Camera, ImageRGBA, RenderConfig, diff_render_config,
                     density_field, make_ray_bundle, march_forward, render, shade_points)
from .solvers import NonFinite, SolveReport
from .volume import ScalarVolume, TransferFunction

INVERSION_EPS = 1e-4


@dataclass(frozen=True)
class DiffOptConfig:
    iterations: int = 400
    cameras_per_iter: int = 8
    width: int = 512
    height: int = 512
    lr: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    radius_scale: float = 1.5
    loss: str = "l2"                   # l2 | l1

    def __post_init__(self):
        if self.iterations < 1 or self.cameras_per_iter < 1:
            raise ValueError("iterations and cameras_per_iter must be >= 1")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.radius_scale <= 0:
            raise ValueError("radius_scale must be positive")
        if self.loss not in ("l2", "l1"):
            raise ValueError("loss must be 'l2' or 'l1'")


def image_loss(img: ImageRGBA, target: ImageRGBA, kind: str = "l2") -> float:
    """Mean per-channel image difference (premultiplied RGBA)."""
    diff = img.data - target.data
    if kind == "l2":
        return float(np.mean(diff * diff))
    return float(np.mean(np.abs(diff)))


def loss_and_grad(vol_o: ScalarVolume, tf: TransferFunction, target: ImageRGBA,
                  cam: Camera, rc: RenderConfig, kind: str = "l2"
                  ) -> tuple[float, np.ndarray]:
    """Image loss against `target` and its gradient w.r.t. the linearized TF.

    `rc` must come from `diff_render_config`: early termination off and an
    opacity clamp set, otherwise forward and backward walks disagree.
    """
    if rc.early_termination:
        raise ValueError("differentiable rendering requires early_termination=False")
    if rc.opacity_clamp is None or not 0.0 < rc.opacity_clamp < 1.0:
        raise ValueError("differentiable rendering requires an opacity clamp in (0, 1)")
    if (target.width, target.height) != (cam.width, cam.height):
        raise ValueError("target image size does not match the camera")

    dt = rc.step_size if rc.step_size is not None else 0.25 * min(vol_o.spacing)
    field01 = density_field(vol_o)
    bundle = make_ray_bundle(cam, vol_o.box_size, dt, rc.max_samples)
    dt_sigma = dt * rc.extinction_scale

    L, alpha = march_forward(bundle, field01, tf, rc)
    bg = np.asarray(rc.background, dtype=np.float64)
    img = np.empty((L.shape[0], 4))
    img[:, :3] = L + (1.0 - alpha)[:, None] * bg[:3]
    img[:, 3] = alpha + (1.0 - alpha) * bg[3]

    diff = img - target.flat()
    n_vals = diff.size
    if kind == "l2":
        loss = float(np.mean(diff * diff))
        g_img = (2.0 / n_vals) * diff
    elif kind == "l1":
        loss = float(np.mean(np.abs(diff)))
        g_img = np.sign(diff) / n_vals
    else:
        raise ValueError("kind must be 'l2' or 'l1'")

    # seed ray adjoints through the background blend
    gL = g_img[:, :3].copy()
    galpha = g_img[:, 3] * (1.0 - bg[3]) - g_img[:, :3] @ bg[:3]

    n_t = tf.n_t
    grad = np.zeros((n_t, 4))
    smax = int(bundle.nsteps.max()) if bundle.nsteps.size else 0
    for s in range(smax - 1, -1, -1):
        idx = np.flatnonzero(s < bundle.nsteps)
        if idx.size == 0:
            continue
        t = bundle.t0[idx] + (s + 0.5) * bundle.dt
        pts = bundle.eye + t[:, None] * bundle.dirs[idx]
        sh = shade_points(field01, tf, pts, dt_sigma, rc.opacity_clamp)
        a = sh.a
        rgb = sh.rgba[:, :3]

        alpha_prev = (alpha[idx] - a) / (1.0 - a)
        trans = 1.0 - alpha_prev
        gl = gL[idx]
        gdotc = np.einsum("ij,ij->i", gl, rgb)

        g_c = gl * (trans * a)[:, None]
        g_a = trans * (galpha[idx] + gdotc)
        galpha[idx] = galpha[idx] * (1.0 - a) - a * gdotc

        da = dt_sigma * np.exp(-dt_sigma * sh.rgba[:, 3])
        da[sh.a_unclamped >= rc.opacity_clamp] = 0.0
        g_atf = np.where(sh.valid, g_a * da, 0.0)
        g_c[~sh.valid] = 0.0

        one_w = 1.0 - sh.w
        for ch in range(3):
            grad[:, ch] += np.bincount(sh.j, weights=one_w * g_c[:, ch], minlength=n_t)
            grad[:, ch] += np.bincount(sh.j + 1, weights=sh.w * g_c[:, ch], minlength=n_t)
        grad[:, 3] += np.bincount(sh.j, weights=one_w * g_atf, minlength=n_t)
        grad[:, 3] += np.bincount(sh.j + 1, weights=sh.w * g_atf, minlength=n_t)

        alpha[idx] = alpha_prev
        L[idx] -= (trans * a)[:, None] * rgb

    flat = grad.reshape(-1)
    if not (math.isfinite(loss) and np.all(np.isfinite(flat))):
        raise NonFinite("image loss or gradient became non-finite")
    return loss, flat


def sample_orbit_camera(rng: np.random.Generator, center: np.ndarray, distance: float,
                        width: int, height: int, fov: float = math.radians(45.0)) -> Camera:
    """Area-uniform random viewpoint on the sphere around `center`."""
    z = rng.uniform(-1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    r = math.sqrt(max(0.0, 1.0 - z * z))
    d = np.array([r * math.cos(phi), r * math.sin(phi), z])
    up = (0.0, 0.0, 1.0) if abs(z) < 0.99 else (0.0, 1.0, 0.0)
    return Camera(eye=tuple(center + distance * d), look_at=tuple(center), up=up,
                  fov=fov, width=width, height=height)


def optimize_diffdvr(vol_r: ScalarVolume, tf_r: TransferFunction, vol_o: ScalarVolume,
                     tf_init: TransferFunction, cfg: DiffOptConfig | None = None,
                     rc: RenderConfig | None = None,
                     snapshot_dir: str | Path | None = None,
                     snapshot_every: int = 0,
                     progress=None) -> SolveReport:
    """Fit a TF for vol_o so its renders match renders of (vol_r, tf_r).

    Each iteration samples fresh random orbit cameras, renders the
    reference, and averages TF gradients of the image loss. The reported
    solution is the iterate with the lowest sampled loss. Deterministic
    for a fixed seed.
    """
    cfg = cfg or DiffOptConfig()
    rc = diff_render_config(rc, INVERSION_EPS)
    if rc.step_size is None and vol_r.spacing != vol_o.spacing:
        # pin one step so reference and optimized renders march identically
        rc = diff_render_config(
            RenderConfig(step_size=0.25 * min(min(vol_r.spacing), min(vol_o.spacing))),
            INVERSION_EPS)

    center = (vol_r.box_size / 2.0 + vol_o.box_size / 2.0) / 2.0
    radius = cfg.radius_scale * max(float(np.linalg.norm(vol_r.box_size)) / 2.0,
                                    float(np.linalg.norm(vol_o.box_size)) / 2.0)
    rng = np.random.default_rng(cfg.seed)

    x = tf_init.entries.reshape(-1).copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    history: list[float] = []
    best_loss = math.inf
    best_x = x.copy()
    clamped_any = False

    snap_dir = Path(snapshot_dir) if snapshot_dir is not None else None
    if snap_dir is not None:
        snap_dir.mkdir(parents=True, exist_ok=True)

    for it in range(1, cfg.iterations + 1):
        tf_cur = TransferFunction.from_linear(x, tf_init.n_t)
        mean_loss = 0.0
        g = np.zeros_like(x)
        for _ in range(cfg.cameras_per_iter):
            cam = sample_orbit_camera(rng, center, radius, cfg.width, cfg.height)
            target = render(vol_r, tf_r, cam, rc)
            lv, gv = loss_and_grad(vol_o, tf_cur, target, cam, rc, cfg.loss)
            mean_loss += lv / cfg.cameras_per_iter
            g += gv / cfg.cameras_per_iter
        history.append(mean_loss)
        if mean_loss < best_loss:
            best_loss = mean_loss
            best_x = x.copy()

        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        mh = m / (1.0 - cfg.beta1 ** it)
        vh = v / (1.0 - cfg.beta2 ** it)
        proposal = x - cfg.lr * mh / (np.sqrt(vh) + cfg.eps)
        x = np.clip(proposal, 0.0, 1.0)
        clamped_any = clamped_any or bool(np.any(proposal != x))
        if not np.all(np.isfinite(x)):
            raise NonFinite("TF iterate became non-finite")

        if snap_dir is not None and snapshot_every > 0 and it % snapshot_every == 0:
            from .io import save_tf
            save_tf(TransferFunction.from_linear(x, tf_init.n_t), snap_dir / f"tf_{it:06d}.json")
        if progress is not None:
            progress(it / cfg.iterations)

    return SolveReport(
        solution=TransferFunction.from_linear(best_x, tf_init.n_t),
        iterations=cfg.iterations,
        objective=best_loss,
        residual_history=history,
        clamped=clamped_any,
        converged=True,
        solver="diffdvr",
    )


def write_loss_csv(path: str | Path, history: list[float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for i, loss in enumerate(history):
            writer.writerow([i, f"{loss:.10g}"])
