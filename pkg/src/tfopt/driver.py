"""Shared request plumbing for the CLI and the HTTP service.

Both front ends funnel their inputs through the same spec parsing and the
same optimize entry point, so identical inputs and seeds produce
identical artifacts no matter which door they came through.
"""

from __future__ import annotations

import math

import numpy as np

from .diffdvr import DiffOptConfig, optimize_diffdvr
from .render import Camera, RenderConfig
from .solvers import AdamStep, ConstantStep, SolveReport, SolverConfig, optimize_voxel
from .volume import ScalarVolume, TransferFunction

SOLVER_NAMES = {
    "normal": "normal_direct",
    "cgls": "cgls",
    "gd": "grad_desc",
    "admm": "admm_qp",
    "auto": "auto",
}
# distance (in bounding-sphere radii) at which a 45 degree fov sees the whole box
DEFAULT_VIEW_DISTANCE = 2.7


def _vec3(value, fallback) -> tuple[float, float, float]:
    if value is None:
        value = fallback
    x, y, z = (float(v) for v in value)
    return (x, y, z)


def camera_from_spec(spec: dict | None, box_size) -> Camera:
    """Build a camera from a JSON-style dict.

    Explicit `eye`/`look_at` win; otherwise an orbit around the volume
    center from `azimuth`/`elevation` (degrees) and `distance` (world
    units, defaulting to a distance that frames the whole box).
    """
    spec = dict(spec or {})
    box = np.asarray(box_size, dtype=np.float64)
    width = int(spec.get("width", 512))
    height = int(spec.get("height", 512))
    fov = math.radians(float(spec.get("fov", 45.0)))
    if "eye" in spec:
        return Camera(
            eye=_vec3(spec["eye"], None),
            look_at=_vec3(spec.get("look_at"), box / 2.0),
            up=_vec3(spec.get("up"), (0.0, 0.0, 1.0)),
            fov=fov, width=width, height=height,
        )
    center = _vec3(spec.get("center"), box / 2.0)
    radius = float(np.linalg.norm(box)) / 2.0
    distance = float(spec.get("distance", DEFAULT_VIEW_DISTANCE * max(radius, 1e-9)))
    return Camera.orbit(
        azimuth=math.radians(float(spec.get("azimuth", 45.0))),
        elevation=math.radians(float(spec.get("elevation", 30.0))),
        distance=distance, center=center, fov=fov, width=width, height=height,
    )


def render_config_from_spec(spec: dict | None) -> RenderConfig:
    spec = dict(spec or {})
    kw = {}
    if spec.get("step_size") is not None:
        kw["step_size"] = float(spec["step_size"])
    if spec.get("background") is not None:
        bg = tuple(float(v) for v in spec["background"])
        if len(bg) != 4:
            raise ValueError("background must be [r, g, b, a]")
        kw["background"] = bg
    if spec.get("early_termination") is not None:
        kw["early_termination"] = bool(spec["early_termination"])
    if spec.get("early_termination_alpha") is not None:
        kw["early_termination_alpha"] = float(spec["early_termination_alpha"])
    if spec.get("max_samples") is not None:
        kw["max_samples"] = int(spec["max_samples"])
    if spec.get("extinction_scale") is not None:
        kw["extinction_scale"] = float(spec["extinction_scale"])
    return RenderConfig(**kw)


def _step_rule(params: dict):
    if params.get("rate") is not None:
        return ConstantStep(rate=float(params["rate"]))
    if params.get("step") == "constant":
        return ConstantStep()
    kw = {}
    if params.get("lr") is not None:
        kw["lr"] = float(params["lr"])
    return AdamStep(**kw)


def solver_config_from_spec(solver: str, params: dict | None) -> SolverConfig:
    if solver not in SOLVER_NAMES:
        raise ValueError(f"unknown solver {solver!r}; expected one of "
                         f"{sorted(SOLVER_NAMES)} or 'diffdvr'")
    params = dict(params or {})
    kw = {"kind": SOLVER_NAMES[solver], "step": _step_rule(params)}
    if params.get("tol") is not None:
        kw["rel_tolerance"] = float(params["tol"])
    if params.get("max_iters") is not None:
        kw["max_iters"] = int(params["max_iters"])
    if params.get("norm") is not None:
        kw["norm"] = str(params["norm"])
    if params.get("rho") is not None:
        kw["admm_rho"] = float(params["rho"])
    if params.get("tikhonov") is not None:
        kw["tikhonov"] = float(params["tikhonov"])
    return SolverConfig(**kw)


def diff_config_from_spec(params: dict | None, seed: int) -> DiffOptConfig:
    params = dict(params or {})
    kw = {"seed": int(seed)}
    if params.get("iterations") is not None:
        kw["iterations"] = int(params["iterations"])
    if params.get("cameras") is not None:
        kw["cameras_per_iter"] = int(params["cameras"])
    if params.get("width") is not None:
        kw["width"] = int(params["width"])
    if params.get("height") is not None:
        kw["height"] = int(params["height"])
    if params.get("lr") is not None:
        kw["lr"] = float(params["lr"])
    if params.get("loss") is not None:
        kw["loss"] = str(params["loss"])
    return DiffOptConfig(**kw)


def run_optimize(vol_r: ScalarVolume, tf_r: TransferFunction, vol_o: ScalarVolume,
                 solver: str, params: dict | None = None, seed: int = 0,
                 tf_init: TransferFunction | None = None,
                 progress=None) -> SolveReport:
    """One optimization request: voxel-space solvers or the image-space one.

    `params` mirrors the CLI flags (bins, tol, max_iters, norm, rho, lr,
    rate, step, tikhonov; for diffdvr also iterations, cameras, width,
    height, loss, step_size).
    """
    params = dict(params or {})
    n_t = int(params.get("bins") or tf_r.n_t)
    if solver == "diffdvr":
        cfg = diff_config_from_spec(params, seed)
        rc = None
        if params.get("step_size") is not None:
            rc = RenderConfig(step_size=float(params["step_size"]))
        init = tf_init if tf_init is not None else TransferFunction.flat(
            n_t, (0.5, 0.5, 0.5, 0.5))
        return optimize_diffdvr(vol_r, tf_r, vol_o, init, cfg, rc, progress=progress)
    cfg = solver_config_from_spec(solver, params)
    if progress is not None:
        progress(0.0)
    rep = optimize_voxel(vol_o, vol_r, tf_r, n_t, cfg)
    if progress is not None:
        progress(1.0)
    return rep
