"""Command-line front end.

Subcommands: gen (synthetic volumes, correlation fields, TF presets),
optimize, render, residual, metrics, serve. Exit codes: 0 success,
2 invalid input, 3 solver failure; failures print a machine-readable
error object to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .assembly import EmptySystem
from .driver import SOLVER_NAMES, camera_from_spec, render_config_from_spec, run_optimize
from .fields import (ConstantSeries, SYNTHETIC_KINDS, SyntheticSpec, kendall_field,
                     load_ensemble, make_synthetic, pearson_field)
from .diffdvr import write_loss_csv
from .metrics import MetricReport, residual_field
from .render import render, render_residual
from .solvers import NonFinite, SingularSystem
from .volume import DegenerateRange, DimsMismatch, ScalarVolume, TransferFunction

TF_PRESETS = ("gray_ramp", "blue_red", "flat")


def _triple(text: str, cast=int):
    parts = [cast(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated values, got {text!r}")
    return tuple(parts)


def _camera_spec_from_args(args) -> dict:
    spec: dict = {"width": args.width, "height": args.height}
    if args.camera:
        vals = [float(p) for p in args.camera.split(",")]
        if len(vals) not in (2, 3):
            raise ValueError("--camera expects azimuth,elevation[,distance] in degrees")
        spec["azimuth"], spec["elevation"] = vals[0], vals[1]
        if len(vals) == 3:
            spec["distance"] = vals[2]
    if args.fov is not None:
        spec["fov"] = args.fov
    return spec


def _render_config_from_args(args) -> dict:
    spec: dict = {}
    if getattr(args, "step_size", None) is not None:
        spec["step_size"] = args.step_size
    if getattr(args, "background", None) is not None:
        spec["background"] = [float(p) for p in args.background.split(",")]
    if getattr(args, "sigma", None) is not None:
        spec["extinction_scale"] = args.sigma
    return spec


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    out = Path(args.out)
    if args.tf:
        n_t = args.bins or 256
        if args.tf == "gray_ramp":
            tf = TransferFunction.gray_ramp(n_t)
        elif args.tf == "blue_red":
            tf = TransferFunction.blue_red(n_t)
        else:
            tf = TransferFunction.flat(n_t, (0.5, 0.5, 0.5, 0.5))
        io.save_tf(tf, out)
        return 0

    spacing = _triple(args.spacing, float) if args.spacing else (1.0, 1.0, 1.0)
    if args.kind in ("pearson", "kendall"):
        if not args.ensemble:
            raise ValueError(f"--kind {args.kind} requires --ensemble")
        ens = load_ensemble(args.ensemble)
        ref = _triple(args.ref_point, int) if args.ref_point else tuple(
            d // 2 for d in ens.dims)
        field = pearson_field(ens, ref) if args.kind == "pearson" else kendall_field(ens, ref)
        io.save_volume(field, out)
        return 0

    dims = _triple(args.dims, int) if args.dims else (32, 32, 32)
    if args.kind == "random":
        rng = np.random.default_rng(args.seed)
        nx, ny, nz = dims
        vol = ScalarVolume(dims=dims, spacing=spacing,
                           data=rng.uniform(0.0, 1.0, size=nz * ny * nx))
    else:
        base = make_synthetic(SyntheticSpec(kind=args.kind, dims=dims,
                                            inner_fraction=args.inner_fraction))
        vol = ScalarVolume(dims=dims, spacing=spacing, data=base.data)
    io.save_volume(vol, out)
    return 0


def cmd_optimize(args) -> int:
    vol_r = io.load_volume(args.ref)
    tf_r = io.load_tf(args.ref_tf)
    vol_o = io.load_volume(args.opt)
    tf_init = io.load_tf(args.init_tf) if args.init_tf else None
    params = {
        "bins": args.bins, "tol": args.tol, "max_iters": args.max_iters,
        "norm": args.norm, "rho": args.rho, "lr": args.lr, "rate": args.rate,
        "step": args.step, "tikhonov": args.tikhonov,
        "iterations": args.iterations, "cameras": args.cameras,
        "width": args.width, "height": args.height, "loss": args.loss,
        "step_size": args.step_size,
    }
    rep = run_optimize(vol_r, tf_r, vol_o, args.solver, params, args.seed, tf_init)
    io.save_tf(rep.solution, args.out_tf)
    if args.report:
        Path(args.report).write_text(rep.to_json(indent=2) + "\n")
    if args.loss_csv:
        write_loss_csv(args.loss_csv, rep.residual_history)
    return 0


def cmd_render(args) -> int:
    vol = io.load_volume(args.volume)
    tf = io.load_tf(args.tf)
    cam = camera_from_spec(_camera_spec_from_args(args), vol.box_size)
    rc = render_config_from_spec(_render_config_from_args(args))
    img = render(vol, tf, cam, rc)
    io.save_png(img, args.out)
    return 0


def cmd_residual(args) -> int:
    vol_r = io.load_volume(args.ref)
    tf_r = io.load_tf(args.ref_tf)
    vol_o = io.load_volume(args.opt)
    tf_o = io.load_tf(args.opt_tf)
    res = residual_field(vol_r, tf_r, vol_o, tf_o)
    if args.out:
        io.save_volume(res.to_volume(), args.out)
    if args.render:
        cam = camera_from_spec(_camera_spec_from_args(args), res.to_volume().box_size)
        rc = render_config_from_spec(_render_config_from_args(args))
        rtf = io.load_tf(args.residual_tf) if args.residual_tf else None
        io.save_png(render_residual(res, cam, rc, rtf), args.render)
    if not args.out and not args.render:
        raise ValueError("residual needs --out and/or --render")
    return 0


def cmd_metrics(args) -> int:
    img_a = io.load_png(args.image_a)
    img_b = io.load_png(args.image_b)
    report = MetricReport.from_images(img_a, img_b)
    text = report.to_json(indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    data_dir = args.data_dir or os.environ.get("TFOPT_DATA_DIR", ".")
    app = create_app(data_dir, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_camera_flags(p: argparse.ArgumentParser):
    p.add_argument("--camera", help="azimuth,elevation[,distance] in degrees")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--fov", type=float, help="vertical field of view in degrees")
    p.add_argument("--step-size", dest="step_size", type=float)
    p.add_argument("--background", help="r,g,b,a in [0,1]")
    p.add_argument("--sigma", type=float, help="extinction scale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfopt",
                                     description="Transfer-function optimization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic volumes, fields, or TF presets")
    p.add_argument("--kind", choices=SYNTHETIC_KINDS + ("random", "pearson", "kendall"),
                   default="ramp_x")
    p.add_argument("--tf", choices=TF_PRESETS, help="write a TF preset instead of a volume")
    p.add_argument("--dims", help="nx,ny,nz (default 32,32,32)")
    p.add_argument("--spacing", help="sx,sy,sz (default 1,1,1)")
    p.add_argument("--inner-fraction", dest="inner_fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bins", type=int, help="TF entries for --tf presets")
    p.add_argument("--ensemble", help="ensemble manifest for correlation fields")
    p.add_argument("--ref-point", dest="ref_point", help="x,y,z voxel index")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("optimize", help="fit a TF for one volume against a reference")
    p.add_argument("--ref", required=True, help="reference volume header")
    p.add_argument("--ref-tf", dest="ref_tf", required=True)
    p.add_argument("--opt", required=True, help="volume to fit a TF for")
    p.add_argument("--solver", choices=sorted(SOLVER_NAMES) + ["diffdvr"], default="auto")
    p.add_argument("--bins", type=int, help="TF entries of the result (default: like ref TF)")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--norm", choices=["l2", "l1"])
    p.add_argument("--rho", type=float, help="ADMM penalty")
    p.add_argument("--step", choices=["adam", "constant"])
    p.add_argument("--lr", type=float)
    p.add_argument("--rate", type=float, help="constant step size")
    p.add_argument("--tikhonov", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-tf", dest="init_tf", help="diffdvr starting TF")
    p.add_argument("--iterations", type=int, help="diffdvr iterations")
    p.add_argument("--cameras", type=int, help="diffdvr cameras per iteration")
    p.add_argument("--width", type=int, help="diffdvr image width")
    p.add_argument("--height", type=int, help="diffdvr image height")
    p.add_argument("--loss", choices=["l2", "l1"], help="diffdvr image loss")
    p.add_argument("--step-size", dest="step_size", type=float, help="diffdvr ray step")
    p.add_argument("--out-tf", dest="out_tf", required=True)
    p.add_argument("--report", help="write the solve report JSON here")
    p.add_argument("--loss-csv", dest="loss_csv", help="write per-iteration losses as CSV")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("render", help="render a volume to PNG")
    p.add_argument("--volume", required=True)
    p.add_argument("--tf", required=True)
    _add_camera_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("residual", help="voxel-space residual between two preshaded members")
    p.add_argument("--ref", required=True)
    p.add_argument("--ref-tf", dest="ref_tf", required=True)
    p.add_argument("--opt", required=True)
    p.add_argument("--opt-tf", dest="opt_tf", required=True)
    p.add_argument("--out", help="write the residual volume here")
    p.add_argument("--render", help="render the residual to this PNG")
    p.add_argument("--residual-tf", dest="residual_tf")
    _add_camera_flags(p)
    p.set_defaults(func=cmd_residual)

    p = sub.add_parser("metrics", help="image metrics between two PNGs")
    p.add_argument("--image-a", dest="image_a", required=True)
    p.add_argument("--image-b", dest="image_b", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", dest="data_dir",
                   help="artifact directory (default: $TFOPT_DATA_DIR or .)")
    p.add_argument("--frontend", help="static frontend directory to mount at /")
    p.set_defaults(func=cmd_serve)
    return parser


def _print_error(exc: BaseException) -> None:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(payload), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SingularSystem, NonFinite) as exc:
        _print_error(exc)
        return 3
    except (FileNotFoundError, IsADirectoryError, PermissionError, io.FormatError,
            DimsMismatch, DegenerateRange, EmptySystem, ConstantSeries, ValueError,
            KeyError, json.JSONDecodeError) as exc:
        _print_error(exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
