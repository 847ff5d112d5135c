"""HTTP service exposing volumes, TFs, solvers, renders and metrics.

Artifacts live in a data directory that is scanned at startup: files
named `*.tf.json` register as transfer functions, JSON volume headers
register as volumes. Optimizations run as background jobs (one per
session at a time) and write their result TF through the same writer the
CLI uses, so both front ends produce byte-identical artifacts.
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Response

from . import io
from .driver import SOLVER_NAMES, camera_from_spec, render_config_from_spec, run_optimize
from .metrics import MetricReport, residual_field
from .render import render, render_residual
from .volume import DimsMismatch, ScalarVolume, TransferFunction, histogram

MAX_HTTP_RENDER = 1024


@dataclass
class Session:
    id: str
    volumes: dict = field(default_factory=dict)
    tfs: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    camera: dict | None = None
    seed: int = 0
    busy: bool = False


@dataclass
class Job:
    id: str
    session: str
    state: str = "queued"          # queued -> running -> done | failed
    progress: float = 0.0
    result: dict | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {"id": self.id, "state": self.state, "progress": self.progress,
                "result": self.result, "error": self.error}


class ServiceState:
    def __init__(self, data_dir: Path):
        self.data_dir = data_dir
        self.lock = threading.Lock()
        self.sessions: dict[str, Session] = {}
        self.jobs: dict[str, Job] = {}

    def session(self, name: str | None) -> Session:
        key = name or "default"
        with self.lock:
            if key not in self.sessions:
                self.sessions[key] = self._fresh_session(key)
            return self.sessions[key]

    def _fresh_session(self, key: str) -> Session:
        ses = Session(id=key)
        default = self.sessions.get("default")
        if default is not None:
            ses.volumes.update(default.volumes)
            ses.tfs.update(default.tfs)
        return ses

    def scan_data_dir(self):
        ses = Session(id="default")
        for path in sorted(self.data_dir.glob("*.json")):
            try:
                payload = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                continue
            if not isinstance(payload, dict):
                continue
            if "entries" in payload:
                name = path.name.removesuffix(".json").removesuffix(".tf")
                try:
                    ses.tfs[name] = io.load_tf(path)
                except (io.FormatError, ValueError):
                    continue
            elif "dims" in payload and "data_file" in payload:
                name = path.name.removesuffix(".json").removesuffix(".vol")
                try:
                    ses.volumes[name] = io.load_volume(path)
                except (io.FormatError, OSError, ValueError):
                    continue
        self.sessions["default"] = ses


def _bad_request(message: str) -> HTTPException:
    return HTTPException(status_code=400, detail=message)


def _lookup(mapping: dict, name: str, kind: str):
    if name not in mapping:
        raise HTTPException(status_code=404, detail=f"unknown {kind} {name!r}")
    return mapping[name]


def create_app(data_dir: str | Path = ".", frontend_dir: str | Path | None = None) -> FastAPI:
    state = ServiceState(Path(data_dir))
    state.data_dir.mkdir(parents=True, exist_ok=True)
    state.scan_data_dir()

    app = FastAPI(title="tfopt service")
    app.state.service = state

    @app.get("/api/volumes")
    def list_volumes(session: str | None = None):
        ses = state.session(session)
        out = []
        for name, vol in sorted(ses.volumes.items()):
            out.append({
                "name": name, "kind": "volume", "dims": list(vol.dims),
                "spacing": list(vol.spacing), "vmin": vol.vmin, "vmax": vol.vmax,
                "missing_count": int(vol.missing_mask.sum()),
            })
        for name, res in sorted(ses.residuals.items()):
            out.append({
                "name": name, "kind": "residual", "dims": list(res.dims),
                "spacing": list(res.spacing), "vmin": 0.0,
                "vmax": float(res.values.max()) if res.values.size else 0.0,
                "missing_count": int(res.missing.sum()),
            })
        return {"volumes": out}

    @app.post("/api/volumes")
    def upload_volume(payload: dict = Body(...)):
        name = payload.get("name")
        if not name or not isinstance(name, str):
            raise _bad_request("volume upload needs a 'name'")
        try:
            dims = tuple(int(d) for d in payload["dims"])
            spacing = tuple(float(s) for s in payload.get("spacing", (1.0, 1.0, 1.0)))
            raw = base64.b64decode(payload["data_b64"], validate=True)
            data = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            vol = ScalarVolume(dims=dims, spacing=spacing, data=data)
        except (KeyError, TypeError, ValueError, binascii.Error) as exc:
            raise _bad_request(f"invalid volume payload: {exc}") from exc
        ses = state.session(payload.get("session"))
        ses.volumes[name] = vol
        io.save_volume(vol, state.data_dir / f"{name}.vol.json")
        return {"name": name, "dims": list(vol.dims), "vmin": vol.vmin, "vmax": vol.vmax}

    @app.get("/api/tf/{name}")
    def get_tf(name: str, session: str | None = None):
        tf = _lookup(state.session(session).tfs, name, "transfer function")
        return {"name": name, "n_t": tf.n_t, "entries": tf.entries.tolist()}

    @app.put("/api/tf/{name}")
    def put_tf(name: str, payload: dict = Body(...), session: str | None = None):
        try:
            tf = TransferFunction(entries=np.asarray(payload["entries"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise _bad_request(f"invalid TF payload: {exc}") from exc
        ses = state.session(session)
        ses.tfs[name] = tf
        io.save_tf(tf, state.data_dir / f"{name}.tf.json")
        return {"name": name, "n_t": tf.n_t, "entries": tf.entries.tolist()}

    @app.get("/api/histogram/{volume}")
    def get_histogram(volume: str, bins: int = 64, session: str | None = None):
        if bins < 1:
            raise _bad_request("bins must be >= 1")
        vol = _lookup(state.session(session).volumes, volume, "volume")
        h = histogram(vol, bins)
        return {"volume": volume, "counts": h.counts.tolist(), "edges": h.edges.tolist()}

    @app.post("/api/render")
    def post_render(payload: dict = Body(...)):
        ses = state.session(payload.get("session"))
        name = payload.get("volume")
        if not name:
            raise _bad_request("render needs a 'volume'")
        cam_spec = payload.get("camera") or {}
        if int(cam_spec.get("width", 512)) > MAX_HTTP_RENDER or \
                int(cam_spec.get("height", 512)) > MAX_HTTP_RENDER:
            raise _bad_request(f"renders over HTTP are capped at {MAX_HTTP_RENDER}px")
        try:
            rc = render_config_from_spec(payload.get("config"))
        except ValueError as exc:
            raise _bad_request(str(exc)) from exc

        if name in ses.volumes:
            vol = ses.volumes[name]
            tf_name = payload.get("tf")
            if not tf_name:
                raise _bad_request("rendering a volume needs a 'tf'")
            tf = _lookup(ses.tfs, tf_name, "transfer function")
            try:
                cam = camera_from_spec(cam_spec, vol.box_size)
                img = render(vol, tf, cam, rc)
            except ValueError as exc:
                raise _bad_request(str(exc)) from exc
        elif name in ses.residuals:
            res = ses.residuals[name]
            tf = ses.tfs[payload["tf"]] if payload.get("tf") else None
            try:
                cam = camera_from_spec(cam_spec, res.to_volume().box_size)
                img = render_residual(res, cam, rc, tf)
            except ValueError as exc:
                raise _bad_request(str(exc)) from exc
        else:
            raise HTTPException(status_code=404, detail=f"unknown volume {name!r}")
        ses.camera = cam_spec or ses.camera
        return Response(content=io.png_bytes(img), media_type="image/png")

    @app.post("/api/residual")
    def post_residual(payload: dict = Body(...)):
        ses = state.session(payload.get("session"))
        try:
            vol_r = _lookup(ses.volumes, payload["ref"], "volume")
            tf_r = _lookup(ses.tfs, payload["ref_tf"], "transfer function")
            vol_o = _lookup(ses.volumes, payload["opt"], "volume")
            tf_o = _lookup(ses.tfs, payload["opt_tf"], "transfer function")
        except KeyError as exc:
            raise _bad_request(f"residual needs field {exc}") from exc
        try:
            res = residual_field(vol_r, tf_r, vol_o, tf_o)
        except DimsMismatch as exc:
            raise _bad_request(str(exc)) from exc
        name = payload.get("out_name") or "residual"
        ses.residuals[name] = res
        io.save_volume(res.to_volume(), state.data_dir / f"{name}.vol.json")
        return {"volume": name, "max_residual": float(res.values.max())}

    @app.post("/api/optimize")
    def post_optimize(payload: dict = Body(...)):
        ses = state.session(payload.get("session"))
        solver = payload.get("solver", "auto")
        if solver not in SOLVER_NAMES and solver != "diffdvr":
            raise _bad_request(f"unknown solver {solver!r}")
        try:
            vol_r = _lookup(ses.volumes, payload["ref"], "volume")
            tf_r = _lookup(ses.tfs, payload["ref_tf"], "transfer function")
            vol_o = _lookup(ses.volumes, payload["opt"], "volume")
        except KeyError as exc:
            raise _bad_request(f"optimize needs field {exc}") from exc
        tf_init = ses.tfs[payload["init_tf"]] if payload.get("init_tf") else None
        params = payload.get("params") or {}
        if not isinstance(params, dict):
            raise _bad_request("params must be an object")
        seed = int(payload.get("seed", 0))
        out_name = payload.get("out_name") or "optimized"

        with state.lock:
            if ses.busy:
                raise HTTPException(status_code=409,
                                    detail="an optimization job is already running")
            ses.busy = True
            job = Job(id=uuid.uuid4().hex[:12], session=ses.id)
            state.jobs[job.id] = job

        def work():
            job.state = "running"
            try:
                rep = run_optimize(vol_r, tf_r, vol_o, solver, params, seed, tf_init,
                                   progress=lambda p: setattr(job, "progress", p))
                artifact = state.data_dir / f"{out_name}.tf.json"
                io.save_tf(rep.solution, artifact)
                ses.tfs[out_name] = rep.solution
                ses.reports[out_name] = rep
                ses.seed = seed
                job.progress = 1.0
                job.result = {"tf": out_name, "artifact": str(artifact),
                              "report": rep.to_dict()}
                job.state = "done"
            except Exception as exc:          # surfaced through the job status
                job.error = f"{type(exc).__name__}: {exc}"
                job.state = "failed"
            finally:
                ses.busy = False

        threading.Thread(target=work, daemon=True).start()
        return {"job": job.id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        if job_id not in state.jobs:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        return state.jobs[job_id].to_dict()

    @app.post("/api/metrics")
    def post_metrics(payload: dict = Body(...)):
        try:
            img_a = io.load_png_bytes(base64.b64decode(payload["image_a"], validate=True))
            img_b = io.load_png_bytes(base64.b64decode(payload["image_b"], validate=True))
        except (KeyError, TypeError, ValueError, binascii.Error, OSError) as exc:
            raise _bad_request(f"invalid image payload: {exc}") from exc
        try:
            return MetricReport.from_images(img_a, img_b).to_dict()
        except ValueError as exc:
            raise _bad_request(str(exc)) from exc

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
