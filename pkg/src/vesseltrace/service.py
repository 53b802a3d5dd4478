"""Thin HTTP facade over the extraction pipeline.

Sessions hold immutable volumes in memory; extraction runs execute on a
small worker pool and are polled by id.  For identical inputs and
parameters, results are identical to the CLI's output documents: both paths
share the same library calls and the same float32 volume representation.

Endpoints
---------
POST /volumes {"path": ...}             -> session id + geometry metadata
GET  /volumes/{sid}                     -> geometry metadata
GET  /volumes/{sid}/slice?axis&index&wc&ww&ri&rs -> 8-bit grayscale PNG
POST /volumes/{sid}/seeds {landmarks}   -> seed set id (400 malformed, 422 out of bounds)
GET  /volumes/{sid}/seeds/{seed_id}     -> landmark JSON as stored
POST /runs {"session_id", "mode", "params"} -> run id
GET  /runs/{rid}                        -> {"status", "result", "error"}

Sessions are memory-resident and lost on restart.
"""

from __future__ import annotations

import io
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import Response

from . import minpath as minpath_mod
from . import tracker as tracker_mod
from .errors import VesselTraceError
from .metrics import LandmarkSet
from .vesselness import PRESETS, FrangiParams, enhance_volume, normalize_vesselness
from .volume import (
    NORMALIZED_UNIT,
    RAW_STORED,
    Volume,
    WindowParams,
    apply_window,
    in_bounds_mm,
    load_nrrd,
    load_volume,
    normalize_hu,
)

_SLICE_AXES = {"x": 2, "y": 1, "z": 0}


@dataclass
class Session:
    id: str
    volume: Volume
    seed_sets: dict[str, dict] = field(default_factory=dict)
    derived: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    id: str
    session_id: str
    status: str = "pending"  # pending | done | error
    result: dict | None = None
    error: str | None = None


class Registry:
    """All shared mutable service state, guarded by one lock."""

    def __init__(self, workers: int = 2):
        self.lock = threading.Lock()
        self.sessions: dict[str, Session] = {}
        self.runs: dict[str, RunRecord] = {}
        self.executor = ThreadPoolExecutor(max_workers=workers)
        self._counter = 0

    def next_id(self, prefix: str) -> str:
        with self.lock:
            self._counter += 1
            return f"{prefix}-{self._counter}"

    def session(self, sid: str) -> Session:
        with self.lock:
            sess = self.sessions.get(sid)
        if sess is None:
            raise HTTPException(404, f"unknown session {sid}")
        return sess


def _volume_meta(sid: str, vol: Volume) -> dict:
    return {
        "session_id": sid,
        "dims": list(vol.dims),
        "spacing_mm": list(vol.spacing),
        "origin_mm": list(vol.origin),
        "value_kind": vol.value_kind,
    }


def _default_window(vol: Volume) -> WindowParams:
    if vol.value_kind == RAW_STORED:
        return WindowParams()
    return WindowParams(0.5, 1.0, 0.0, 1.0)


def render_slice(vol: Volume, axis: str, index: int, w: WindowParams) -> bytes:
    """Pure function of (volume, axis, index, window) -> grayscale PNG bytes."""
    from PIL import Image

    arr_axis = _SLICE_AXES[axis]
    # data is (z, y, x); slicing keeps (row, col) = (y, x) / (z, x) / (z, y)
    if axis == "z":
        sl = vol.data[index, :, :]
    elif axis == "y":
        sl = vol.data[:, index, :]
    else:
        sl = vol.data[:, :, index]
    unit = apply_window(sl, w)
    img8 = np.round(unit * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img8, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _normalized_volume(sess: Session, params: dict) -> Volume:
    """The normalized-unit working volume for a run, cached per window key."""
    vol = sess.volume
    if vol.value_kind == NORMALIZED_UNIT:
        return vol
    if vol.value_kind != RAW_STORED:
        raise VesselTraceError(
            f"cannot run extraction on a {vol.value_kind} session volume"
        )
    w = params.get("window") or {}
    wp = WindowParams(
        window_center=float(w.get("center", 60.0)),
        window_width=float(w.get("width", 400.0)),
        rescale_intercept=float(w.get("intercept", -1024.0)),
        rescale_slope=float(w.get("slope", 1.0)),
    )
    key = ("norm", wp.window_center, wp.window_width,
           wp.rescale_intercept, wp.rescale_slope)
    # concurrent workers may race to fill the cache; both compute the same
    # deterministic volume, so the last write is harmless
    if key not in sess.derived:
        sess.derived[key] = normalize_hu(vol, wp)
    return sess.derived[key]


def _frangi_from_params(params: dict, default_preset: str) -> FrangiParams:
    f = params.get("frangi") or {}
    if "preset" in f:
        preset = f["preset"]
    elif not f:
        preset = default_preset
    else:
        preset = None  # explicit alpha/beta/c given
    if preset:
        if preset not in PRESETS:
            raise HTTPException(400, f"unknown preset {preset!r}")
        base = PRESETS[preset]
        return FrangiParams(
            alpha=float(f.get("alpha", base.alpha)),
            beta=float(f.get("beta", base.beta)),
            c=float(f.get("c", base.c)),
            sigma_mm=float(f.get("sigma_mm", base.sigma_mm)),
            polarity=f.get("polarity", base.polarity),
        )
    return FrangiParams(
        alpha=float(f.get("alpha", 0.5)),
        beta=float(f.get("beta", 10.0)),
        c=float(f.get("c", 500.0)),
        sigma_mm=float(f.get("sigma_mm", 1.0)),
        polarity=f.get("polarity", "bright-on-dark"),
    )


def _vesselness_volume(sess: Session, norm: Volume, fp: FrangiParams) -> Volume:
    key = ("vness", fp.alpha, fp.beta, fp.c, fp.sigma_mm, fp.polarity,
           id(norm))
    if key not in sess.derived:
        sess.derived[key] = normalize_vesselness(enhance_volume(norm, fp))
    return sess.derived[key]


def _execute_track(sess: Session, params: dict) -> dict:
    norm = _normalized_volume(sess, params)
    fp = _frangi_from_params(params, "subcutaneous")
    vness = _vesselness_volume(sess, norm, fp)

    seed = params.get("seed_mm")
    if seed is None:
        raise VesselTraceError("track run needs seed_mm")
    if params.get("direction") is not None:
        direction = np.asarray(params["direction"], float)
    elif params.get("seed2_mm") is not None:
        direction = np.asarray(params["seed2_mm"], float) - np.asarray(seed, float)
    else:
        raise VesselTraceError("track run needs direction or seed2_mm")

    t = params.get("tracker") or {}
    cfg = tracker_mod.TrackerConfig(
        step_delta_mm=float(t.get("step_delta_mm", 1.0)),
        window_side_mm=float(t.get("window_side_mm", 4.0)),
        correction_interval=int(t.get("correction_interval", 3)),
        max_turn_deg=float(t.get("max_turn_deg", 60.0)),
        cross_section_side_mm=float(t.get("cross_section_side_mm", 4.0)),
        cross_section_resolution_mm=float(t.get("cross_section_resolution_mm", 0.25)),
        min_vesselness=float(t.get("min_vesselness", 0.01)),
        max_iterations=int(t.get("max_iterations", 500)),
    )
    fascia = None
    if params.get("fascia_path"):
        fascia = tracker_mod.FasciaMask(load_volume(params["fascia_path"]))
    line = tracker_mod.track(vness, norm, seed, direction, fascia, cfg)
    return line.to_dict()


def _execute_minpath(sess: Session, params: dict) -> dict:
    norm = _normalized_volume(sess, params)
    fp = _frangi_from_params(params, "intramuscular")
    vness = _vesselness_volume(sess, norm, fp)

    s = params.get("sigmoid") or {}
    sp = minpath_mod.SigmoidParams(
        a_s=float(s.get("a_s", 45.0)),
        b_s=float(s.get("b_s", 0.60)),
        epsilon=float(s.get("epsilon", 1e-3)),
        orientation=s.get("orientation", "bright-is-cheap"),
    )
    costs = minpath_mod.build_cost_volume(vness, norm, sp)

    def voxel_of(key_idx, key_mm):
        if params.get(key_idx) is not None:
            return tuple(int(v) for v in params[key_idx])
        if params.get(key_mm) is not None:
            idx = np.round(costs.mm_to_index(params[key_mm])).astype(int)
            return tuple(int(v) for v in idx)
        raise VesselTraceError(f"minpath run needs {key_idx} or {key_mm}")

    start = voxel_of("start_idx", "start_mm")
    goal = voxel_of("goal_idx", "goal_mm")
    path = minpath_mod.astar(costs, start, goal)
    line = minpath_mod.refine_path(path, costs, smooth=not params.get("no_smooth"))
    return line.to_dict()


_EXECUTORS = {"track": _execute_track, "minpath": _execute_minpath}


def create_app(static_dir=None, workers: int = 2) -> FastAPI:
    app = FastAPI(title="vesseltrace service")
    reg = Registry(workers=workers)
    app.state.registry = reg

    @app.post("/volumes")
    def post_volume(payload: dict = Body(...)):
        path = payload.get("path")
        if not path:
            raise HTTPException(400, "request body needs a 'path' field")
        try:
            if str(path).endswith((".nhdr", ".nrrd")):
                vol = load_nrrd(path)
            else:
                vol = load_volume(path)
        except VesselTraceError as e:
            raise HTTPException(400, str(e)) from e
        sid = reg.next_id("vol")
        with reg.lock:
            reg.sessions[sid] = Session(sid, vol)
        return _volume_meta(sid, vol)

    @app.get("/volumes/{sid}")
    def get_volume(sid: str):
        sess = reg.session(sid)
        return _volume_meta(sid, sess.volume)

    @app.get("/volumes/{sid}/slice")
    def get_slice(sid: str, axis: str = "z", index: int = 0,
                  wc: float | None = None, ww: float | None = None,
                  ri: float | None = None, rs: float | None = None):
        sess = reg.session(sid)
        vol = sess.volume
        if axis not in _SLICE_AXES:
            raise HTTPException(422, f"axis must be x, y, or z, got {axis!r}")
        n = vol.dims[{"x": 0, "y": 1, "z": 2}[axis]]
        if not (0 <= index < n):
            raise HTTPException(422, f"slice index {index} out of range [0, {n})")
        base = _default_window(vol)
        w = WindowParams(
            window_center=wc if wc is not None else base.window_center,
            window_width=ww if ww is not None else base.window_width,
            rescale_intercept=ri if ri is not None else base.rescale_intercept,
            rescale_slope=rs if rs is not None else base.rescale_slope,
        )
        png = render_slice(vol, axis, index, w)
        return Response(content=png, media_type="image/png")

    @app.post("/volumes/{sid}/seeds")
    def post_seeds(sid: str, payload: dict = Body(...)):
        sess = reg.session(sid)
        try:
            lm = LandmarkSet.from_dict(payload)
        except VesselTraceError as e:
            raise HTTPException(400, str(e)) from e
        if not in_bounds_mm(sess.volume, lm.points).all():
            raise HTTPException(422, "seed point outside the volume")
        seed_id = reg.next_id("seeds")
        with reg.lock:
            sess.seed_sets[seed_id] = lm.to_dict()
        return {"seed_set_id": seed_id}

    @app.get("/volumes/{sid}/seeds/{seed_id}")
    def get_seeds(sid: str, seed_id: str):
        sess = reg.session(sid)
        with reg.lock:
            doc = sess.seed_sets.get(seed_id)
        if doc is None:
            raise HTTPException(404, f"unknown seed set {seed_id}")
        return doc

    @app.post("/runs")
    def post_run(payload: dict = Body(...)):
        sid = payload.get("session_id")
        mode = payload.get("mode")
        params = payload.get("params") or {}
        sess = reg.session(sid)
        if mode not in _EXECUTORS:
            raise HTTPException(400, f"mode must be track or minpath, got {mode!r}")
        rid = reg.next_id("run")
        record = RunRecord(rid, sid)
        with reg.lock:
            reg.runs[rid] = record

        def work():
            try:
                result = _EXECUTORS[mode](sess, params)
            except (VesselTraceError, HTTPException) as e:
                detail = e.detail if isinstance(e, HTTPException) else str(e)
                with reg.lock:
                    record.status = "error"
                    record.error = str(detail)
            else:
                with reg.lock:
                    record.status = "done"
                    record.result = result

        reg.executor.submit(work)
        return {"run_id": rid}

    @app.get("/runs/{rid}")
    def get_run(rid: str):
        with reg.lock:
            record = reg.runs.get(rid)
            if record is None:
                raise HTTPException(404, f"unknown run {rid}")
            return {
                "status": record.status,
                "result": record.result,
                "error": record.error,
            }

    if static_dir:
        static_path = Path(static_dir)
        if static_path.is_dir():
            from fastapi.staticfiles import StaticFiles

            app.mount("/ui", StaticFiles(directory=str(static_path), html=True),
                      name="ui")

    return app
