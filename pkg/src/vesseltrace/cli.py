"""Batch command-line front door for the extraction pipeline.

Subcommands compose the library: ``normalize`` -> ``enhance`` -> ``track`` /
``minpath`` -> ``eval``, plus ``phantom`` generation, the ``sweep`` grid
runner, and the HTTP ``serve`` launcher.  Every command reads and writes
files only; outputs are deterministic for identical inputs unless ``--timing``
explicitly adds wall-clock fields.

Exit codes: 0 success, 2 usage error, 3 data error, 4 compute error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from . import minpath as minpath_mod
from . import phantom as phantom_mod
from . import tracker as tracker_mod
from .errors import DataError, VesselTraceError
from .vesselness import PRESETS, FrangiParams, enhance_volume, normalize_vesselness
from .volume import WindowParams, load_nrrd, load_volume, normalize_hu, save_volume

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_COMPUTE = 4


def _vec3(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z triple, got {text!r}")
    return tuple(float(p) for p in parts)


def _ivec3(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected i,j,k triple, got {text!r}")
    return tuple(int(p) for p in parts)


def _load_any_volume(path: str):
    if str(path).endswith((".nhdr", ".nrrd")):
        return load_nrrd(path)
    return load_volume(path)


def _write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _frangi_from_args(args) -> tuple[FrangiParams, str | None]:
    if args.preset:
        if args.preset not in PRESETS:
            raise DataError(
                f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}"
            )
        base = PRESETS[args.preset]
        params = FrangiParams(
            alpha=base.alpha,
            beta=base.beta,
            c=base.c,
            sigma_mm=args.sigma_mm if args.sigma_mm is not None else base.sigma_mm,
            polarity=args.polarity,
        )
        return params, args.preset
    params = FrangiParams(
        alpha=args.alpha,
        beta=args.beta,
        c=args.c,
        sigma_mm=args.sigma_mm if args.sigma_mm is not None else 1.0,
        polarity=args.polarity,
    )
    return params, None


def _tracker_config(args) -> tracker_mod.TrackerConfig:
    return tracker_mod.TrackerConfig(
        step_delta_mm=args.step_mm,
        window_side_mm=args.window_mm,
        correction_interval=args.correction_interval,
        max_turn_deg=args.max_turn_deg,
        cross_section_side_mm=args.cross_section_mm,
        cross_section_resolution_mm=args.cross_section_res_mm,
        min_vesselness=args.min_vesselness,
        max_iterations=args.max_iterations,
    )


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_normalize(args) -> int:
    vol = _load_any_volume(args.input)
    w = WindowParams(
        window_center=args.window_center,
        window_width=args.window_width,
        rescale_intercept=args.rescale_intercept,
        rescale_slope=args.rescale_slope,
    )
    out = normalize_hu(vol, w)
    meta = {
        "window": {
            "center": w.window_center,
            "width": w.window_width,
            "rescale_intercept": w.rescale_intercept,
            "rescale_slope": w.rescale_slope,
        }
    }
    save_volume(out, args.output, meta=meta)
    return EXIT_OK


def cmd_enhance(args) -> int:
    vol = load_volume(args.input)
    params, preset = _frangi_from_args(args)
    vness = normalize_vesselness(enhance_volume(vol, params))
    meta = {
        "filter": {
            "alpha": params.alpha,
            "beta": params.beta,
            "c": params.c,
            "sigma_mm": params.sigma_mm,
            "polarity": params.polarity,
            "preset": preset,
        }
    }
    save_volume(vness, args.output, meta=meta)
    return EXIT_OK


def cmd_track(args) -> int:
    vness = load_volume(args.vesselness)
    intensity = load_volume(args.intensity) if args.intensity else None
    fascia = None
    if args.fascia:
        fascia = tracker_mod.FasciaMask(load_volume(args.fascia))
    if args.direction is not None:
        direction = np.asarray(args.direction, float)
    elif args.seed2 is not None:
        direction = np.asarray(args.seed2, float) - np.asarray(args.seed, float)
    else:
        raise DataError("track needs --direction or --seed2 to orient the seed")
    cfg = _tracker_config(args)
    t0 = time.perf_counter()
    line = tracker_mod.track(vness, intensity, args.seed, direction, fascia, cfg)
    line.elapsed_s = time.perf_counter() - t0
    _write_json(args.output, line.to_dict(include_timing=args.timing))
    return EXIT_OK


def cmd_minpath(args) -> int:
    vness = load_volume(args.vesselness)
    intensity = load_volume(args.intensity)
    params = minpath_mod.SigmoidParams(
        a_s=args.a_s, b_s=args.b_s, epsilon=args.epsilon,
        orientation=args.orientation,
    )
    costs = minpath_mod.build_cost_volume(vness, intensity, params)
    path = minpath_mod.astar(costs, args.start, args.goal)
    line = minpath_mod.refine_path(path, costs, smooth=not args.no_smooth)
    _write_json(args.output, line.to_dict(include_timing=args.timing))
    return EXIT_OK


def cmd_eval(args) -> int:
    lm = metrics_mod.load_landmarks(args.landmarks)
    doc = json.loads(Path(args.path).read_text(encoding="utf-8"))
    line = tracker_mod.Centerline.from_dict(doc)
    m = metrics_mod.evaluate(lm, line)
    rows = [
        "landmarks,kind,num_landmarks,mean_distance_mm,hausdorff_mm",
        f"{lm.name},{lm.kind},{len(lm.points)},{m.mean_distance_mm!r},{m.hausdorff_mm!r}",
    ]
    Path(args.output).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_phantom(args) -> int:
    spec_doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = phantom_mod.parse_tube_spec(spec_doc)
    vol, sampler = phantom_mod.generate(spec, args.dims, args.spacing,
                                        origin=args.origin)
    save_volume(vol, args.output)
    if args.landmarks:
        pts = sampler.landmarks(step_mm=args.landmark_step)
        lm = metrics_mod.LandmarkSet(args.landmark_name, pts, args.landmark_kind)
        metrics_mod.save_landmarks(lm, args.landmarks)
    return EXIT_OK


def cmd_sweep(args) -> int:
    vness = load_volume(args.vesselness)
    intensity = load_volume(args.intensity)
    landmarks = metrics_mod.load_landmarks(args.landmarks) if args.landmarks else None
    a_values = args.a_values or list(minpath_mod.SWEEP_A_VALUES)
    b_values = args.b_values or list(minpath_mod.SWEEP_B_VALUES)
    cells = [(a, b) for a in a_values for b in b_values]

    def run(cell):
        a, b = cell
        return minpath_mod.run_sweep_cell(
            vness, intensity, args.start, args.goal, a, b,
            epsilon=args.epsilon, orientation=args.orientation,
            landmarks=landmarks,
        )

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(c) for c in cells]

    lines = ["a_s,b_s,mean_euclidean_mm,hausdorff_mm,elapsed_s,expanded_nodes"]
    for row in rows:
        lines.append(
            f"{row['a_s']!r},{row['b_s']!r},{row['mean_euclidean_mm']!r},"
            f"{row['hausdorff_mm']!r},{row['elapsed_s']!r},{row['expanded_nodes']}"
        )
    Path(args.output).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vesseltrace",
        description="Vessel centerline extraction from 3-D scalar volumes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", help="window raw CT values into [0, 1]")
    p.add_argument("--input", required=True, help="volume container (.json) or NRRD header")
    p.add_argument("--output", required=True, help="output volume base path")
    p.add_argument("--window-center", type=float, default=60.0,
                   help="window center, HU (default from the CTA protocol)")
    p.add_argument("--window-width", type=float, default=400.0,
                   help="window width, HU")
    p.add_argument("--rescale-intercept", type=float, default=-1024.0,
                   help="stored-value to HU intercept")
    p.add_argument("--rescale-slope", type=float, default=1.0,
                   help="stored-value to HU slope")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("enhance", help="vessel-enhance a normalized volume")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="named parameterization (subcutaneous: alpha=0.5 beta=10 "
                        "c=500; intramuscular: alpha=0.5 beta=0.5 c=100)")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--c", type=float, default=500.0)
    p.add_argument("--sigma-mm", type=float, default=None,
                   help="Gaussian scale (default 1.0 mm)")
    p.add_argument("--polarity", choices=["bright-on-dark", "dark-on-bright"],
                   default="bright-on-dark")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("track", help="trace a centerline from a seed")
    p.add_argument("--vesselness", required=True,
                   help="normalized vesselness volume (enhance output)")
    p.add_argument("--intensity", default=None,
                   help="normalized intensity volume (same geometry)")
    p.add_argument("--seed", type=_vec3, required=True, help="seed point, mm x,y,z")
    p.add_argument("--direction", type=_vec3, default=None,
                   help="initial direction dx,dy,dz")
    p.add_argument("--seed2", type=_vec3, default=None,
                   help="second landmark; orients the seed when no --direction")
    p.add_argument("--fascia", default=None, help="binary fascia mask volume")
    p.add_argument("--step-mm", type=float, default=1.0)
    p.add_argument("--window-mm", type=float, default=4.0)
    p.add_argument("--correction-interval", type=int, default=3)
    p.add_argument("--max-turn-deg", type=float, default=60.0)
    p.add_argument("--cross-section-mm", type=float, default=4.0)
    p.add_argument("--cross-section-res-mm", type=float, default=0.25)
    p.add_argument("--min-vesselness", type=float, default=0.01)
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--timing", action="store_true",
                   help="add wall-clock elapsed_ms to the output JSON")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("minpath", help="A* minimum-cost path between two voxels")
    p.add_argument("--vesselness", required=True)
    p.add_argument("--intensity", required=True)
    p.add_argument("--start", type=_ivec3, required=True, help="voxel index i,j,k")
    p.add_argument("--goal", type=_ivec3, required=True, help="voxel index i,j,k")
    p.add_argument("--a-s", type=float, default=45.0, help="sigmoid steepness")
    p.add_argument("--b-s", type=float, default=0.60, help="sigmoid threshold")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--orientation", choices=["bright-is-cheap", "bright-is-costly"],
                   default="bright-is-cheap")
    p.add_argument("--no-smooth", action="store_true")
    p.add_argument("--timing", action="store_true")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_minpath)

    p = sub.add_parser("eval", help="landmark distances to an extracted path")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--path", required=True, help="centerline JSON")
    p.add_argument("--output", required=True, help="metrics CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("phantom", help="generate a synthetic tube volume")
    p.add_argument("--spec", required=True, help="tube spec JSON")
    p.add_argument("--dims", type=_ivec3, required=True)
    p.add_argument("--spacing", type=_vec3, required=True)
    p.add_argument("--origin", type=_vec3, default=(0.0, 0.0, 0.0))
    p.add_argument("--output", required=True, help="output volume base path")
    p.add_argument("--landmarks", default=None,
                   help="write axis landmarks to this JSON file")
    p.add_argument("--landmark-step", type=float, default=2.0)
    p.add_argument("--landmark-name", default="phantom-axis")
    p.add_argument("--landmark-kind", choices=["subcutaneous", "intramuscular"],
                   default="subcutaneous")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("sweep", help="sigmoid parameter sweep over the (a_s, b_s) grid")
    p.add_argument("--vesselness", required=True)
    p.add_argument("--intensity", required=True)
    p.add_argument("--start", type=_ivec3, required=True)
    p.add_argument("--goal", type=_ivec3, required=True)
    p.add_argument("--landmarks", default=None)
    p.add_argument("--a-values", type=float, nargs="*", default=None,
                   help="override the default 7.5..45 step 7.5 grid")
    p.add_argument("--b-values", type=float, nargs="*", default=None,
                   help="override the default 0.50..0.80 step 0.05 grid")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--orientation", choices=["bright-is-cheap", "bright-is-costly"],
                   default="bright-is-cheap")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", required=True, help="sweep CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static-dir", default=None,
                   help="directory of UI assets to serve at /ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except VesselTraceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_COMPUTE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
