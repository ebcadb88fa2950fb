"""Command-line front end for the batch pipelines and the session service.

Subcommands: extract, replay, export, ood, serve, roundtrip. Global flags
set resolution (default 128), fps (default 4), sim scale, and the output
root; defaults can also come from a JSON config file named by the
EYESIM_CONFIG environment variable, and the output root from
EYESIM_OUTPUT_ROOT. Exit codes: 0 success, 1 data error (with a
machine-readable JSON error on stderr), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from .errors import EyesimError
from .geometry import CoordinateMap
from .simulator import Simulator, generate_ood_scenario
from .tools import ToolClass

CONFIG_ENV = "EYESIM_CONFIG"
OUTPUT_ROOT_ENV = "EYESIM_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2


def _load_config() -> dict:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise EyesimError(f"bad config file {path!r}: {exc}") from exc


def _emit_error(exc: Exception):
    print(
        json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
        file=sys.stderr,
    )


def _coord_map(args) -> CoordinateMap:
    return CoordinateMap(args.resolution, args.resolution, args.sim_scale)


def _out_path(args, name: str) -> Path:
    """Resolve an output name against --output-root and create parents."""
    p = Path(name)
    if not p.is_absolute() and args.output_root:
        p = Path(args.output_root) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def build_parser(config: dict | None = None) -> argparse.ArgumentParser:
    cfg = config or {}
    parser = argparse.ArgumentParser(
        prog="eyesim",
        description="Deterministic cataract-surgery scene engine",
    )
    parser.add_argument(
        "--resolution", type=int, default=cfg.get("resolution", 128),
        help="raster resolution in pixels (default 128)",
    )
    parser.add_argument(
        "--fps", type=float, default=cfg.get("fps", 4.0),
        help="frames per second for produced scripts (default 4)",
    )
    parser.add_argument(
        "--sim-scale", type=float, default=cfg.get("sim_scale", 1.0),
        help="simulator units per normalized image half-extent (default 1)",
    )
    parser.add_argument(
        "--output-root",
        default=cfg.get("output_root", os.environ.get(OUTPUT_ROOT_ENV)),
        help="directory for outputs (default: cwd, or EYESIM_OUTPUT_ROOT)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="masks + landmark tracks -> kinematic script")
    p.add_argument("--masks", required=True, help="mask archive directory")
    p.add_argument("--tracks", required=True, help="landmark tracks JSON file")
    p.add_argument("--out", required=True, help="output script file")

    p = sub.add_parser("replay", help="script -> label/sim rasters and graphs")
    p.add_argument("--script", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("export", help="script -> paired 16-frame window dataset")
    p.add_argument("--script", required=True)
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("ood", help="author an out-of-distribution scenario script")
    p.add_argument("--tools", required=True,
                   help="comma-separated tool classes, e.g. keratome,phaco")
    p.add_argument("--angles", required=True,
                   help="comma-separated entry angles in degrees")
    p.add_argument("--primitive", default="approach",
                   choices=("approach", "sweep", "circular"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=48)
    p.add_argument("--out", required=True, help="output script file")

    p = sub.add_parser("serve", help="start the interactive session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8631)
    p.add_argument("--frontend", default=None,
                   help="optional static frontend directory to serve at /")

    p = sub.add_parser("roundtrip", help="render -> extract -> compare self-test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=64)

    return parser


def _cmd_extract(args) -> int:
    from .dataio import load_landmark_tracks, load_mask_archive, save_script
    from .kinex import extract_anatomy, extract_tool, assemble_script
    from .renderer import CLASS_IRIS, CLASS_PUPIL

    archive = load_mask_archive(args.masks)
    tracks = load_landmark_tracks(args.tracks)
    m = _coord_map(args)
    pupil = [r.labels == CLASS_PUPIL for r in archive.rasters]
    iris = [
        (r.labels == CLASS_IRIS) | (r.labels == CLASS_PUPIL) for r in archive.rasters
    ]
    anatomy, events = extract_anatomy(pupil, iris, tracks, m)
    pupil_c = [m.sim_to_image((a.pupil_world().cx, a.pupil_world().cy)) for a in anatomy]
    tool_seqs = {}
    for cls in ToolClass:
        masks = [r.labels == cls.label_id for r in archive.rasters]
        if any(mk.any() for mk in masks):
            tool_seqs[cls] = extract_tool(masks, cls, pupil_c, m)
    script = assemble_script(
        anatomy, tool_seqs, fps=args.fps, provenance=events,
        source_id=f"extract:{archive.video_id}",
    )
    out = _out_path(args, args.out)
    save_script(out, script)
    print(f"wrote {out}: {len(script)} frames, {len(tool_seqs)} tool classes")
    return EXIT_OK


def _cmd_replay(args) -> int:
    from .dataio import load_script, save_frame_png, save_graphs, save_raster_png
    from .renderer import FlowField, analytic_flow
    from .scenegraph import build_graph
    import numpy as np

    script = load_script(args.script)
    m = _coord_map(args)
    sim = Simulator(coord_map=m)
    states, rasters = sim.replay(script)
    out = _out_path(args, args.out)
    out.mkdir(parents=True, exist_ok=True)
    graphs = []
    for t, state in enumerate(states):
        save_raster_png(out / f"label_{t:05d}.png", rasters[t])
        _, frame = sim.render(state)
        save_frame_png(out / f"sim_{t:05d}.png", frame)
        if t + 1 < len(states):
            flow = analytic_flow(states[t], states[t + 1], rasters[t], m)
        else:
            zeros = np.zeros(rasters[t].labels.shape)
            flow = FlowField(zeros, zeros)
        graphs.append(build_graph(rasters[t], flow, frame_index=t))
    save_graphs(out / "graphs.jsonl", graphs)
    print(f"wrote {len(states)} frames to {out}")
    return EXIT_OK


def _cmd_export(args) -> int:
    from .dataio import export_paired_dataset, load_script

    script = load_script(args.script)
    out = _out_path(args, args.out)
    windows = export_paired_dataset(script, _coord_map(args), out)
    print(f"wrote {len(windows)} windows to {out}")
    return EXIT_OK


def _cmd_ood(args) -> int:
    from .dataio import save_script

    try:
        classes = [ToolClass[name.strip().upper()] for name in args.tools.split(",")]
    except KeyError as exc:
        raise EyesimError(f"unknown tool class {exc.args[0]!r}") from exc
    angles = [math.radians(float(a)) for a in args.angles.split(",")]
    if len(angles) != len(classes):
        raise EyesimError("--tools and --angles must have the same length")
    script = generate_ood_scenario(
        classes, angles, args.primitive, seed=args.seed,
        num_frames=args.frames, fps=args.fps,
    )
    out = _out_path(args, args.out)
    save_script(out, script)
    print(f"wrote {out}: {len(script)} frames")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .server import serve

    serve(
        host=args.host, port=args.port, coord_map=_coord_map(args),
        frontend_dir=args.frontend,
    )
    return EXIT_OK


TOLERANCES = {
    "iris_centroid_px": 1.5,
    "pupil_centroid_px": 1.5,
    "tip_px": 2.0,
    "orientation_deg": 3.0,
    "opening_deg": 4.0,
    "bend_deg": 4.0,
}


def _cmd_roundtrip(args) -> int:
    from .roundtrip import run_roundtrip

    metrics, min_iou, _script = run_roundtrip(
        args.seed, args.frames, m=_coord_map(args)
    )
    ok = True
    print(f"{'quantity':<20} {'mean':>8} {'max':>8} {'tolerance (mean)':>17}")
    for key, tol in TOLERANCES.items():
        mean, mx = metrics[key]["mean"], metrics[key]["max"]
        passed = mean <= tol
        ok = ok and passed
        print(f"{key:<20} {mean:8.3f} {mx:8.3f} {tol:17.1f} {'ok' if passed else 'FAIL'}")
    worst = min(min_iou.values())
    iou_ok = worst >= 0.9
    ok = ok and iou_ok
    print(f"{'replay_min_iou':<20} {worst:8.3f} {'':>8} {0.9:17.1f} "
          f"{'ok' if iou_ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_DATA_ERROR


COMMANDS = {
    "extract": _cmd_extract,
    "replay": _cmd_replay,
    "export": _cmd_export,
    "ood": _cmd_ood,
    "serve": _cmd_serve,
    "roundtrip": _cmd_roundtrip,
}


def main(argv=None) -> int:
    try:
        config = _load_config()
    except EyesimError as exc:
        _emit_error(exc)
        return EXIT_DATA_ERROR
    parser = build_parser(config)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except EyesimError as exc:
        _emit_error(exc)
        return EXIT_DATA_ERROR
    except OSError as exc:
        _emit_error(exc)
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
