"""File formats and dataset assembly.

Rasters are 8-bit single-channel PNGs with JSON sidecar manifests; scripts
and per-frame graphs are line-delimited JSON with a version header line.
Every format carries ``format_version``; loaders reject unknown majors.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from filelock import FileLock
from PIL import Image

from .errors import Corrupt, MissingLabels, SchemaVersionMismatch, ScriptTooShort, UnknownClassId
from .geometry import CoordinateMap
from .renderer import CLASS_NAMES, LabelRaster, analytic_flow
from .scenegraph import SceneGraph, build_graph
from .state import KinematicScript

FORMAT_VERSION = "1.0"
WINDOW_LENGTH = 16
WINDOW_STRIDE = WINDOW_LENGTH - 1  # 1-frame overlap between windows
EXPORT_FPS = 4.0

PHASES = (
    "Idle",
    "Incision",
    "Viscoelastic",
    "Capsulorhexis",
    "Hydrodissection",
    "Phacoemulsification",
)


def _check_version(version):
    if not isinstance(version, str) or "." not in version:
        raise Corrupt(f"malformed format version {version!r}")
    major = version.split(".", 1)[0]
    if major != FORMAT_VERSION.split(".", 1)[0]:
        raise SchemaVersionMismatch(f"unsupported format major in {version!r}")


# ---------------------------------------------------------------- rasters

def save_raster_png(path, raster: LabelRaster):
    Image.fromarray(raster.labels, mode="L").save(path, format="PNG")


def load_raster_png(path) -> LabelRaster:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    return LabelRaster(arr)


def save_frame_png(path, frame):
    Image.fromarray(frame, mode="RGB").save(path, format="PNG")


# ---------------------------------------------------------------- scripts

def save_script(path, script: KinematicScript):
    doc = script.to_jsonable()
    frames = doc.pop("frames")
    header = {"format_version": FORMAT_VERSION, "kind": "kinematic_script", **doc}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for fr in frames:
            fh.write(json.dumps(fr) + "\n")


def load_script(path) -> KinematicScript:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise Corrupt("empty script file")
        header = json.loads(lines[0])
        _check_version(header.get("format_version"))
        if header.get("kind") != "kinematic_script":
            raise Corrupt("not a kinematic script file")
        frames = [json.loads(line) for line in lines[1:] if line.strip()]
    except (json.JSONDecodeError, OSError) as exc:
        raise Corrupt(f"failed to read script: {exc}") from exc
    header["frames"] = frames
    return KinematicScript.from_jsonable(header)


# ---------------------------------------------------------------- graphs

def save_graphs(path, graphs):
    with open(path, "w") as fh:
        fh.write(json.dumps({"format_version": FORMAT_VERSION, "kind": "scene_graphs"}) + "\n")
        for g in graphs:
            fh.write(json.dumps(g.to_jsonable()) + "\n")


def load_graphs(path):
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
        header = json.loads(lines[0])
        _check_version(header.get("format_version"))
        if header.get("kind") != "scene_graphs":
            raise Corrupt("not a scene graph file")
        return [SceneGraph.from_jsonable(json.loads(line)) for line in lines[1:] if line.strip()]
    except (json.JSONDecodeError, OSError, IndexError) as exc:
        raise Corrupt(f"failed to read graphs: {exc}") from exc


# ---------------------------------------------------------------- mask archives

@dataclass(frozen=True)
class MaskArchive:
    video_id: str
    fps: float
    resolution: tuple[int, int]  # (width, height)
    class_names: dict[int, str]
    rasters: tuple[LabelRaster, ...]

    def __post_init__(self):
        for t, r in enumerate(self.rasters):
            present = set(np.unique(r.labels).tolist())
            unmapped = present - set(self.class_names)
            if unmapped:
                raise UnknownClassId(f"frame {t}: unmapped class ids {sorted(unmapped)}")


def save_mask_archive(path, archive: MaskArchive):
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "mask_archive",
        "video_id": archive.video_id,
        "fps": archive.fps,
        "resolution": list(archive.resolution),
        "class_names": {str(k): v for k, v in archive.class_names.items()},
        "frame_count": len(archive.rasters),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    for t, raster in enumerate(archive.rasters):
        save_raster_png(root / f"frame_{t:05d}.png", raster)


def load_mask_archive(path) -> MaskArchive:
    root = Path(path)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise Corrupt(f"failed to read archive manifest: {exc}") from exc
    _check_version(manifest.get("format_version"))
    if manifest.get("kind") != "mask_archive":
        raise Corrupt("not a mask archive")
    count = manifest["frame_count"]
    rasters = []
    for t in range(count):
        fp = root / f"frame_{t:05d}.png"
        if not fp.exists():
            raise Corrupt(f"missing frame file {fp.name}")
        rasters.append(load_raster_png(fp))
    return MaskArchive(
        video_id=manifest["video_id"],
        fps=manifest["fps"],
        resolution=tuple(manifest["resolution"]),
        class_names={int(k): v for k, v in manifest["class_names"].items()},
        rasters=tuple(rasters),
    )


def load_landmark_tracks(path):
    """Per-frame landmark point lists from a tracks JSON file."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise Corrupt(f"failed to read landmark tracks: {exc}") from exc
    _check_version(doc.get("format_version"))
    if doc.get("kind") != "landmark_tracks":
        raise Corrupt("not a landmark tracks file")
    return [np.asarray(frame, dtype=float) for frame in doc["tracks"]]


def save_landmark_tracks(path, tracks):
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "landmark_tracks",
        "tracks": [np.asarray(t, dtype=float).tolist() for t in tracks],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


# ---------------------------------------------------------------- paired export

@dataclass(frozen=True)
class PairedWindow:
    window_id: str
    frame_indices: tuple[int, ...]
    fps: float
    first_frame_overlap: bool
    phase_labels: tuple[str, ...] | None
    frames: tuple[dict, ...] = field(repr=False)  # per-frame artifact references

    def __post_init__(self):
        if len(self.frame_indices) != WINDOW_LENGTH:
            raise ValueError(f"window must have exactly {WINDOW_LENGTH} frames")
        if self.fps != EXPORT_FPS:
            raise ValueError(f"window fps must be {EXPORT_FPS}")


def window_starts(num_frames: int):
    """Start indices of 16-frame windows with 1-frame overlap."""
    if num_frames < WINDOW_LENGTH:
        raise ScriptTooShort(f"{num_frames} frames < window length {WINDOW_LENGTH}")
    starts = []
    s = 0
    while s + WINDOW_LENGTH <= num_frames:
        starts.append(s)
        s += WINDOW_STRIDE
    return starts


def export_paired_dataset(
    script: KinematicScript,
    m: CoordinateMap,
    out_path,
    real_frame_refs=None,
    simulator=None,
) -> list[PairedWindow]:
    """Replay a script and write the paired-window dataset.

    Layout under ``out_path``: frames/ (label + sim PNGs), graphs.jsonl,
    windows/window_NNN.json, manifest.json. Deterministic: re-running from
    the same script reproduces identical bytes.
    """
    from .simulator import Simulator

    if script.fps != EXPORT_FPS:
        raise ValueError(f"export requires a {EXPORT_FPS} fps script")
    starts = window_starts(len(script))

    sim = simulator or Simulator(coord_map=m)
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(out / ".export.lock"))
    with lock:
        frames_dir = out / "frames"
        windows_dir = out / "windows"
        frames_dir.mkdir(exist_ok=True)
        windows_dir.mkdir(exist_ok=True)

        states, rasters = sim.replay(script)
        graphs = []
        for t, state in enumerate(states):
            if t + 1 < len(states):
                flow = analytic_flow(states[t], states[t + 1], rasters[t], m)
            else:
                from .renderer import FlowField

                flow = FlowField(
                    np.zeros(rasters[t].labels.shape), np.zeros(rasters[t].labels.shape)
                )
            graphs.append(build_graph(rasters[t], flow, frame_index=t))
            save_raster_png(frames_dir / f"label_{t:05d}.png", rasters[t])
            _, frame = sim.render(state)
            save_frame_png(frames_dir / f"sim_{t:05d}.png", frame)
        save_graphs(out / "graphs.jsonl", graphs)

        windows = []
        for wi, s in enumerate(starts):
            idxs = tuple(range(s, s + WINDOW_LENGTH))
            phase = (
                tuple(script.phase_labels[i] for i in idxs)
                if script.phase_labels is not None
                else None
            )
            entries = tuple(
                {
                    "frame_index": i,
                    "label_png": f"frames/label_{i:05d}.png",
                    "sim_png": f"frames/sim_{i:05d}.png",
                    "graph_line": i,
                    "real_frame_ref": real_frame_refs[i] if real_frame_refs else None,
                    "phase_label": phase[j] if phase else None,
                }
                for j, i in enumerate(idxs)
            )
            win = PairedWindow(
                window_id=f"window_{wi:03d}",
                frame_indices=idxs,
                fps=script.fps,
                first_frame_overlap=wi > 0,
                phase_labels=phase,
                frames=entries,
            )
            windows.append(win)
            (windows_dir / f"{win.window_id}.json").write_text(
                json.dumps(
                    {
                        "format_version": FORMAT_VERSION,
                        "kind": "paired_window",
                        "window_id": win.window_id,
                        "fps": win.fps,
                        "frame_indices": list(idxs),
                        "first_frame_overlap": win.first_frame_overlap,
                        "frames": list(entries),
                    },
                    indent=2,
                )
                + "\n"
            )

        manifest = {
            "format_version": FORMAT_VERSION,
            "kind": "paired_dataset",
            "source_id": script.source_id,
            "fps": script.fps,
            "window_length": WINDOW_LENGTH,
            "window_overlap": 1,
            "num_frames": len(script),
            "dropped_tail_frames": len(script) - (starts[-1] + WINDOW_LENGTH),
            "windows": [
                {
                    "window_id": w.window_id,
                    "start": w.frame_indices[0],
                    "first_frame_overlap": w.first_frame_overlap,
                }
                for w in windows
            ],
            "class_names": {str(k): v for k, v in CLASS_NAMES.items()},
            "splits": {},  # recorded by callers; no position taken here
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return windows


def build_augmentation_pair(style_source: str, motion_source: KinematicScript):
    """Manifest entry pairing one video's style with another's motion.

    Phase labels are inherited verbatim from the motion source.
    """
    if motion_source.phase_labels is None:
        raise MissingLabels("motion source carries no phase labels")
    return {
        "format_version": FORMAT_VERSION,
        "kind": "augmentation_pair",
        "style_source": style_source,
        "style_first_frame_ref": f"{style_source}/frame_00000",
        "motion_source_id": motion_source.source_id,
        "phase_labels": list(motion_source.phase_labels),
        "identity_pair": style_source == motion_source.source_id,
    }
