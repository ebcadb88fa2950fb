"""Render -> extract -> compare self-test harness.

Builds seeded scripted scenarios (mixed tools, globe motion, articulation),
renders them, feeds the rendered masks plus synthetic landmark tracks back
through the extraction pipeline, and reports recovery errors and replay
mask agreement.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .geometry import CoordinateMap, GlobeRotation, angle_diff
from .kinex import assemble_script, extract_anatomy, extract_tool
from .renderer import CLASS_IRIS, CLASS_PUPIL
from .simulator import Simulator, generate_ood_scenario
from .state import KinematicScript, default_anatomy
from .tools import ToolClass

DEFAULT_LANDMARKS = ((12.0, 12.0), (116.0, 12.0), (12.0, 116.0),
                     (116.0, 116.0), (64.0, 8.0), (8.0, 64.0))

PRIMITIVES = ("approach", "sweep", "circular")


def make_mixed_scenario(seed: int, num_frames: int = 64) -> KinematicScript:
    """Seeded scenario with 1-3 tools, globe motion, and articulation."""
    rng = np.random.default_rng(seed)
    n_tools = int(rng.integers(1, 4))
    classes = sorted(rng.choice(len(ToolClass), size=n_tools, replace=False).tolist())
    # well-separated entry rays keep tools from occluding each other
    base_angle = float(rng.uniform(0.0, 2.0 * math.pi))
    angles = [
        base_angle + i * (2.0 * math.pi / n_tools) + float(rng.uniform(-0.3, 0.3))
        for i in range(n_tools)
    ]
    primitive = PRIMITIVES[int(rng.integers(0, 3))]
    # bounds box + max template length < inscribed image half-extent, so
    # every tool stays fully in frame (a border-clipped shaft would shear
    # the mask's principal axis and poison the recovery)
    script = generate_ood_scenario(
        [ToolClass(c) for c in classes],
        angles,
        primitive,
        seed=int(rng.integers(0, 2**31)),
        num_frames=num_frames,
        bounds=(-0.55, -0.55, 0.55, 0.55),
        entry_margin=0.0,
    )

    # overlay globe motion; zero at frame 0 so the extracted script shares
    # the same reference frame
    ax, ay = rng.uniform(0.02, 0.06, size=2)
    fx, fy = rng.uniform(0.5, 1.5, size=2)
    yaw_amp, pitch_amp = rng.uniform(0.04, 0.12, size=2)
    frames = []
    for t, (anat, tools) in enumerate(script.frames):
        s = t / (num_frames - 1)
        anat_t = replace(
            anat,
            globe_translation=(
                ax * math.sin(2.0 * math.pi * fx * s),
                ay * math.sin(2.0 * math.pi * fy * s),
            ),
            globe_rotation=GlobeRotation(
                yaw_amp * math.sin(2.0 * math.pi * s),
                pitch_amp * math.sin(2.0 * math.pi * s + 1.0),
            ),
        )
        frames.append((anat_t, tools))
    return KinematicScript(
        fps=script.fps, frames=tuple(frames), source_id=f"mixed:seed={seed}"
    )


def synth_landmarks(script: KinematicScript, m: CoordinateMap, base_points=DEFAULT_LANDMARKS):
    """Skin-landmark tracks implied by the script's global translation."""
    base = np.asarray(base_points, dtype=float)
    k = m.px_per_unit
    tracks = []
    for anat, _tools in script.frames:
        tx, ty = anat.globe_translation
        tracks.append(base + np.array([tx * k, ty * k]))
    return tracks


def masks_from_rasters(rasters):
    """Pupil / iris / per-tool-class binary mask sequences from label rasters.

    The iris mask includes the pupil region (the raster carves the pupil
    out of the iris; the fit wants the full disc).
    """
    pupil, iris, tools = [], [], {}
    present_classes = set()
    for r in rasters:
        present_classes.update(int(c) for c in np.unique(r.labels))
    tool_classes = [
        cls for cls in ToolClass if cls.label_id in present_classes
    ]
    for r in rasters:
        lb = r.labels
        pupil.append(lb == CLASS_PUPIL)
        iris.append((lb == CLASS_IRIS) | (lb == CLASS_PUPIL))
        for cls in tool_classes:
            tools.setdefault(cls, []).append(lb == cls.label_id)
    return pupil, iris, tools


def recover_script(rasters, landmark_tracks, m: CoordinateMap, fps=4.0) -> KinematicScript:
    """Full inverse-pairing pass over rendered rasters."""
    pupil_masks, iris_masks, tool_masks = masks_from_rasters(rasters)
    anatomy, events = extract_anatomy(pupil_masks, iris_masks, landmark_tracks, m)
    pupil_c_px = [m.sim_to_image((a.pupil_world().cx, a.pupil_world().cy)) for a in anatomy]
    # No temporal smoothing here: per-frame orientation is defined off the
    # whole mask, so its quantization noise is anti-correlated with the
    # articulation noise and the raw pair replays more faithfully than a
    # filtered one.
    tool_seqs = {
        cls: extract_tool(masks, cls, pupil_c_px, m)
        for cls, masks in tool_masks.items()
    }
    return assemble_script(anatomy, tool_seqs, fps=fps, provenance=events,
                           source_id="recovered")


def compare_scripts(src: KinematicScript, rec: KinematicScript, m: CoordinateMap):
    """Per-quantity recovery errors (pixels / degrees), mean and max."""
    k = m.px_per_unit
    errs = {key: [] for key in ("iris_centroid_px", "pupil_centroid_px", "tip_px",
                                "orientation_deg", "opening_deg", "bend_deg")}
    for (a0, t0s), (a1, t1s) in zip(src.frames, rec.frames):
        for key, w0, w1 in (
            ("iris_centroid_px", a0.iris_world(), a1.iris_world()),
            ("pupil_centroid_px", a0.pupil_world(), a1.pupil_world()),
        ):
            errs[key].append(math.hypot(w1.cx - w0.cx, w1.cy - w0.cy) * k)
        rec_by_class = {t.tool_class: t for t in t1s}
        for t0 in t0s:
            t1 = rec_by_class.get(t0.tool_class)
            if t1 is None or not (t0.present and t1.present):
                continue
            errs["tip_px"].append(
                math.hypot(t1.tip[0] - t0.tip[0], t1.tip[1] - t0.tip[1]) * k
            )
            errs["orientation_deg"].append(
                abs(math.degrees(angle_diff(t1.orientation, t0.orientation)))
            )
            errs["opening_deg"].append(
                abs(math.degrees(t1.articulation.opening_angle - t0.articulation.opening_angle))
            )
            errs["bend_deg"].append(
                abs(math.degrees(t1.articulation.bend_angle - t0.articulation.bend_angle))
            )
    return {
        key: {"mean": float(np.mean(v)) if v else 0.0, "max": float(np.max(v)) if v else 0.0}
        for key, v in errs.items()
    }


def per_class_iou(raster_a, raster_b):
    """IoU per class id present in either raster (background excluded)."""
    a, b = raster_a.labels, raster_b.labels
    out = {}
    for cid in np.union1d(np.unique(a), np.unique(b)):
        cid = int(cid)
        if cid == 0:
            continue
        sa = a == cid
        sb = b == cid
        union = (sa | sb).sum()
        out[cid] = float((sa & sb).sum() / union) if union else 1.0
    return out


def run_roundtrip(seed: int, num_frames: int = 64, m: CoordinateMap | None = None):
    """One full scenario round trip.

    Returns (metrics, min replay IoU per class, recovered script).
    """
    if m is None:
        m = CoordinateMap(128, 128, 1.0)
    sim = Simulator(coord_map=m)
    script = make_mixed_scenario(seed, num_frames)
    _states, rasters = sim.replay(script)
    landmarks = synth_landmarks(script, m)
    recovered = recover_script(rasters, landmarks, m, fps=script.fps)
    metrics = compare_scripts(script, recovered, m)

    _rstates, replayed = sim.replay(recovered)
    min_iou: dict[int, float] = {}
    for ra, rb in zip(rasters, replayed):
        for cid, iou in per_class_iou(ra, rb).items():
            min_iou[cid] = min(min_iou.get(cid, 1.0), iou)
    return metrics, min_iou, recovered
