"""Inverse-pairing pipeline: recover kinematic scripts from segmentations.

Per-frame anatomy comes from moment-fitted iris/pupil ellipses plus a
global/local motion split: skin-landmark trajectories give the global
similarity, and the globally-compensated pupil centroid residual gives the
globe yaw/pitch. Tool kinematics come from per-class tool masks.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import (
    AllFramesDegenerate,
    DegenerateRegion,
    EmptySequence,
    EyesimError,
    LengthMismatch,
    TooFewPixels,
)
from .geometry import (
    CoordinateMap,
    Ellipse,
    fit_ellipse_moments,
    fit_similarity,
    mask_moments,
    residual_to_rotation,
    rotation_to_displacement,
    wrap_angle,
)
from .state import (
    AnatomyState,
    Articulation,
    KinematicScript,
    SimState,
    ToolState,
    clamp_articulation,
)
from .tools import BEND_CLASSES, JAW_CLASSES, ToolClass

__all__ = [
    "AnatomyState",
    "ToolState",
    "KinematicScript",
    "extract_anatomy",
    "extract_tool",
    "smooth_tool_sequence",
    "assemble_script",
]

MIN_PART_PIXELS = 5


def _try_fit(mask):
    try:
        return fit_ellipse_moments(mask)
    except (TooFewPixels, DegenerateRegion):
        return None


def _interp_anatomy(a: AnatomyState, b: AnatomyState, w: float) -> AnatomyState:
    """Linear blend of every anatomy parameter (gap filling)."""

    def lerp(x, y):
        return x + (y - x) * w

    def lerp_ellipse(e0, e1):
        # axes sorted after interpolation keeps a >= b
        aa, bb = lerp(e0.a, e1.a), lerp(e0.b, e1.b)
        return Ellipse(lerp(e0.cx, e1.cx), lerp(e0.cy, e1.cy),
                       lerp(e0.phi, e1.phi), max(aa, bb), min(aa, bb))

    from .geometry import GlobeRotation

    return AnatomyState(
        globe_translation=(
            lerp(a.globe_translation[0], b.globe_translation[0]),
            lerp(a.globe_translation[1], b.globe_translation[1]),
        ),
        globe_rotation=GlobeRotation(
            lerp(a.globe_rotation.yaw, b.globe_rotation.yaw),
            lerp(a.globe_rotation.pitch, b.globe_rotation.pitch),
        ),
        iris=lerp_ellipse(a.iris, b.iris),
        pupil=lerp_ellipse(a.pupil, b.pupil),
    )


def extract_anatomy(pupil_masks, iris_masks, landmark_tracks, m: CoordinateMap):
    """Per-frame anatomy states from mask and landmark sequences.

    Returns (states, provenance events). Frames whose masks fail the
    ellipse fit are filled by linear interpolation from the nearest valid
    neighbors and flagged in the events list.
    """
    n = len(pupil_masks)
    if n == 0:
        raise EmptySequence("no frames")
    if not (len(iris_masks) == n and len(landmark_tracks) == n):
        raise LengthMismatch("mask and landmark sequences must share length")

    pupil_fits = [_try_fit(mk) for mk in pupil_masks]
    iris_fits = [_try_fit(mk) for mk in iris_masks]
    if not any(p is not None for p in pupil_fits):
        raise AllFramesDegenerate("no frame yields a valid pupil fit")
    if pupil_fits[0] is None or iris_fits[0] is None:
        raise DegenerateRegion("frame 1 pupil/iris masks must be non-degenerate")

    k = m.px_per_unit
    iris0 = iris_fits[0]
    pupil0 = pupil_fits[0]
    base_landmarks = np.asarray(landmark_tracks[0], dtype=float)
    if base_landmarks.shape[0] < 2:
        raise EyesimError("need >= 2 landmarks per frame")

    states: list[AnatomyState | None] = [None] * n
    events: list[str] = []
    for t in range(n):
        pupil, iris = pupil_fits[t], iris_fits[t]
        if pupil is None or iris is None:
            continue
        g, _rms = fit_similarity(base_landmarks, landmark_tracks[t])
        tr_px = np.array([g.tx, g.ty])
        residual = np.array([pupil.cx - pupil0.cx, pupil.cy - pupil0.cy]) - tr_px
        rot = residual_to_rotation(residual, iris0.a)
        tr_sim = tr_px / k
        disp = rotation_to_displacement(rot, iris0.a / k)

        def to_base(e: Ellipse) -> Ellipse:
            c = m.image_to_sim((e.cx, e.cy))
            return Ellipse(
                c[0] - tr_sim[0] - disp[0],
                c[1] - tr_sim[1] - disp[1],
                e.phi,
                e.a / k,
                e.b / k,
            )

        states[t] = AnatomyState(
            globe_translation=(float(tr_sim[0]), float(tr_sim[1])),
            globe_rotation=rot,
            iris=to_base(iris),
            pupil=to_base(pupil),
        )

    valid = [t for t in range(n) if states[t] is not None]
    for t in range(n):
        if states[t] is not None:
            continue
        prev = max((v for v in valid if v < t), default=None)
        nxt = min((v for v in valid if v > t), default=None)
        if prev is None:
            states[t] = states[nxt]
            events.append(f"frame {t}: degenerate, held from frame {nxt}")
        elif nxt is None:
            states[t] = states[prev]
            events.append(f"frame {t}: degenerate, held from frame {prev}")
        else:
            w = (t - prev) / (nxt - prev)
            states[t] = _interp_anatomy(states[prev], states[nxt], w)
            events.append(f"frame {t}: degenerate, interpolated {prev}..{nxt}")
    return states, events


def _principal_axis(cov):
    evals, evecs = np.linalg.eigh(cov)
    v = evecs[:, 1]
    return math.atan2(v[1], v[0])


def _oriented_axis(cov, toward):
    """Principal axis angle, sign-flipped to point along ``toward``."""
    ang = _principal_axis(cov)
    d = math.cos(ang) * toward[0] + math.sin(ang) * toward[1]
    if d < 0:
        ang += math.pi
    return wrap_angle(ang)


def _part_axis(xs, ys, toward):
    n = xs.size
    cx, cy = xs.mean(), ys.mean()
    dx, dy = xs - cx, ys - cy
    cov = np.array(
        [[dx @ dx, dx @ dy], [dx @ dy, dy @ dy]], dtype=float
    ) / n
    if np.linalg.eigvalsh(cov)[1] < 1e-12:
        return None
    return _oriented_axis(cov, toward)


def _tool_frame(mask, tool_class: ToolClass, pupil_c, m: CoordinateMap):
    n, cen, cov = mask_moments(mask)
    if n < MIN_PART_PIXELS:
        return None
    toward = (pupil_c[0] - cen[0], pupil_c[1] - cen[1])
    theta = _oriented_axis(cov, toward)
    c, s = math.cos(theta), math.sin(theta)

    ys, xs = np.nonzero(np.asarray(mask))
    proj = xs * c + ys * s

    opening = 0.0
    if tool_class in JAW_CLASSES:
        v = -(xs - cen[0]) * s + (ys - cen[1]) * c
        up, down = v > 0, v <= 0
        if up.sum() >= MIN_PART_PIXELS and down.sum() >= MIN_PART_PIXELS:
            a_up = _part_axis(xs[up].astype(float), ys[up].astype(float), (c, s))
            a_dn = _part_axis(xs[down].astype(float), ys[down].astype(float), (c, s))
            if a_up is not None and a_dn is not None:
                opening = abs(wrap_angle(a_up - a_dn))

    bend = 0.0
    if tool_class in BEND_CLASSES:
        lo, hi = proj.min(), proj.max()
        cut = lo + (hi - lo) * (2.0 / 3.0)
        tip_part = proj >= cut
        shaft = ~tip_part
        if tip_part.sum() >= MIN_PART_PIXELS and shaft.sum() >= MIN_PART_PIXELS:
            txs = xs[tip_part].astype(float)
            tys = ys[tip_part].astype(float)
            a_tip = _part_axis(txs, tys, (c, s))
            a_shaft = _part_axis(xs[shaft].astype(float), ys[shaft].astype(float), (c, s))
            if a_tip is not None and a_shaft is not None:
                bend = wrap_angle(a_tip - a_shaft)
    # snap laterally onto the whole-mask axis: it averages every foreground
    # pixel, so it is far steadier than any sub-region axis, and the bendable
    # nose is short enough that the true apex sits on it to within a fraction
    # of a pixel
    snap_angle, snap_point = theta, (float(cen[0]), float(cen[1]))

    best = np.flatnonzero(proj == proj.max())
    if best.size > 1:  # deterministic tie break: lower y, then lower x
        order = np.lexsort((xs[best], ys[best]))
        tip_i = best[order[0]]
    else:
        tip_i = best[0]
    # the extreme pixel center sits up to ~1 px inside the true apex
    # boundary; a half-pixel push along the axis splits the difference
    q_target = proj[tip_i] + 0.5
    uc, us = math.cos(snap_angle), math.sin(snap_angle)
    t_par = q_target - (snap_point[0] * c + snap_point[1] * s)
    tip_px = (snap_point[0] + t_par * uc, snap_point[1] + t_par * us)

    art, _ = clamp_articulation(bend, opening)
    tip_sim = m.image_to_sim(tip_px)
    return ToolState(
        tool_class=tool_class,
        tip=(float(tip_sim[0]), float(tip_sim[1])),
        orientation=theta,
        articulation=art,
        present=True,
    )


def extract_tool(tool_masks, tool_class: ToolClass, pupil_centroids, m: CoordinateMap):
    """Per-frame tool states for one tool class.

    Frames with an empty (or sub-minimal) mask yield present=False with the
    nearest present frame's kinematics carried forward (backward for a
    leading gap).
    """
    n = len(tool_masks)
    if n == 0:
        raise EmptySequence("no frames")
    fits = [
        _tool_frame(tool_masks[t], tool_class, pupil_centroids[t], m) for t in range(n)
    ]
    out: list[ToolState | None] = [None] * n
    last = None
    for t in range(n):
        if fits[t] is not None:
            last = fits[t]
            out[t] = last
        elif last is not None:
            from dataclasses import replace

            out[t] = replace(last, present=False)
    first = next((f for f in fits if f is not None), None)
    for t in range(n):
        if out[t] is None:
            if first is None:
                out[t] = ToolState(tool_class, (0.0, 0.0), 0.0, present=False)
            else:
                from dataclasses import replace

                out[t] = replace(first, present=False)
    return out


def smooth_tool_sequence(states, window: int = 3):
    """Running median over a recovered per-frame tool sequence.

    Mask-based extraction is unbiased but quantization-limited: the masks it
    reads are rounded to the pixel grid, so isolated frames can spike by a
    few degrees of orientation or articulation. Tool motion is smooth at
    playback rates, and a short median passes locally monotone signals
    through unchanged while removing single-frame outliers. Orientation is
    unwrapped before filtering so the +/-pi seam never splits a window.
    Tip positions, presence flags, and the tool class are untouched.
    """
    from dataclasses import replace

    from scipy.ndimage import median_filter

    n = len(states)
    if n < window or window < 2:
        return list(states)
    theta = np.unwrap(np.array([s.orientation for s in states]))
    bend = np.array([s.articulation.bend_angle for s in states])
    opening = np.array([s.articulation.opening_angle for s in states])
    theta, bend, opening = (
        median_filter(a, size=window, mode="nearest") for a in (theta, bend, opening)
    )
    return [
        replace(
            s,
            orientation=float(theta[t]),
            articulation=Articulation(
                bend_angle=float(bend[t]), opening_angle=float(opening[t])
            ),
        )
        for t, s in enumerate(states)
    ]


def assemble_script(anatomy, tools, fps=4.0, labels=None, source_id="", provenance=()):
    """Validate and pack per-frame sequences into a KinematicScript.

    ``tools`` maps ToolClass -> per-frame ToolState list (or is an iterable
    of such lists). Out-of-range articulation is clamped, with one
    provenance event per clamp.
    """
    n = len(anatomy)
    if n == 0:
        raise EmptySequence("no frames")
    if isinstance(tools, dict):
        tool_seqs = list(tools.values())
    else:
        tool_seqs = list(tools)
    for seq in tool_seqs:
        if len(seq) != n:
            raise LengthMismatch(f"tool sequence length {len(seq)} != anatomy length {n}")
    if labels is not None and len(labels) != n:
        raise LengthMismatch("labels length != frame count")

    events = list(provenance)
    frames = []
    for t in range(n):
        per_frame = []
        for seq in tool_seqs:
            ts = seq[t]
            art, ev = clamp_articulation(
                ts.articulation.bend_angle, ts.articulation.opening_angle
            )
            for e in ev:
                events.append(f"frame {t} {ts.tool_class.name}: {e}")
            if ev:
                from dataclasses import replace

                ts = replace(ts, articulation=art)
            per_frame.append(ts)
        per_frame.sort(key=lambda t_: t_.tool_class)
        frames.append((anatomy[t], tuple(per_frame)))
    return KinematicScript(
        fps=float(fps),
        frames=tuple(frames),
        source_id=source_id,
        phase_labels=tuple(labels) if labels is not None else None,
        provenance=tuple(events),
    )
