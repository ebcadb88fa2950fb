"""Deterministic rasterization of simulator states.

Produces the class-labeled segmentation raster, a flat-shaded sim frame,
and the analytic per-pixel optical flow between consecutive states. The
hot fill loops live in a compiled extension when available; a NumPy
implementation with identical arithmetic is the fallback, selected at
import time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import FrameGap
from ..geometry import CoordinateMap
from ..state import SimState
from ..tools import ToolClass, default_templates

try:  # compiled kernels (built by setup.py); fall back to NumPy twins
    from . import _kernels as _impl

    KERNEL_BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on build environment
    from . import _kernels_py as _impl

    KERNEL_BACKEND = "numpy"

from . import _kernels_py

# raster class ids
CLASS_BACKGROUND = 0
CLASS_SCLERA = 1
CLASS_IRIS = 2
CLASS_PUPIL = 3

CLASS_NAMES = {
    CLASS_BACKGROUND: "background",
    CLASS_SCLERA: "sclera",
    CLASS_IRIS: "iris",
    CLASS_PUPIL: "pupil",
}
for _cls in ToolClass:
    CLASS_NAMES[_cls.label_id] = _cls.name.lower()

# flat shading palette, RGB
PALETTE = {
    CLASS_BACKGROUND: (214, 180, 160),
    CLASS_SCLERA: (240, 238, 230),
    CLASS_IRIS: (96, 130, 158),
    CLASS_PUPIL: (24, 24, 30),
    ToolClass.KERATOME.label_id: (188, 192, 200),
    ToolClass.VISCO_CANNULA.label_id: (255, 196, 60),
    ToolClass.RHEXIS_FORCEPS.label_id: (90, 200, 120),
    ToolClass.HYDRO_CANNULA.label_id: (80, 160, 255),
    ToolClass.PHACO.label_id: (220, 90, 90),
}


@dataclass(frozen=True)
class LabelRaster:
    labels: np.ndarray  # uint8, shape (height, width)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def __eq__(self, other):
        return isinstance(other, LabelRaster) and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class FlowField:
    u: np.ndarray  # float64, pixels/frame
    v: np.ndarray

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]


def _ellipse_to_px(e, m: CoordinateMap):
    c = m.sim_to_image((e.cx, e.cy))
    k = m.px_per_unit
    return float(c[0]), float(c[1]), e.phi, e.a * k, e.b * k


def _tool_polygons_px(tool, m: CoordinateMap, templates):
    tpl = templates[tool.tool_class]
    polys = tpl.posed_polygons(
        tool.tip,
        tool.orientation,
        bend_angle=tool.articulation.bend_angle,
        opening_angle=tool.articulation.opening_angle,
    )
    return [m.sim_to_image(p) for p in polys]


def render(state: SimState, m: CoordinateMap, resolution: int | None = None,
           templates=None, kernels=None):
    """Rasterize ``state`` into (LabelRaster, flat-shaded RGB frame).

    Shapes are painted back-to-front in fixed z-order: sclera < iris <
    pupil < tools (ascending tool class id). Coverage is decided per pixel
    center, so the output is bitwise-reproducible.
    """
    if resolution is None:
        resolution = max(m.image_width, m.image_height)
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    if resolution != max(m.image_width, m.image_height):
        raise ValueError("resolution disagrees with the coordinate map")
    if templates is None:
        templates = default_templates()
    k = kernels or _impl

    labels = np.zeros((m.image_height, m.image_width), dtype=np.uint8)
    anat = state.anatomy

    gx, gy = anat.globe_translation
    gc = m.sim_to_image((gx, gy))
    r_px = state.globe_radius * m.px_per_unit
    k.fill_ellipse(labels, float(gc[0]), float(gc[1]), 0.0, r_px, r_px, CLASS_SCLERA)

    cx, cy, phi, a, b = _ellipse_to_px(anat.iris_world(), m)
    k.fill_ellipse(labels, cx, cy, phi, a, b, CLASS_IRIS)
    cx, cy, phi, a, b = _ellipse_to_px(anat.pupil_world(), m)
    k.fill_ellipse(labels, cx, cy, phi, a, b, CLASS_PUPIL)

    for tool in state.tools:  # state keeps tools sorted by class
        if not tool.present:
            continue
        for poly in _tool_polygons_px(tool, m, templates):
            k.fill_convex_poly(labels, poly[:, 0], poly[:, 1], tool.tool_class.label_id)

    frame = np.zeros((m.image_height, m.image_width, 3), dtype=np.uint8)
    for cid, rgb in PALETTE.items():
        frame[labels == int(cid)] = rgb
    return LabelRaster(labels), frame


def _class_displacements_px(state_t: SimState, state_t1: SimState, m: CoordinateMap):
    """Per-class rigid motion between consecutive states, in pixels."""
    k = m.px_per_unit
    out = {}
    t0, t1 = state_t.anatomy, state_t1.anatomy
    gd = (
        (t1.globe_translation[0] - t0.globe_translation[0]) * k,
        (t1.globe_translation[1] - t0.globe_translation[1]) * k,
    )
    out[CLASS_SCLERA] = gd
    for cid, w0, w1 in (
        (CLASS_IRIS, t0.iris_world(), t1.iris_world()),
        (CLASS_PUPIL, t0.pupil_world(), t1.pupil_world()),
    ):
        out[cid] = ((w1.cx - w0.cx) * k, (w1.cy - w0.cy) * k)
    return out


def analytic_flow(state_t: SimState, state_t1: SimState, raster_t: LabelRaster,
                  m: CoordinateMap) -> FlowField:
    """Ground-truth flow from the kinematic parameters.

    Anatomy classes translate rigidly by their centroid displacement; tool
    pixels move under the rigid transform rotating by the orientation delta
    about the old tip and translating tip-to-tip. Background stays zero.
    """
    if state_t1.frame_index != state_t.frame_index + 1:
        raise FrameGap(
            f"frames {state_t.frame_index} -> {state_t1.frame_index} are not consecutive"
        )
    labels = raster_t.labels
    u = np.zeros(labels.shape, dtype=np.float64)
    v = np.zeros(labels.shape, dtype=np.float64)

    for cid, (dx, dy) in _class_displacements_px(state_t, state_t1, m).items():
        sel = labels == cid
        u[sel] = dx
        v[sel] = dy

    for tool0 in state_t.tools:
        if not tool0.present:
            continue
        tool1 = state_t1.tool(tool0.tool_class)
        sel = labels == tool0.tool_class.label_id
        if not sel.any():
            continue
        if tool1 is None or not tool1.present:
            continue  # tool leaves the scene; its old pixels keep zero flow
        tip0 = m.sim_to_image(tool0.tip)
        tip1 = m.sim_to_image(tool1.tip)
        dth = tool1.orientation - tool0.orientation
        dth = math.atan2(math.sin(dth), math.cos(dth))
        ys, xs = np.nonzero(sel)
        px = xs - tip0[0]
        py = ys - tip0[1]
        c, s = math.cos(dth), math.sin(dth)
        u[sel] = (c * px - s * py) + tip1[0] - xs
        v[sel] = (s * px + c * py) + tip1[1] - ys
    return FlowField(u, v)


def numpy_kernels():
    """The pure-NumPy kernel module (for benchmarks and equivalence tests)."""
    return _kernels_py


def active_kernels():
    return _impl
