"""Tool classes and their polygon templates.

Templates are data files (JSON), not code, so new instruments can be added
without a rebuild. Vertices are in tool-local sim units: the tip apex sits
at the origin and the instrument extends toward -x; orientation 0 means the
tool points toward +x. Articulated parts carry a named joint:

* ``jaw``  - rotated about its pivot by ``sign * opening_angle / 2``
* ``bend`` - rotated about its pivot by ``bend_angle``
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources
from pathlib import Path

import numpy as np

TOOL_LABEL_BASE = 10  # raster class id = TOOL_LABEL_BASE + ToolClass value


class ToolClass(IntEnum):
    KERATOME = 0
    VISCO_CANNULA = 1
    RHEXIS_FORCEPS = 2
    HYDRO_CANNULA = 3
    PHACO = 4

    @property
    def label_id(self) -> int:
        return TOOL_LABEL_BASE + int(self)


# intra-tool degree of freedom per class
JAW_CLASSES = frozenset({ToolClass.RHEXIS_FORCEPS})
BEND_CLASSES = frozenset({ToolClass.HYDRO_CANNULA})


@dataclass(frozen=True)
class ToolPart:
    name: str
    vertices: np.ndarray  # (N, 2) tool-local
    joint_kind: str | None = None  # None | "jaw" | "bend"
    pivot: tuple[float, float] = (0.0, 0.0)
    sign: float = 1.0


@dataclass(frozen=True)
class ToolTemplate:
    name: str
    parts: tuple[ToolPart, ...]

    def posed_polygons(self, tip, orientation, bend_angle=0.0, opening_angle=0.0):
        """World-space (sim units) polygons for the given pose, in part order.

        ``orientation`` is the principal axis of the posed silhouette: after
        the joint rotations the assembly is counter-rotated about the apex by
        its own principal-axis angle, so the mask's second-moment axis equals
        the stored orientation even when a bend skews the outline. The
        extraction side measures exactly that axis, which keeps
        render -> extract -> re-render closed.
        """
        tip = np.asarray(tip, dtype=float)
        articulated = []
        for part in self.parts:
            verts = part.vertices
            if part.joint_kind == "jaw":
                verts = _rotate_about(verts, part.pivot, part.sign * opening_angle / 2.0)
            elif part.joint_kind == "bend":
                verts = _rotate_about(verts, part.pivot, part.sign * bend_angle)
            articulated.append(verts)
        alpha = _principal_axis_angle(articulated) if bend_angle != 0.0 else 0.0
        c, s = math.cos(orientation - alpha), math.sin(orientation - alpha)
        rot = np.array([[c, -s], [s, c]])
        return [verts @ rot.T + tip for verts in articulated]


def _principal_axis_angle(polygons) -> float:
    """Principal-axis angle of a set of polygons via exact area moments.

    Green's-theorem closed forms; parts abut along shared edges, so summing
    per-polygon moments equals the union's moments (any joint-gap overlap is
    second-order small). The angle is wrapped to (-pi/2, pi/2]: templates run
    along -x/+x, so the representative nearest zero is the right one.
    """
    A = cx = cy = ixx = iyy = ixy = 0.0
    for verts in polygons:
        v = np.asarray(verts, dtype=float)
        x0, y0 = v[:, 0], v[:, 1]
        x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
        cross = x0 * y1 - x1 * y0
        a = 0.5 * cross.sum()
        if a < 0:  # normalize winding so every part contributes positive mass
            x0, y0, x1, y1 = x1, y1, x0, y0
            cross = -cross
            a = -a
        A += a
        cx += np.dot(x0 + x1, cross) / 6.0
        cy += np.dot(y0 + y1, cross) / 6.0
        ixx += np.dot(x0 * x0 + x0 * x1 + x1 * x1, cross) / 12.0
        iyy += np.dot(y0 * y0 + y0 * y1 + y1 * y1, cross) / 12.0
        ixy += np.dot(x0 * y1 + 2.0 * x0 * y0 + 2.0 * x1 * y1 + x1 * y0, cross) / 24.0
    if A <= 0:
        return 0.0
    cx /= A
    cy /= A
    mxx = ixx - A * cx * cx
    myy = iyy - A * cy * cy
    mxy = ixy - A * cx * cy
    ang = 0.5 * math.atan2(2.0 * mxy, mxx - myy)
    if ang > math.pi / 2:
        ang -= math.pi
    elif ang <= -math.pi / 2:
        ang += math.pi
    return ang


def _rotate_about(verts, pivot, angle):
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    pivot = np.asarray(pivot, dtype=float)
    return (verts - pivot) @ rot.T + pivot


def _parse_template(doc) -> ToolTemplate:
    parts = []
    for p in doc["parts"]:
        joint = p.get("joint") or {}
        parts.append(
            ToolPart(
                name=p["name"],
                vertices=np.asarray(p["vertices"], dtype=float),
                joint_kind=joint.get("kind"),
                pivot=tuple(joint.get("pivot", (0.0, 0.0))),
                sign=float(joint.get("sign", 1.0)),
            )
        )
    return ToolTemplate(name=doc["name"], parts=tuple(parts))


def load_templates(template_dir=None) -> dict[ToolClass, ToolTemplate]:
    """Load templates for every tool class, from ``template_dir`` if given,
    otherwise from the bundled data files."""
    out = {}
    for cls in ToolClass:
        fname = f"{cls.name.lower()}.json"
        if template_dir is not None:
            doc = json.loads((Path(template_dir) / fname).read_text())
        else:
            ref = resources.files("eyesim.data.tools").joinpath(fname)
            doc = json.loads(ref.read_text())
        out[cls] = _parse_template(doc)
    return out


_default_templates: dict[ToolClass, ToolTemplate] | None = None


def default_templates() -> dict[ToolClass, ToolTemplate]:
    global _default_templates
    if _default_templates is None:
        _default_templates = load_templates()
    return _default_templates
