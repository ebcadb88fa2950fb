"""Simulator state value types.

Anatomy and tool states are immutable values in simulator units. Iris and
pupil ellipses are stored motion-compensated ("base" frame): the rendered
position adds the globe translation plus the yaw/pitch displacement on the
projected globe disc, so transitions only touch the motion fields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import InvariantViolation
from .geometry import Ellipse, GlobeRotation, rotation_to_displacement, wrap_angle
from .tools import ToolClass

OPENING_RANGE = (0.0, math.pi / 2)
BEND_RANGE = (-math.pi / 3, math.pi / 3)

# projected globe disc radius at globe_scale 1, sim units
GLOBE_RADIUS = 0.92


@dataclass(frozen=True)
class Articulation:
    """Intra-tool degrees of freedom. Raw values are accepted so that
    extraction and assembly can observe out-of-range inputs; transitions and
    script assembly clamp to the legal ranges and log the event."""

    bend_angle: float = 0.0
    opening_angle: float = 0.0

    @property
    def in_range(self) -> bool:
        return (
            OPENING_RANGE[0] <= self.opening_angle <= OPENING_RANGE[1]
            and BEND_RANGE[0] <= self.bend_angle <= BEND_RANGE[1]
        )


def clamp_articulation(bend_angle, opening_angle):
    """Clamp to legal ranges; returns (Articulation, list of clamp events)."""
    events = []
    b = min(BEND_RANGE[1], max(BEND_RANGE[0], bend_angle))
    o = min(OPENING_RANGE[1], max(OPENING_RANGE[0], opening_angle))
    if b != bend_angle:
        events.append(f"bend_angle clamped {bend_angle:.6g} -> {b:.6g}")
    if o != opening_angle:
        events.append(f"opening_angle clamped {opening_angle:.6g} -> {o:.6g}")
    return Articulation(b, o), events


@dataclass(frozen=True)
class ToolState:
    tool_class: ToolClass
    tip: tuple[float, float]
    orientation: float
    articulation: Articulation = field(default_factory=Articulation)
    present: bool = True

    def __post_init__(self):
        object.__setattr__(self, "tool_class", ToolClass(self.tool_class))
        object.__setattr__(self, "tip", (float(self.tip[0]), float(self.tip[1])))
        object.__setattr__(self, "orientation", wrap_angle(self.orientation))

    def to_jsonable(self):
        return {
            "tool_class": self.tool_class.name,
            "tip": list(self.tip),
            "orientation": self.orientation,
            "articulation": {
                "bend_angle": self.articulation.bend_angle,
                "opening_angle": self.articulation.opening_angle,
            },
            "present": self.present,
        }

    @classmethod
    def from_jsonable(cls, doc):
        return cls(
            tool_class=ToolClass[doc["tool_class"]],
            tip=tuple(doc["tip"]),
            orientation=doc["orientation"],
            articulation=Articulation(
                doc["articulation"]["bend_angle"],
                doc["articulation"]["opening_angle"],
            ),
            present=doc["present"],
        )


def _ellipse_to_jsonable(e: Ellipse):
    return {"cx": e.cx, "cy": e.cy, "phi": e.phi, "a": e.a, "b": e.b}


def _ellipse_from_jsonable(doc):
    return Ellipse(doc["cx"], doc["cy"], doc["phi"], doc["a"], doc["b"])


@dataclass(frozen=True)
class AnatomyState:
    globe_translation: tuple[float, float]
    globe_rotation: GlobeRotation
    iris: Ellipse
    pupil: Ellipse

    def __post_init__(self):
        object.__setattr__(
            self,
            "globe_translation",
            (float(self.globe_translation[0]), float(self.globe_translation[1])),
        )
        if self.pupil.a > self.iris.a or self.pupil.b > self.iris.b:
            raise InvariantViolation("pupil axes exceed iris axes")
        if not self.iris.contains(self.pupil.cx, self.pupil.cy):
            raise InvariantViolation("pupil centroid outside iris")

    @property
    def rotation_displacement(self):
        """Centroid displacement of iris/pupil induced by yaw/pitch, using the
        iris semi-major axis as the projected cap radius."""
        d = rotation_to_displacement(self.globe_rotation, self.iris.a)
        return (float(d[0]), float(d[1]))

    def iris_world(self) -> Ellipse:
        dx, dy = self.globe_translation
        rx, ry = self.rotation_displacement
        return self.iris.translated(dx + rx, dy + ry)

    def pupil_world(self) -> Ellipse:
        dx, dy = self.globe_translation
        rx, ry = self.rotation_displacement
        return self.pupil.translated(dx + rx, dy + ry)

    def to_jsonable(self):
        return {
            "globe_translation": list(self.globe_translation),
            "globe_rotation": {
                "yaw": self.globe_rotation.yaw,
                "pitch": self.globe_rotation.pitch,
            },
            "iris": _ellipse_to_jsonable(self.iris),
            "pupil": _ellipse_to_jsonable(self.pupil),
        }

    @classmethod
    def from_jsonable(cls, doc):
        return cls(
            globe_translation=tuple(doc["globe_translation"]),
            globe_rotation=GlobeRotation(
                doc["globe_rotation"]["yaw"], doc["globe_rotation"]["pitch"]
            ),
            iris=_ellipse_from_jsonable(doc["iris"]),
            pupil=_ellipse_from_jsonable(doc["pupil"]),
        )


def default_anatomy() -> AnatomyState:
    return AnatomyState(
        globe_translation=(0.0, 0.0),
        globe_rotation=GlobeRotation(0.0, 0.0),
        iris=Ellipse(0.0, 0.0, 0.0, 0.52, 0.50),
        pupil=Ellipse(0.0, 0.0, 0.0, 0.22, 0.21),
    )


@dataclass(frozen=True)
class SimState:
    anatomy: AnatomyState
    tools: tuple[ToolState, ...] = ()
    frame_index: int = 0
    globe_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tools", tuple(self.tools))
        if self.globe_scale <= 0:
            raise InvariantViolation("globe_scale must be positive")
        if self.frame_index < 0:
            raise InvariantViolation("frame_index must be nonnegative")
        classes = [t.tool_class for t in self.tools]
        if len(set(classes)) != len(classes):
            raise InvariantViolation("duplicate tool_class in state")
        if classes != sorted(classes):
            raise InvariantViolation("tools must be ordered by tool_class")

    def tool(self, cls: ToolClass) -> ToolState | None:
        for t in self.tools:
            if t.tool_class == cls:
                return t
        return None

    def with_tools(self, tools) -> "SimState":
        return replace(self, tools=tuple(sorted(tools, key=lambda t: t.tool_class)))

    @property
    def globe_radius(self) -> float:
        return GLOBE_RADIUS * self.globe_scale

    def to_jsonable(self):
        return {
            "anatomy": self.anatomy.to_jsonable(),
            "tools": [t.to_jsonable() for t in self.tools],
            "frame_index": self.frame_index,
            "globe_scale": self.globe_scale,
        }

    @classmethod
    def from_jsonable(cls, doc):
        return cls(
            anatomy=AnatomyState.from_jsonable(doc["anatomy"]),
            tools=tuple(ToolState.from_jsonable(t) for t in doc["tools"]),
            frame_index=doc["frame_index"],
            globe_scale=doc["globe_scale"],
        )


@dataclass(frozen=True)
class KinematicScript:
    """Time-indexed anatomy + tool parameters, recovered or authored."""

    fps: float
    frames: tuple[tuple[AnatomyState, tuple[ToolState, ...]], ...]
    source_id: str = ""
    phase_labels: tuple[str, ...] | None = None
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        if self.fps <= 0:
            raise InvariantViolation("fps must be positive")
        frames = tuple((a, tuple(ts)) for a, ts in self.frames)
        object.__setattr__(self, "frames", frames)
        if self.phase_labels is not None:
            object.__setattr__(self, "phase_labels", tuple(self.phase_labels))
            if len(self.phase_labels) != len(frames):
                raise InvariantViolation("phase_labels length != frame count")
        if frames:
            order = [t.tool_class for t in frames[0][1]]
            for i, (_, ts) in enumerate(frames):
                if [t.tool_class for t in ts] != order:
                    raise InvariantViolation(f"inconsistent tool ordering at frame {i}")

    def __len__(self):
        return len(self.frames)

    def to_jsonable(self):
        return {
            "fps": self.fps,
            "source_id": self.source_id,
            "phase_labels": list(self.phase_labels) if self.phase_labels else None,
            "provenance": list(self.provenance),
            "frames": [
                {"anatomy": a.to_jsonable(), "tools": [t.to_jsonable() for t in ts]}
                for a, ts in self.frames
            ],
        }

    @classmethod
    def from_jsonable(cls, doc):
        return cls(
            fps=doc["fps"],
            source_id=doc.get("source_id", ""),
            phase_labels=tuple(doc["phase_labels"]) if doc.get("phase_labels") else None,
            provenance=tuple(doc.get("provenance", ())),
            frames=tuple(
                (
                    AnatomyState.from_jsonable(f["anatomy"]),
                    tuple(ToolState.from_jsonable(t) for t in f["tools"]),
                )
                for f in doc["frames"]
            ),
        )
