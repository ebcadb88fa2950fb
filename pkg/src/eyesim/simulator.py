"""Rule-based transition system.

One pure transition function serves scripted replay and interactive
stepping. Rules apply in a fixed, documented order after the action's
deltas: articulation clamp, yaw/pitch clamp, globe-surface carry of
engaged tools, scenario-bounds clamp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BoundsTooSmall, EmptySequence, InvariantViolation, UnknownToolClass
from .geometry import CoordinateMap, GlobeRotation, wrap_angle
from .renderer import render
from .state import (
    AnatomyState,
    Articulation,
    KinematicScript,
    SimState,
    ToolState,
    clamp_articulation,
    default_anatomy,
)
from .tools import BEND_CLASSES, JAW_CLASSES, ToolClass

DEFAULT_BOUNDS = (-1.0, -1.0, 1.0, 1.0)


@dataclass(frozen=True)
class ToolDelta:
    tool_class: ToolClass
    delta_tip: tuple[float, float] = (0.0, 0.0)
    delta_orientation: float = 0.0
    delta_bend: float = 0.0
    delta_opening: float = 0.0
    spawn: ToolState | None = None
    despawn: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tool_class", ToolClass(self.tool_class))
        if self.spawn is not None and self.despawn:
            raise InvariantViolation("spawn and despawn are mutually exclusive")
        if self.spawn is not None and self.spawn.tool_class != self.tool_class:
            raise InvariantViolation("spawn state tool_class mismatch")

    def to_jsonable(self):
        return {
            "tool_class": self.tool_class.name,
            "delta_tip": list(self.delta_tip),
            "delta_orientation": self.delta_orientation,
            "delta_bend": self.delta_bend,
            "delta_opening": self.delta_opening,
            "spawn": self.spawn.to_jsonable() if self.spawn else None,
            "despawn": self.despawn,
        }

    @classmethod
    def from_jsonable(cls, doc):
        return cls(
            tool_class=ToolClass[doc["tool_class"]],
            delta_tip=tuple(doc.get("delta_tip", (0.0, 0.0))),
            delta_orientation=doc.get("delta_orientation", 0.0),
            delta_bend=doc.get("delta_bend", 0.0),
            delta_opening=doc.get("delta_opening", 0.0),
            spawn=ToolState.from_jsonable(doc["spawn"]) if doc.get("spawn") else None,
            despawn=doc.get("despawn", False),
        )


@dataclass(frozen=True)
class AnatomyDelta:
    delta_translation: tuple[float, float] = (0.0, 0.0)
    delta_yaw: float = 0.0
    delta_pitch: float = 0.0

    def to_jsonable(self):
        return {
            "delta_translation": list(self.delta_translation),
            "delta_yaw": self.delta_yaw,
            "delta_pitch": self.delta_pitch,
        }

    @classmethod
    def from_jsonable(cls, doc):
        return cls(
            delta_translation=tuple(doc.get("delta_translation", (0.0, 0.0))),
            delta_yaw=doc.get("delta_yaw", 0.0),
            delta_pitch=doc.get("delta_pitch", 0.0),
        )


@dataclass(frozen=True)
class Action:
    tool_deltas: tuple[ToolDelta, ...] = ()
    anatomy_delta: AnatomyDelta | None = None

    def __post_init__(self):
        object.__setattr__(self, "tool_deltas", tuple(self.tool_deltas))
        classes = [d.tool_class for d in self.tool_deltas]
        if len(set(classes)) != len(classes):
            raise InvariantViolation("at most one delta per tool_class")

    def to_jsonable(self):
        return {
            "tool_deltas": [d.to_jsonable() for d in self.tool_deltas],
            "anatomy_delta": self.anatomy_delta.to_jsonable() if self.anatomy_delta else None,
        }

    @classmethod
    def from_jsonable(cls, doc):
        unknown = set(doc) - {"tool_deltas", "anatomy_delta"}
        if unknown:
            raise ValueError(f"unknown action fields {sorted(unknown)}")
        return cls(
            tool_deltas=tuple(ToolDelta.from_jsonable(d) for d in doc.get("tool_deltas", ())),
            anatomy_delta=AnatomyDelta.from_jsonable(doc["anatomy_delta"])
            if doc.get("anatomy_delta")
            else None,
        )


@dataclass(frozen=True)
class ScenarioSpec:
    initial_state: SimState
    seed: int = 0
    bounds: tuple[float, float, float, float] = DEFAULT_BOUNDS
    schedule: KinematicScript | tuple[Action, ...] | None = None

    def to_jsonable(self):
        if self.schedule is None:
            sched = None
        elif isinstance(self.schedule, KinematicScript):
            sched = {"kind": "script", "script": self.schedule.to_jsonable()}
        else:
            sched = {"kind": "actions", "actions": [a.to_jsonable() for a in self.schedule]}
        return {
            "initial_state": self.initial_state.to_jsonable(),
            "seed": self.seed,
            "bounds": list(self.bounds),
            "schedule": sched,
        }

    @classmethod
    def from_jsonable(cls, doc):
        sched = doc.get("schedule")
        if sched is None:
            schedule = None
        elif sched["kind"] == "script":
            schedule = KinematicScript.from_jsonable(sched["script"])
        else:
            schedule = tuple(Action.from_jsonable(a) for a in sched["actions"])
        return cls(
            initial_state=SimState.from_jsonable(doc["initial_state"]),
            seed=doc.get("seed", 0),
            bounds=tuple(doc.get("bounds", DEFAULT_BOUNDS)),
            schedule=schedule,
        )


def _anchor(anatomy: AnatomyState):
    """Carry anchor: globe center plus the yaw/pitch surface displacement.
    Engaged tool tips ride this point."""
    tx, ty = anatomy.globe_translation
    rx, ry = anatomy.rotation_displacement
    return (tx + rx, ty + ry)


@dataclass(frozen=True)
class Simulator:
    """Transition rules bound to a coordinate map and scenario bounds."""

    coord_map: CoordinateMap = field(default_factory=lambda: CoordinateMap(128, 128, 1.0))
    bounds: tuple[float, float, float, float] = DEFAULT_BOUNDS
    templates: object = None

    def render(self, state: SimState):
        return render(state, self.coord_map, templates=self.templates)

    def transition(self, state: SimState, action: Action, want_raster: bool = True):
        """Apply one action; returns (new state, LabelRaster or None).

        Pure: identical (state, action) inputs give bitwise-identical
        outputs. ``want_raster=False`` skips rasterization for callers that
        only need the state stream.
        """
        tools = {t.tool_class: t for t in state.tools}

        for d in action.tool_deltas:
            if d.despawn:
                if d.tool_class in tools:
                    tools[d.tool_class] = replace(tools[d.tool_class], present=False)
                continue
            if d.spawn is not None:
                art, _ = clamp_articulation(
                    d.spawn.articulation.bend_angle, d.spawn.articulation.opening_angle
                )
                tools[d.tool_class] = replace(d.spawn, present=True, articulation=art)
                continue
            cur = tools.get(d.tool_class)
            if cur is None or not cur.present:
                raise UnknownToolClass(
                    f"delta for {d.tool_class.name} which is not present"
                )
            # rule 1: articulation clamp
            art, _ = clamp_articulation(
                cur.articulation.bend_angle + d.delta_bend,
                cur.articulation.opening_angle + d.delta_opening,
            )
            tools[d.tool_class] = replace(
                cur,
                tip=(cur.tip[0] + d.delta_tip[0], cur.tip[1] + d.delta_tip[1]),
                orientation=wrap_angle(cur.orientation + d.delta_orientation),
                articulation=art,
            )

        # rule 2: yaw/pitch clamp (GlobeRotation clamps on construction)
        anatomy = state.anatomy
        if action.anatomy_delta is not None:
            ad = action.anatomy_delta
            anatomy = replace(
                anatomy,
                globe_translation=(
                    anatomy.globe_translation[0] + ad.delta_translation[0],
                    anatomy.globe_translation[1] + ad.delta_translation[1],
                ),
                globe_rotation=GlobeRotation(
                    anatomy.globe_rotation.yaw + ad.delta_yaw,
                    anatomy.globe_rotation.pitch + ad.delta_pitch,
                ),
            )

        # rule 3: globe-surface carry of engaged tools
        old_anchor = _anchor(state.anatomy)
        new_anchor = _anchor(anatomy)
        anchor_moved = new_anchor != old_anchor
        radius = state.globe_radius
        xmin, ymin, xmax, ymax = self.bounds
        for cls, t in tools.items():
            if not t.present:
                continue
            offx = t.tip[0] - old_anchor[0]
            offy = t.tip[1] - old_anchor[1]
            if anchor_moved and math.hypot(offx, offy) <= radius:
                t = replace(t, tip=(new_anchor[0] + offx, new_anchor[1] + offy))
            # rule 4: scenario bounds clamp
            bx = min(xmax, max(xmin, t.tip[0]))
            by = min(ymax, max(ymin, t.tip[1]))
            if (bx, by) != t.tip:
                t = replace(t, tip=(bx, by))
            tools[cls] = t

        new_state = SimState(
            anatomy=anatomy,
            tools=tuple(sorted(tools.values(), key=lambda t_: t_.tool_class)),
            frame_index=state.frame_index + 1,
            globe_scale=state.globe_scale,
        )
        raster = self.render(new_state)[0] if want_raster else None
        return new_state, raster

    def script_action(self, state: SimState, anatomy: AnatomyState, tool_targets):
        """Action moving ``state`` onto absolute script targets in one step.

        Tip deltas pre-compensate the carry rule so that the post-transition
        tip lands on the target.
        """
        tool_deltas = []
        cur_by_class = {t.tool_class: t for t in state.tools}
        old_anchor = _anchor(state.anatomy)
        # predict the post-transition anchor exactly as transition builds it:
        # the state's iris/pupil ellipses persist, only translation and
        # rotation come from the script frame
        new_anchor = _anchor(
            replace(
                state.anatomy,
                globe_translation=anatomy.globe_translation,
                globe_rotation=anatomy.globe_rotation,
            )
        )
        radius = state.globe_radius
        for target in tool_targets:
            cur = cur_by_class.get(target.tool_class)
            if not target.present:
                if cur is not None and cur.present:
                    tool_deltas.append(ToolDelta(target.tool_class, despawn=True))
                continue
            if cur is None or not cur.present:
                tool_deltas.append(ToolDelta(target.tool_class, spawn=target))
                continue
            dx = target.tip[0] - new_anchor[0]
            dy = target.tip[1] - new_anchor[1]
            if new_anchor != old_anchor and math.hypot(dx, dy) <= radius:
                # engaged at the target: offset from the new anchor survives
                tip_pre = (old_anchor[0] + dx, old_anchor[1] + dy)
            else:
                tip_pre = target.tip
            tool_deltas.append(
                ToolDelta(
                    target.tool_class,
                    delta_tip=(tip_pre[0] - cur.tip[0], tip_pre[1] - cur.tip[1]),
                    delta_orientation=wrap_angle(target.orientation - cur.orientation),
                    delta_bend=target.articulation.bend_angle - cur.articulation.bend_angle,
                    delta_opening=target.articulation.opening_angle
                    - cur.articulation.opening_angle,
                )
            )
        ad = AnatomyDelta(
            delta_translation=(
                anatomy.globe_translation[0] - state.anatomy.globe_translation[0],
                anatomy.globe_translation[1] - state.anatomy.globe_translation[1],
            ),
            delta_yaw=anatomy.globe_rotation.yaw - state.anatomy.globe_rotation.yaw,
            delta_pitch=anatomy.globe_rotation.pitch - state.anatomy.globe_rotation.pitch,
        )
        return Action(tool_deltas=tuple(tool_deltas), anatomy_delta=ad)

    def replay(self, script: KinematicScript, globe_scale: float = 1.0):
        """Run a script through the transition function.

        Returns (states, rasters), one per script frame; deterministic.
        """
        if len(script) == 0:
            raise EmptySequence("empty script")
        anat0, tools0 = script.frames[0]
        state = SimState(
            anatomy=anat0,
            tools=tuple(sorted(tools0, key=lambda t: t.tool_class)),
            frame_index=0,
            globe_scale=globe_scale,
        )
        states = [state]
        rasters = [self.render(state)[0]]
        for anat, tool_targets in script.frames[1:]:
            action = self.script_action(state, anat, tool_targets)
            state, raster = self.transition(state, action)
            states.append(state)
            rasters.append(raster)
        return states, rasters


def _ray_exit_length(origin, direction, bounds, margin=0.03):
    """Largest L with origin - L*direction inside bounds (minus margin)."""
    xmin, ymin, xmax, ymax = bounds
    xmin, ymin, xmax, ymax = xmin + margin, ymin + margin, xmax - margin, ymax - margin
    best = math.inf
    ox, oy = origin
    dx, dy = -direction[0], -direction[1]
    for d, o, lo, hi in ((dx, ox, xmin, xmax), (dy, oy, ymin, ymax)):
        if abs(d) < 1e-12:
            if not (lo <= o <= hi):
                return 0.0
            continue
        t1 = (lo - o) / d
        t2 = (hi - o) / d
        best = min(best, max(t1, t2))
    return max(0.0, best)


def generate_ood_scenario(
    tool_classes,
    entry_angles,
    motion_primitive,
    seed,
    base_anatomy: AnatomyState | None = None,
    num_frames: int = 48,
    fps: float = 4.0,
    bounds=DEFAULT_BOUNDS,
    entry_margin: float = 0.03,
) -> KinematicScript:
    """Author a script with novel entry directions and tool co-occurrence.

    Each tool spawns at the bounds edge on its entry ray toward the pupil
    and stays present in every frame. The entry direction, measured as the
    angle of the first-frame tip-to-pupil vector, equals the request
    exactly. ``motion_primitive`` is one of approach / sweep / circular.
    """
    if len(tool_classes) != len(entry_angles):
        raise ValueError("tool_classes and entry_angles must have equal length")
    if motion_primitive not in ("approach", "sweep", "circular"):
        raise ValueError(f"unknown motion primitive {motion_primitive!r}")
    if num_frames < 2:
        raise ValueError("need at least 2 frames")
    if base_anatomy is None:
        base_anatomy = default_anatomy()

    rng = np.random.default_rng(seed)
    pupil = base_anatomy.pupil_world()
    px, py = pupil.cx, pupil.cy
    iris_a = base_anatomy.iris_world().a
    xmin, ymin, xmax, ymax = bounds

    # one orbit rate for the whole scenario keeps co-present tools at their
    # requested angular separation while they circle
    orbit_rate = (0.6 + 0.8 * rng.random()) * (1 if rng.random() < 0.5 else -1)
    per_tool = []
    for cls, ang in zip(tool_classes, entry_angles):
        cls = ToolClass(cls)
        direction = (math.cos(ang), math.sin(ang))
        l0 = _ray_exit_length((px, py), direction, bounds, margin=entry_margin)
        if l0 <= iris_a + 0.02:
            raise BoundsTooSmall(
                f"entry at angle {ang:.3f} cannot be placed outside the iris"
            )
        l_final = 0.75 * iris_a  # within 1.2x of the pupil centroid distance budget
        sweep_amp = 0.05 + 0.04 * rng.random()
        sweep_cycles = 1.0 + rng.integers(1, 3)
        open_amp = 0.05 + 0.05 * rng.random()
        bend_amp = (0.02 + 0.03 * rng.random()) * (1 if rng.random() < 0.5 else -1)
        per_tool.append(
            (cls, ang, direction, l0, l_final, sweep_amp, sweep_cycles, orbit_rate,
             open_amp, bend_amp)
        )

    frames = []
    for t in range(num_frames):
        s = t / (num_frames - 1)
        tool_states = []
        for (cls, ang, direction, l0, l_final, sweep_amp, sweep_cycles, orbit_rate,
             open_amp, bend_amp) in per_tool:
            if motion_primitive == "approach":
                dist = l0 + (l_final - l0) * s
                tip = (px - dist * direction[0], py - dist * direction[1])
            elif motion_primitive == "sweep":
                dist = l0 + (l_final - l0) * s
                off = sweep_amp * math.sin(2.0 * math.pi * sweep_cycles * s) * min(
                    1.0, 3.0 * s
                )
                perp = (-direction[1], direction[0])
                tip = (
                    px - dist * direction[0] + off * perp[0],
                    py - dist * direction[1] + off * perp[1],
                )
            else:  # circular
                reach = min(1.0, 3.0 * s)
                dist = l0 + (max(l_final, 0.35 * l0) - l0) * reach
                phi = ang + orbit_rate * s
                tip = (px - dist * math.cos(phi), py - dist * math.sin(phi))
            tip = (
                min(xmax, max(xmin, tip[0])),
                min(ymax, max(ymin, tip[1])),
            )
            theta = math.atan2(py - tip[1], px - tip[0])
            opening = open_amp * 0.5 * (1.0 - math.cos(2.0 * math.pi * s)) if cls in JAW_CLASSES else 0.0
            bend = bend_amp * math.sin(math.pi * s) if cls in BEND_CLASSES else 0.0
            tool_states.append(
                ToolState(
                    tool_class=cls,
                    tip=tip,
                    orientation=theta,
                    articulation=Articulation(bend, opening),
                    present=True,
                )
            )
        tool_states.sort(key=lambda t_: t_.tool_class)
        frames.append((base_anatomy, tuple(tool_states)))

    return KinematicScript(
        fps=fps,
        frames=tuple(frames),
        source_id=f"ood:{motion_primitive}:seed={seed}",
    )
