"""Deterministic 2D cataract-surgery scene engine.

Simulator state/action/transition, kinematics extraction from
segmentation masks, deterministic rasterization with analytic optical
flow, scene graphs, paired-dataset export, and an interactive session
server.
"""

from .geometry import CoordinateMap, Ellipse, GlobeRotation, SimilarityTransform
from .renderer import KERNEL_BACKEND, FlowField, LabelRaster
from .simulator import Action, ScenarioSpec, Simulator, generate_ood_scenario
from .state import AnatomyState, KinematicScript, SimState, ToolState, default_anatomy
from .tools import ToolClass

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AnatomyState",
    "CoordinateMap",
    "Ellipse",
    "FlowField",
    "GlobeRotation",
    "KERNEL_BACKEND",
    "KinematicScript",
    "LabelRaster",
    "ScenarioSpec",
    "SimilarityTransform",
    "SimState",
    "Simulator",
    "ToolClass",
    "ToolState",
    "default_anatomy",
    "generate_ood_scenario",
    "__version__",
]
