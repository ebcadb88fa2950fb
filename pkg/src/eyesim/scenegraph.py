"""Scene graphs from label rasters.

Nodes are 8-connected components per class id (background excluded) with
exact per-pixel centroid, per-axis standard deviation, and mean flow; the
edge set is dense over node pairs, with offsets and a boundary-contact
flag. Node order is canonical, so serialization is stable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import CapacityExceeded, DimensionMismatch, UnknownClassId
from .renderer import CLASS_NAMES, FlowField, LabelRaster

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)
FEATURE_LAYOUT_VERSION = "1"

# fixed class vocabulary for feature one-hots (canonical id order)
FEATURE_CLASS_IDS = tuple(sorted(cid for cid in CLASS_NAMES if cid != 0))


@dataclass(frozen=True)
class SceneNode:
    node_id: int
    class_id: int
    centroid: tuple[float, float]  # (x, y) pixels
    spread: tuple[float, float]  # per-axis standard deviation
    mean_flow: tuple[float, float]
    pixel_count: int

    def to_jsonable(self):
        return {
            "node_id": self.node_id,
            "class_id": self.class_id,
            "centroid": list(self.centroid),
            "spread": list(self.spread),
            "mean_flow": list(self.mean_flow),
            "pixel_count": self.pixel_count,
        }


@dataclass(frozen=True)
class SceneEdge:
    src: int
    dst: int
    relative_offset: tuple[float, float]
    contact: bool

    def to_jsonable(self):
        return {
            "src": self.src,
            "dst": self.dst,
            "relative_offset": list(self.relative_offset),
            "contact": self.contact,
        }


@dataclass(frozen=True)
class SceneGraph:
    frame_index: int
    width: int
    height: int
    nodes: tuple[SceneNode, ...]
    edges: tuple[SceneEdge, ...]

    def to_jsonable(self):
        return {
            "frame_index": self.frame_index,
            "width": self.width,
            "height": self.height,
            "nodes": [n.to_jsonable() for n in self.nodes],
            "edges": [e.to_jsonable() for e in self.edges],
        }

    @classmethod
    def from_jsonable(cls, doc):
        return cls(
            frame_index=doc["frame_index"],
            width=doc["width"],
            height=doc["height"],
            nodes=tuple(
                SceneNode(
                    n["node_id"],
                    n["class_id"],
                    tuple(n["centroid"]),
                    tuple(n["spread"]),
                    tuple(n["mean_flow"]),
                    n["pixel_count"],
                )
                for n in doc["nodes"]
            ),
            edges=tuple(
                SceneEdge(e["src"], e["dst"], tuple(e["relative_offset"]), e["contact"])
                for e in doc["edges"]
            ),
        )


def _contact_pairs(comp_map):
    """Set of unordered global-component-id pairs that touch 8-adjacently."""
    pairs = set()
    shifts = ((0, 1), (1, 0), (1, 1), (1, -1))
    for dy, dx in shifts:
        h, w = comp_map.shape
        y0a, y1a = max(0, dy), min(h, h + dy)
        x0a, x1a = max(0, dx), min(w, w + dx)
        a = comp_map[y0a:y1a, x0a:x1a]
        b = comp_map[y0a - dy : y1a - dy, x0a - dx : x1a - dx]
        both = (a > 0) & (b > 0) & (a != b)
        if both.any():
            av = a[both]
            bv = b[both]
            lo = np.minimum(av, bv)
            hi = np.maximum(av, bv)
            pairs.update(zip(lo.tolist(), hi.tolist()))
    return pairs


def build_graph(raster: LabelRaster, flow: FlowField, frame_index: int = 0) -> SceneGraph:
    labels = raster.labels
    if flow.u.shape != labels.shape or flow.v.shape != labels.shape:
        raise DimensionMismatch("raster and flow dimensions disagree")

    comp_map = np.zeros(labels.shape, dtype=np.int32)
    records = []  # (class_id, global component id, pixel index array)
    next_id = 1
    for cid in np.unique(labels):
        cid = int(cid)
        if cid == 0:
            continue
        lab, n = ndimage.label(labels == cid, structure=EIGHT_CONNECTED)
        for comp in range(1, n + 1):
            sel = lab == comp
            comp_map[sel] = next_id
            records.append((cid, next_id, sel))
            next_id += 1

    raw_nodes = []
    for cid, gid, sel in records:
        ys, xs = np.nonzero(sel)
        cx = xs.mean()
        cy = ys.mean()
        sx = float(np.sqrt(((xs - cx) ** 2).mean()))
        sy = float(np.sqrt(((ys - cy) ** 2).mean()))
        mfu = float(flow.u[sel].mean())
        mfv = float(flow.v[sel].mean())
        raw_nodes.append((cid, (float(cx), float(cy)), (sx, sy), (mfu, mfv), int(xs.size), gid))

    raw_nodes.sort(key=lambda r: (r[0], r[1][1], r[1][0]))
    nodes = tuple(
        SceneNode(i, cid, cen, spread, mf, count)
        for i, (cid, cen, spread, mf, count, _gid) in enumerate(raw_nodes)
    )
    gid_to_node = {r[5]: i for i, r in enumerate(raw_nodes)}
    touching = _contact_pairs(comp_map)
    touching_nodes = {
        tuple(sorted((gid_to_node[a], gid_to_node[b]))) for a, b in touching
    }

    edges = []
    for i in range(len(nodes)):
        for j in range(len(nodes)):
            if i == j:
                continue
            off = (
                nodes[j].centroid[0] - nodes[i].centroid[0],
                nodes[j].centroid[1] - nodes[i].centroid[1],
            )
            edges.append(
                SceneEdge(i, j, off, tuple(sorted((i, j))) in touching_nodes)
            )
    return SceneGraph(
        frame_index=frame_index,
        width=raster.width,
        height=raster.height,
        nodes=nodes,
        edges=tuple(edges),
    )


@dataclass(frozen=True)
class GraphFeatures:
    layout_version: str
    max_nodes: int
    block_size: int
    values: np.ndarray

    def to_jsonable(self):
        return {
            "layout_version": self.layout_version,
            "max_nodes": self.max_nodes,
            "block_size": self.block_size,
            "values": self.values.tolist(),
        }


def graph_features(graph: SceneGraph, max_nodes: int) -> GraphFeatures:
    """Fixed-length per-node feature blocks in canonical node order.

    Block layout: [class one-hot | centroid / (w, h) | spread / (w, h) |
    mean_flow / (w, h) | pixel fraction], zero-padded to ``max_nodes``.
    """
    if len(graph.nodes) > max_nodes:
        raise CapacityExceeded(f"{len(graph.nodes)} nodes > capacity {max_nodes}")
    n_cls = len(FEATURE_CLASS_IDS)
    block = n_cls + 2 + 2 + 2 + 1
    values = np.zeros(max_nodes * block, dtype=np.float64)
    cls_index = {cid: i for i, cid in enumerate(FEATURE_CLASS_IDS)}
    w, h = float(graph.width), float(graph.height)
    for i, node in enumerate(graph.nodes):
        base = i * block
        if node.class_id not in cls_index:
            raise UnknownClassId(f"class id {node.class_id} not in feature vocabulary")
        values[base + cls_index[node.class_id]] = 1.0
        values[base + n_cls + 0] = node.centroid[0] / w
        values[base + n_cls + 1] = node.centroid[1] / h
        values[base + n_cls + 2] = node.spread[0] / w
        values[base + n_cls + 3] = node.spread[1] / h
        values[base + n_cls + 4] = node.mean_flow[0] / w
        values[base + n_cls + 5] = node.mean_flow[1] / h
        values[base + n_cls + 6] = node.pixel_count / (w * h)
    return GraphFeatures(FEATURE_LAYOUT_VERSION, max_nodes, block, values)


def graph_triplets(graph: SceneGraph, label_names=None):
    """Subject-relation-object text lines, one per edge.

    Relation is ``touches`` for contacting pairs, else the dominant offset
    axis (left-of / right-of / above / below).
    """
    names = dict(CLASS_NAMES if label_names is None else label_names)
    lines = []
    for e in sorted(graph.edges, key=lambda e_: (e_.src, e_.dst)):
        src = graph.nodes[e.src]
        dst = graph.nodes[e.dst]
        for node in (src, dst):
            if node.class_id not in names:
                raise UnknownClassId(f"class id {node.class_id} has no name")
        dx, dy = e.relative_offset
        if e.contact:
            rel = "touches"
        elif abs(dx) >= abs(dy):
            rel = "left-of" if dx > 0 else "right-of"
        else:
            rel = "above" if dy > 0 else "below"
        lines.append(f"{names[src.class_id]} {rel} {names[dst.class_id]}")
    return lines
