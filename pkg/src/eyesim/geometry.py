"""Shared geometric primitives.

Ellipses fitted from pixel moments, closed-form 2D similarity alignment,
the image<->simulator coordinate map, and the spherical-cap mapping from
pupil-centroid residuals to globe yaw/pitch.

Conventions: points are (x, y) with x = column, y = row; angles are in
radians, measured counterclockwise from the +x axis in that frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRegion, RankDeficient, TooFewPixels

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Ellipse:
    """Centroid (cx, cy), orientation phi in [0, pi), semi-axes a >= b > 0."""

    cx: float
    cy: float
    phi: float
    a: float
    b: float

    def __post_init__(self):
        if not (self.a >= self.b > 0):
            raise ValueError(f"require a >= b > 0, got a={self.a}, b={self.b}")
        object.__setattr__(self, "phi", self.phi % math.pi)

    def contains(self, x, y) -> bool:
        """Pixel-center point-in-ellipse test (boundary counts as inside)."""
        c, s = math.cos(self.phi), math.sin(self.phi)
        dx, dy = x - self.cx, y - self.cy
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0

    def translated(self, dx, dy) -> "Ellipse":
        return Ellipse(self.cx + dx, self.cy + dy, self.phi, self.a, self.b)


@dataclass(frozen=True)
class SimilarityTransform:
    """dst = scale * R(rot) @ src + (tx, ty)."""

    tx: float
    ty: float
    rot: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def apply(self, points):
        pts = np.asarray(points, dtype=float)
        c, s = math.cos(self.rot), math.sin(self.rot)
        rot = np.array([[c, -s], [s, c]])
        return self.scale * pts @ rot.T + np.array([self.tx, self.ty])

    def inverse(self) -> "SimilarityTransform":
        c, s = math.cos(-self.rot), math.sin(-self.rot)
        inv_scale = 1.0 / self.scale
        tx = -inv_scale * (c * self.tx - s * self.ty)
        ty = -inv_scale * (s * self.tx + c * self.ty)
        return SimilarityTransform(tx, ty, -self.rot, inv_scale)


@dataclass(frozen=True)
class GlobeRotation:
    """Globe orientation; yaw and pitch clamped to the visible hemisphere."""

    yaw: float
    pitch: float

    def __post_init__(self):
        half = math.pi / 2
        object.__setattr__(self, "yaw", min(half, max(-half, self.yaw)))
        object.__setattr__(self, "pitch", min(half, max(-half, self.pitch)))


@dataclass(frozen=True)
class CoordinateMap:
    """Affine map between pixel coordinates and simulator units.

    Pixels are centered on the image, divided by max(width, height)/2 so the
    image fits in the [-1, 1]^2 square (aspect preserved), then multiplied
    by sim_scale.
    """

    image_width: int
    image_height: int
    sim_scale: float = 1.0

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0 or self.sim_scale <= 0:
            raise ValueError("dimensions and sim_scale must be positive")

    @property
    def px_per_unit(self) -> float:
        return max(self.image_width, self.image_height) / 2.0 / self.sim_scale

    def image_to_sim(self, p):
        p = np.asarray(p, dtype=float)
        center = np.array([self.image_width / 2.0, self.image_height / 2.0])
        return (p - center) / self.px_per_unit

    def sim_to_image(self, p):
        p = np.asarray(p, dtype=float)
        center = np.array([self.image_width / 2.0, self.image_height / 2.0])
        return p * self.px_per_unit + center

    def length_to_sim(self, d: float) -> float:
        return float(d) / self.px_per_unit

    def length_to_image(self, d: float) -> float:
        return float(d) * self.px_per_unit


def map_image_to_sim(p, m: CoordinateMap):
    return m.image_to_sim(p)


def map_sim_to_image(p, m: CoordinateMap):
    return m.sim_to_image(p)


def mask_moments(mask):
    """Zeroth, first and second central moments of a binary mask.

    Returns (count, centroid (x, y), covariance [[sxx, sxy], [sxy, syy]]).
    """
    ys, xs = np.nonzero(np.asarray(mask))
    n = xs.size
    if n == 0:
        return 0, np.zeros(2), np.zeros((2, 2))
    cx = xs.mean()
    cy = ys.mean()
    dx = xs - cx
    dy = ys - cy
    sxx = float(dx @ dx) / n
    syy = float(dy @ dy) / n
    sxy = float(dx @ dy) / n
    return n, np.array([cx, cy]), np.array([[sxx, sxy], [sxy, syy]])


def fit_ellipse_moments(mask) -> Ellipse:
    """Fit an ellipse whose moments match the mask's pixel mass.

    Centroid from the first moments, orientation and axes from the
    eigendecomposition of the second-central-moment matrix; semi-axis
    lengths are 2*sqrt(eigenvalue) so a filled ellipse fits itself.
    """
    n, cen, cov = mask_moments(mask)
    if n < 5:
        raise TooFewPixels(f"need >= 5 foreground pixels, got {n}")
    evals, evecs = np.linalg.eigh(cov)  # ascending
    if evals[0] < 1e-12:
        raise DegenerateRegion("pixel mass is collinear")
    major = evecs[:, 1]
    phi = math.atan2(major[1], major[0]) % math.pi
    a = 2.0 * math.sqrt(evals[1])
    b = 2.0 * math.sqrt(evals[0])
    return Ellipse(float(cen[0]), float(cen[1]), phi, a, b)


def fit_similarity(src_points, dst_points):
    """Least-squares similarity (Umeyama, 2D) aligning src onto dst.

    Returns (SimilarityTransform, residual RMS in dst units).
    """
    src = np.asarray(src_points, dtype=float)
    dst = np.asarray(dst_points, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("point lists must both be (K, 2)")
    if src.shape[0] < 2:
        raise ValueError("need at least 2 correspondences")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    src_c = src - mu_s
    dst_c = dst - mu_d
    var_s = (src_c ** 2).sum() / src.shape[0]
    if var_s < 1e-18:
        raise RankDeficient("all source points coincide")

    cov = dst_c.T @ src_c / src.shape[0]
    u, d, vt = np.linalg.svd(cov)
    sign = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    s_diag = np.array([1.0, sign if sign != 0 else 1.0])
    rot_mat = u @ np.diag(s_diag) @ vt
    scale = float((d * s_diag).sum() / var_s)
    if scale <= 0:
        raise RankDeficient("degenerate configuration (non-positive scale)")
    rot = math.atan2(rot_mat[1, 0], rot_mat[0, 0])
    t = mu_d - scale * rot_mat @ mu_s
    xform = SimilarityTransform(float(t[0]), float(t[1]), rot, scale)
    res = xform.apply(src) - dst
    rms = math.sqrt(float((res ** 2).sum()) / src.shape[0])
    return xform, rms


def residual_to_rotation(residual, globe_radius_px: float) -> GlobeRotation:
    """Globally-compensated pupil displacement -> yaw/pitch on a spherical cap.

    +yaw looks image-right, +pitch looks image-up (image y grows downward).
    Displacements beyond the cap radius clamp to +-pi/2.
    """
    if globe_radius_px <= 0:
        raise ValueError("globe radius must be positive")
    dx, dy = float(residual[0]), float(residual[1])
    yaw = math.asin(min(1.0, max(-1.0, dx / globe_radius_px)))
    pitch = math.asin(min(1.0, max(-1.0, -dy / globe_radius_px)))
    return GlobeRotation(yaw, pitch)


def rotation_to_displacement(rot: GlobeRotation, globe_radius: float):
    """Inverse of residual_to_rotation, in the radius' own units."""
    return np.array(
        [globe_radius * math.sin(rot.yaw), -globe_radius * math.sin(rot.pitch)]
    )


def wrap_angle(theta: float) -> float:
    """Wrap to [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi


def angle_diff(x: float, y: float) -> float:
    """Smallest signed difference x - y, in [-pi, pi)."""
    return wrap_angle(x - y)


def axis_angle_diff(x: float, y: float) -> float:
    """Smallest difference between undirected axes (period pi)."""
    d = (x - y) % math.pi
    return min(d, math.pi - d)
