"""Deterministic multi-view camera layouts and turntable rendering."""

from __future__ import annotations

import numpy as np

from ..assets import Camera, GaussianSet
from .api import render
from .config import RenderConfig

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def fibonacci_directions(n: int) -> np.ndarray:
    """n unit directions spread over the sphere, rotated so the first one is
    +z (the frontal view)."""
    if n < 1:
        raise ValueError("need at least one view")
    if n == 1:
        return np.array([[0.0, 0.0, 1.0]])
    k = np.arange(n)
    z = 1.0 - (2.0 * k + 1.0) / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = k * GOLDEN_ANGLE
    dirs = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    # rotate dirs[0] onto +z
    a = dirs[0]
    b = np.array([0.0, 0.0, 1.0])
    v = np.cross(a, b)
    c = float(a @ b)
    if np.linalg.norm(v) < 1e-12:
        rot = np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    else:
        vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
        rot = np.eye(3) + vx + vx @ vx / (1.0 + c)
    return dirs @ rot.T


def turntable_cameras(center, radius: float, n_views: int, *, width: int,
                      height: int, bound_radius: float | None = None) -> list:
    """Cameras on a sphere around ``center``, all looking at it.

    Focal length is picked so a ``bound_radius`` ball around the center fills
    roughly 70% of the frame.
    """
    center = np.asarray(center, np.float64)
    if radius <= 0:
        raise ValueError("radius must be positive")
    if bound_radius is None or bound_radius <= 0:
        bound_radius = 0.4 * radius
    f = 0.35 * min(width, height) * radius / bound_radius
    cams = []
    for d in fibonacci_directions(n_views):
        cams.append(Camera.look_at(center + radius * d, center,
                                   fx=f, width=width, height=height))
    return cams


def render_turntable(gaussians: GaussianSet, n_views: int, radius: float,
                     cfg: RenderConfig | None = None, *, width: int = 512,
                     height: int = 512):
    """Render ``n_views`` spherical views around the set centroid.

    Returns (outputs, cameras).
    """
    if gaussians.m == 0:
        raise ValueError("cannot orbit a degenerate (empty) set")
    cfg = cfg or RenderConfig()
    center = gaussians.positions.astype(np.float64).mean(axis=0)
    extent = np.linalg.norm(gaussians.positions.astype(np.float64) - center, axis=1)
    bound = float(extent.max()) if gaussians.m else 0.0
    cams = turntable_cameras(center, radius, n_views, width=width,
                             height=height, bound_radius=bound if bound > 0 else None)
    return [render(gaussians, c, cfg) for c in cams], cams
