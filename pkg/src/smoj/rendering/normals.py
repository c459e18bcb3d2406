"""Surface normals from rendered depth via central finite differences."""

from __future__ import annotations

import numpy as np

from ..assets import Camera


def normals_from_depth(depth: np.ndarray, cam: Camera) -> np.ndarray:
    """Cross product of back-projected depth tangents, camera convention.

    Pixels with zero depth are treated as empty; a normal is produced only
    where the pixel and its four neighbors all carry depth. A fronto-parallel
    surface yields (0, 0, -1).
    """
    depth = np.asarray(depth, np.float64)
    h, w = depth.shape
    if (h, w) != (cam.height, cam.width):
        raise ValueError("depth buffer does not match camera image size")
    ys, xs = np.mgrid[0:h, 0:w]
    px = (xs + 0.5 - cam.cx) / cam.fx
    py = (ys + 0.5 - cam.cy) / cam.fy
    pts = np.stack([px * depth, py * depth, depth], axis=-1)

    normal = np.zeros((h, w, 3))
    if h < 3 or w < 3:
        return normal.astype(np.float32)
    dx = (pts[1:-1, 2:] - pts[1:-1, :-2]) * 0.5
    dy = (pts[2:, 1:-1] - pts[:-2, 1:-1]) * 0.5
    n = np.cross(dx, dy)
    norm = np.linalg.norm(n, axis=-1)
    valid = depth > 0
    ok = (valid[1:-1, 1:-1] & valid[1:-1, 2:] & valid[1:-1, :-2]
          & valid[2:, 1:-1] & valid[:-2, 1:-1] & (norm > 1e-12))
    with np.errstate(invalid="ignore", divide="ignore"):
        n = n / norm[..., None]
    n[~ok] = 0.0
    # orient toward the camera
    flip = n[..., 2] > 0
    n[flip] = -n[flip]
    normal[1:-1, 1:-1] = n
    return normal.astype(np.float32)
