"""Render configuration and output buffers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MODE_3DGS = 0  # volumetric splats via EWA covariance projection
MODE_2DGS = 1  # oriented flat disks via ray-plane intersection

_MODE_NAMES = {"3dgs": MODE_3DGS, "2dgs": MODE_2DGS}

# Contributions with 0.5 * mahalanobis^2 above the falloff cutoff are skipped
# in every render path, so tiled and reference outputs share one definition.
DEFAULT_FALLOFF_CUTOFF = 8.0
# Per-splat alpha is capped below 1 so transmittance stays invertible in the
# backward pass.
ALPHA_CAP = 0.999
# Pixels with composited alpha below this report depth 0 and are excluded
# from depth-based normals.
DEPTH_ALPHA_MIN = 1e-4


@dataclass
class RenderConfig:
    mode: str = "3dgs"
    tile_size: int = 32
    alpha_threshold: float = 1e-6  # stop compositing once transmittance drops below
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    near: float = 0.01
    falloff_cutoff: float = DEFAULT_FALLOFF_CUTOFF
    reference_cap: int = 64

    def __post_init__(self):
        if self.mode not in _MODE_NAMES:
            raise ValueError(f"mode must be one of {sorted(_MODE_NAMES)}")
        if self.tile_size < 1:
            raise ValueError("tile size must be >= 1")
        if not (0.0 < self.alpha_threshold < 1.0):
            raise ValueError("alpha threshold must be in (0, 1)")
        self.background = np.asarray(self.background, np.float64).reshape(3)

    @property
    def mode_id(self) -> int:
        return _MODE_NAMES[self.mode]


@dataclass
class RenderOutput:
    """One view's buffers: rgb/alpha in [0,1], camera-space z depth, unit or
    zero normals (normals are populated in 2dgs mode only)."""

    rgb: np.ndarray  # (H, W, 3) float32
    alpha: np.ndarray  # (H, W) float32
    depth: np.ndarray  # (H, W) float32, 0 where alpha < DEPTH_ALPHA_MIN
    normal: np.ndarray  # (H, W, 3) float32
