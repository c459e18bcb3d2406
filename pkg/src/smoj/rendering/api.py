"""Public rendering entry points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assets import Camera, GaussianSet
from . import kernels
from .config import MODE_2DGS, RenderConfig, RenderOutput
from .prepare import build_tile_lists, prepare_scene


def _alloc(cam: Camera):
    h, w = cam.height, cam.width
    return (np.zeros((h, w, 3)), np.zeros((h, w)), np.zeros((h, w)),
            np.zeros((h, w, 3)))


def _finalize(rgb, alpha, depth, normal) -> RenderOutput:
    return RenderOutput(
        rgb=np.clip(rgb, 0.0, 1.0).astype(np.float32),
        alpha=np.clip(alpha, 0.0, 1.0).astype(np.float32),
        depth=depth.astype(np.float32),
        normal=normal.astype(np.float32),
    )


def render(gaussians: GaussianSet, cam: Camera, cfg: RenderConfig | None = None,
           *, raw: bool = False) -> RenderOutput:
    """Tile-based front-to-back compositing of a Gaussian set.

    Deterministic: identical inputs give bit-identical buffers regardless of
    thread count (tiles own disjoint pixel ranges). ``raw=True`` skips the
    float32 conversion, exposing the double-precision accumulators (useful
    for finite-difference verification).
    """
    cfg = cfg or RenderConfig()
    scene = prepare_scene(gaussians, cam, cfg)
    offsets, lists, ntx, nty = build_tile_lists(scene, cam.width, cam.height, cfg.tile_size)
    rgb, alpha, depth, normal = _alloc(cam)
    kernels.forward_tiled(
        scene.mode, scene.geom, scene.opacity, scene.color, scene.bbox,
        offsets, lists, ntx, nty, cam.width, cam.height, cfg.tile_size,
        cam.fx, cam.fy, cam.cx, cam.cy, cfg.near, cfg.falloff_cutoff,
        cfg.alpha_threshold, cfg.background, scene.mode == MODE_2DGS,
        rgb, alpha, depth, normal)
    if raw:
        return RenderOutput(rgb=rgb, alpha=alpha, depth=depth, normal=normal)
    return _finalize(rgb, alpha, depth, normal)


def render_reference(gaussians: GaussianSet, cam: Camera,
                     cfg: RenderConfig | None = None) -> RenderOutput:
    """Brute-force oracle: exact global depth order per pixel, no tiling and
    no early termination. Capped at cfg.reference_cap splats."""
    cfg = cfg or RenderConfig()
    if gaussians.m > cfg.reference_cap:
        raise ValueError(
            f"reference renderer capped at {cfg.reference_cap} splats, got {gaussians.m}")
    scene = prepare_scene(gaussians, cam, cfg)
    rgb, alpha, depth, normal = _alloc(cam)
    kernels.forward_reference(
        scene.mode, scene.geom, scene.opacity, scene.color,
        cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy,
        cfg.near, cfg.falloff_cutoff, cfg.background, scene.mode == MODE_2DGS,
        rgb, alpha, depth, normal)
    return _finalize(rgb, alpha, depth, normal)


@dataclass
class RayDistortionInput:
    """Per-pixel compositing (weight, depth) lists captured during rendering.

    CSR layout: ray p (= y * width + x) owns entries
    offsets[p]:offsets[p+1], front to back.
    """

    offsets: np.ndarray  # (n_rays + 1,) int64
    weights: np.ndarray  # (E,) float64
    depths: np.ndarray  # (E,) float64

    @property
    def n_rays(self) -> int:
        return len(self.offsets) - 1

    @classmethod
    def from_lists(cls, per_ray) -> "RayDistortionInput":
        """Build from an explicit list of (weights, depths) per ray."""
        offsets = np.zeros(len(per_ray) + 1, np.int64)
        ws, ds = [], []
        for i, (w, d) in enumerate(per_ray):
            w = np.asarray(w, np.float64).reshape(-1)
            d = np.asarray(d, np.float64).reshape(-1)
            if len(w) != len(d):
                raise ValueError("weights and depths length mismatch")
            offsets[i + 1] = offsets[i] + len(w)
            ws.append(w)
            ds.append(d)
        cat = (np.concatenate(ws) if ws else np.zeros(0),
               np.concatenate(ds) if ds else np.zeros(0))
        return cls(offsets, cat[0], cat[1])


def render_with_rays(gaussians: GaussianSet, cam: Camera,
                     cfg: RenderConfig | None = None):
    """Render and also capture per-ray compositing lists for the depth
    distortion loss. Returns (RenderOutput, RayDistortionInput)."""
    cfg = cfg or RenderConfig()
    out = render(gaussians, cam, cfg)
    scene = prepare_scene(gaussians, cam, cfg)
    offsets, lists, ntx, nty = build_tile_lists(scene, cam.width, cam.height, cfg.tile_size)
    ray_offsets, weights, depths = kernels.capture_rays(
        scene.mode, scene.geom, scene.opacity, scene.color, offsets, lists,
        ntx, nty, cam.width, cam.height, cfg.tile_size,
        cam.fx, cam.fy, cam.cx, cam.cy, cfg.near, cfg.falloff_cutoff,
        cfg.alpha_threshold)
    return out, RayDistortionInput(ray_offsets, weights, depths)
