"""Analytic gradients of the renderer with respect to Gaussian parameters.

The numba kernel accumulates image-space gradients per tile-list entry; the
chains through projection, covariance, and the quaternion-to-rotation map are
vectorized numpy. Reductions run in a fixed order so results are bit-stable
across thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assets import Camera, GaussianSet
from . import kernels
from .config import MODE_3DGS, RenderConfig
from .prepare import Scene, build_tile_lists, prepare_scene, scene_covariance_chain

GRAD_WIDTH = 18
_MAX_LOCAL_BYTES = 1 << 30  # backward is meant for fitting-scale scenes


@dataclass
class ParamGrads:
    """Loss gradients for every Gaussian field, plus the raw pairwise depth
    distortion value when a distortion coefficient was supplied."""

    positions: np.ndarray  # (M, 3)
    scales: np.ndarray  # (M, 3)
    orientations: np.ndarray  # (M, 4)
    colors: np.ndarray  # (M, 3)
    opacities: np.ndarray  # (M,)
    distortion_sum: float = 0.0


def _quat_grad(g_rot: np.ndarray, q_unit: np.ndarray, q_norm: np.ndarray) -> np.ndarray:
    """Chain dL/dR -> dL/dq including normalization of the raw quaternion."""
    w, x, y, z = q_unit[:, 0], q_unit[:, 1], q_unit[:, 2], q_unit[:, 3]
    g = g_rot
    gw = 2 * (-z * g[:, 0, 1] + y * g[:, 0, 2] + z * g[:, 1, 0]
              - x * g[:, 1, 2] - y * g[:, 2, 0] + x * g[:, 2, 1])
    gx = 2 * (y * g[:, 0, 1] + z * g[:, 0, 2] + y * g[:, 1, 0]
              - 2 * x * g[:, 1, 1] - w * g[:, 1, 2] + z * g[:, 2, 0]
              + w * g[:, 2, 1] - 2 * x * g[:, 2, 2])
    gy = 2 * (-2 * y * g[:, 0, 0] + x * g[:, 0, 1] + w * g[:, 0, 2]
              + x * g[:, 1, 0] + z * g[:, 1, 2] - w * g[:, 2, 0]
              + z * g[:, 2, 1] - 2 * y * g[:, 2, 2])
    gz = 2 * (-2 * z * g[:, 0, 0] - w * g[:, 0, 1] + x * g[:, 0, 2]
              + w * g[:, 1, 0] - 2 * z * g[:, 1, 1] + y * g[:, 1, 2]
              + x * g[:, 2, 0] + y * g[:, 2, 1])
    ghat = np.stack([gw, gx, gy, gz], axis=-1)
    # projection of the normalization map q -> q/|q|
    return (ghat - np.sum(ghat * q_unit, axis=1, keepdims=True) * q_unit) / q_norm[:, None]


def _chain_3dgs(scene: Scene, g: np.ndarray, cam: Camera):
    n = len(g)
    gu = g[:, 0:2]
    gq_mat = np.empty((n, 2, 2))
    gq_mat[:, 0, 0] = g[:, 2]
    gq_mat[:, 0, 1] = gq_mat[:, 1, 0] = 0.5 * g[:, 3]
    gq_mat[:, 1, 1] = g[:, 4]
    conic = np.empty((n, 2, 2))
    conic[:, 0, 0] = scene.geom[:, 2]
    conic[:, 0, 1] = conic[:, 1, 0] = scene.geom[:, 3]
    conic[:, 1, 1] = scene.geom[:, 4]
    rot, m3, cov3, t2, _ = scene_covariance_chain(scene, cam)

    g_cov2 = -conic @ gq_mat @ conic  # Q = inv(cov2): dL/dcov2
    g_cov3 = t2.transpose(0, 2, 1) @ g_cov2 @ t2
    g_t2 = 2.0 * (g_cov2 @ t2 @ cov3)
    g_jac = g_t2 @ cam.rotation.T[None]

    pc = scene.pc
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    fx, fy = cam.fx, cam.fy
    gpc = np.zeros((n, 3))
    gpc[:, 0] = g_jac[:, 0, 2] * (-fx / z**2) + gu[:, 0] * fx / z
    gpc[:, 1] = g_jac[:, 1, 2] * (-fy / z**2) + gu[:, 1] * fy / z
    gpc[:, 2] = (g_jac[:, 0, 0] * (-fx / z**2) + g_jac[:, 1, 1] * (-fy / z**2)
                 + g_jac[:, 0, 2] * (2 * fx * x / z**3)
                 + g_jac[:, 1, 2] * (2 * fy * y / z**3)
                 - gu[:, 0] * fx * x / z**2 - gu[:, 1] * fy * y / z**2
                 + g[:, 5])

    g_m3 = 2.0 * (g_cov3 @ m3)
    g_scale = np.einsum("nij,nij->nj", g_m3, rot)
    s = scene.scales
    g_rot = g_m3 * s[:, None, :]
    g_quat = _quat_grad(g_rot, scene.quat_unit, scene.quat_norm)

    return (gpc @ cam.rotation, g_scale, g_quat, g[:, 7:10], g[:, 6])


def _chain_2dgs(scene: Scene, g: np.ndarray, cam: Camera):
    gpc = g[:, 0:3]
    g_rcam = np.stack([g[:, 3:6], g[:, 6:9], g[:, 9:12]], axis=-1)  # columns
    g_rworld = np.einsum("ba,nbc->nac", cam.rotation, g_rcam)
    g_quat = _quat_grad(g_rworld, scene.quat_unit, scene.quat_norm)
    g_scale = np.zeros((len(g), 3))
    g_scale[:, 0] = g[:, 12]
    g_scale[:, 1] = g[:, 13]
    return (gpc @ cam.rotation, g_scale, g_quat, g[:, 15:18], g[:, 14])


def backprop_render(gaussians: GaussianSet, cam: Camera, cfg: RenderConfig | None,
                    grad_rgb=None, grad_alpha=None, grad_depth=None,
                    distortion_coeff: float = 0.0) -> ParamGrads:
    """Chain upstream buffer gradients back to every Gaussian field.

    ``grad_rgb``/``grad_alpha``/``grad_depth`` are dL/d(buffer) arrays; any
    omitted buffer contributes nothing. ``distortion_coeff`` additionally
    injects the pairwise depth-distortion gradient (coefficient applied per
    contribution; the raw distortion sum comes back in ``distortion_sum``).
    """
    cfg = cfg or RenderConfig()
    h, w = cam.height, cam.width
    g_rgb = np.zeros((h, w, 3)) if grad_rgb is None else np.asarray(grad_rgb, np.float64).reshape(h, w, 3)
    g_alpha = np.zeros((h, w)) if grad_alpha is None else np.asarray(grad_alpha, np.float64).reshape(h, w)
    g_depth = np.zeros((h, w)) if grad_depth is None else np.asarray(grad_depth, np.float64).reshape(h, w)

    scene = prepare_scene(gaussians, cam, cfg)
    offsets, lists, ntx, nty = build_tile_lists(scene, w, h, cfg.tile_size)
    m = gaussians.m
    out = ParamGrads(np.zeros((m, 3)), np.zeros((m, 3)), np.zeros((m, 4)),
                     np.zeros((m, 3)), np.zeros(m))
    if len(lists) == 0:
        return out
    if len(lists) * GRAD_WIDTH * 8 > _MAX_LOCAL_BYTES:
        raise RuntimeError("scene too large for the backward pass")
    grads_local = np.zeros((len(lists), GRAD_WIDTH))
    dist_vals = np.zeros(ntx * nty)
    kernels.backward_tiled(
        scene.mode, scene.geom, scene.opacity, scene.color, offsets, lists,
        ntx, nty, w, h, cfg.tile_size, cam.fx, cam.fy, cam.cx, cam.cy,
        cfg.near, cfg.falloff_cutoff, cfg.alpha_threshold, cfg.background,
        g_rgb, g_alpha, g_depth, float(distortion_coeff),
        grads_local, dist_vals)

    # fixed-order scatter of per-entry rows onto packed splats
    g_packed = np.zeros((len(scene.geom), GRAD_WIDTH))
    np.add.at(g_packed, lists, grads_local)

    if scene.mode == MODE_3DGS:
        gpos, gscale, gquat, gcolor, gopac = _chain_3dgs(scene, g_packed, cam)
    else:
        gpos, gscale, gquat, gcolor, gopac = _chain_2dgs(scene, g_packed, cam)

    idx = scene.index_map
    out.positions[idx] = gpos
    out.scales[idx] = gscale
    out.orientations[idx] = gquat
    out.colors[idx] = gcolor
    out.opacities[idx] = gopac
    out.distortion_sum = float(np.sum(dist_vals))
    return out
