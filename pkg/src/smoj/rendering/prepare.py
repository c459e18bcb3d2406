"""Scene preprocessing shared by the tiled, reference, and backward paths.

Splats are culled against the near plane, depth-sorted by camera-z of the
center (stable, so ties keep splat order), projected, and packed into a flat
per-splat geometry table the kernels consume. One projection implementation
feeds every render path, so tiled, reference, and backward all see identical
numbers. Everything here is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..assets import Camera, GaussianSet
from .config import MODE_3DGS, RenderConfig

GEOM_WIDTH = 16

# Screen-space covariance dilation guarding subpixel footprints (px^2).
LOWPASS_DILATION = 0.3


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """(N,4) scalar-first unit quats -> (N,3,3) rotation matrices."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ], axis=1)


@dataclass
class Scene:
    """Packed, depth-ordered view of the visible splats."""

    mode: int
    geom: np.ndarray  # (N, GEOM_WIDTH) float64, layout per mode (see kernels)
    opacity: np.ndarray  # (N,)
    color: np.ndarray  # (N, 3)
    bbox: np.ndarray  # (N, 4) int64 pixel rect x0, x1, y0, y1 (exclusive)
    index_map: np.ndarray  # (N,) original splat indices
    pc: np.ndarray  # (N, 3) camera-space centers
    scales: np.ndarray  # (N, 3)
    quat_unit: np.ndarray  # (N, 4)
    quat_norm: np.ndarray  # (N,)


@njit(cache=True)
def _project_3dgs(pos, scales, quat, rot_cam, trans, fx, fy, cx, cy, kappa,
                  dilation, geom, bound):
    n = pos.shape[0]
    for i in range(n):
        x = (rot_cam[0, 0] * pos[i, 0] + rot_cam[0, 1] * pos[i, 1]
             + rot_cam[0, 2] * pos[i, 2] + trans[0])
        y = (rot_cam[1, 0] * pos[i, 0] + rot_cam[1, 1] * pos[i, 1]
             + rot_cam[1, 2] * pos[i, 2] + trans[1])
        z = (rot_cam[2, 0] * pos[i, 0] + rot_cam[2, 1] * pos[i, 1]
             + rot_cam[2, 2] * pos[i, 2] + trans[2])
        qw, qx, qy, qz = quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3]
        r00 = 1.0 - 2.0 * (qy * qy + qz * qz)
        r01 = 2.0 * (qx * qy - qz * qw)
        r02 = 2.0 * (qx * qz + qy * qw)
        r10 = 2.0 * (qx * qy + qz * qw)
        r11 = 1.0 - 2.0 * (qx * qx + qz * qz)
        r12 = 2.0 * (qy * qz - qx * qw)
        r20 = 2.0 * (qx * qz - qy * qw)
        r21 = 2.0 * (qy * qz + qx * qw)
        r22 = 1.0 - 2.0 * (qx * qx + qy * qy)
        s0, s1, s2 = scales[i, 0], scales[i, 1], scales[i, 2]
        # cov3 = R diag(s^2) R^T, unique entries
        c00 = r00 * r00 * s0 * s0 + r01 * r01 * s1 * s1 + r02 * r02 * s2 * s2
        c01 = r00 * r10 * s0 * s0 + r01 * r11 * s1 * s1 + r02 * r12 * s2 * s2
        c02 = r00 * r20 * s0 * s0 + r01 * r21 * s1 * s1 + r02 * r22 * s2 * s2
        c11 = r10 * r10 * s0 * s0 + r11 * r11 * s1 * s1 + r12 * r12 * s2 * s2
        c12 = r10 * r20 * s0 * s0 + r11 * r21 * s1 * s1 + r12 * r22 * s2 * s2
        c22 = r20 * r20 * s0 * s0 + r21 * r21 * s1 * s1 + r22 * r22 * s2 * s2
        # rows of T = J @ rot_cam
        jx = fx / z
        jy = fy / z
        jxz = -fx * x / (z * z)
        jyz = -fy * y / (z * z)
        t00 = jx * rot_cam[0, 0] + jxz * rot_cam[2, 0]
        t01 = jx * rot_cam[0, 1] + jxz * rot_cam[2, 1]
        t02 = jx * rot_cam[0, 2] + jxz * rot_cam[2, 2]
        t10 = jy * rot_cam[1, 0] + jyz * rot_cam[2, 0]
        t11 = jy * rot_cam[1, 1] + jyz * rot_cam[2, 1]
        t12 = jy * rot_cam[1, 2] + jyz * rot_cam[2, 2]
        # cov2 = T cov3 T^T + dilation
        u0 = t00 * c00 + t01 * c01 + t02 * c02
        u1 = t00 * c01 + t01 * c11 + t02 * c12
        u2 = t00 * c02 + t01 * c12 + t02 * c22
        v0 = t10 * c00 + t11 * c01 + t12 * c02
        v1 = t10 * c01 + t11 * c11 + t12 * c12
        v2 = t10 * c02 + t11 * c12 + t12 * c22
        a = u0 * t00 + u1 * t01 + u2 * t02 + dilation
        b = u0 * t10 + u1 * t11 + u2 * t12
        c = v0 * t10 + v1 * t11 + v2 * t12 + dilation
        det = a * c - b * b
        u = x / z * fx + cx
        v = y / z * fy + cy
        geom[i, 0] = u
        geom[i, 1] = v
        geom[i, 2] = c / det
        geom[i, 3] = -b / det
        geom[i, 4] = a / det
        geom[i, 5] = z
        rx = math.sqrt(2.0 * kappa * a)
        ry = math.sqrt(2.0 * kappa * c)
        bound[i, 0] = u - rx
        bound[i, 1] = u + rx
        bound[i, 2] = v - ry
        bound[i, 3] = v + ry


def prepare_scene(s: GaussianSet, cam: Camera, cfg: RenderConfig) -> Scene:
    m = s.m
    mode = cfg.mode_id
    pos = s.positions.astype(np.float64)
    pc_all = pos @ cam.rotation.T + cam.translation
    keep = pc_all[:, 2] > cfg.near
    idx = np.flatnonzero(keep)
    # stable depth sort so equal-depth splats keep their set order
    order = idx[np.argsort(pc_all[idx, 2], kind="stable")]
    n = len(order)

    pc = np.ascontiguousarray(pc_all[order])
    pos = np.ascontiguousarray(pos[order])
    opacity = s.opacities[order].astype(np.float64)
    color = np.ascontiguousarray(s.colors[order].astype(np.float64))
    q_raw = s.orientations[order].astype(np.float64)
    q_norm = np.sqrt(np.sum(q_raw * q_raw, axis=1))
    q_unit = np.ascontiguousarray(q_raw / np.maximum(q_norm[:, None], 1e-30))
    scales = np.ascontiguousarray(s.scales[order].astype(np.float64))

    geom = np.zeros((n, GEOM_WIDTH))
    scene = Scene(mode=mode, geom=geom, opacity=opacity, color=color,
                  bbox=np.zeros((n, 4), np.int64), index_map=order, pc=pc,
                  scales=scales, quat_unit=q_unit, quat_norm=q_norm)
    if n == 0:
        return scene

    fx, fy, cx, cy = cam.fx, cam.fy, cam.cx, cam.cy
    bound = np.zeros((n, 4))
    if mode == MODE_3DGS:
        _project_3dgs(pos, scales, q_unit, np.ascontiguousarray(cam.rotation),
                      cam.translation, fx, fy, cx, cy, cfg.falloff_cutoff,
                      LOWPASS_DILATION, geom, bound)
    else:
        rot = quat_to_rotmat(q_unit)
        rot_cam = np.einsum("ab,nbc->nac", cam.rotation, rot)
        e1, e2, e3 = rot_cam[:, :, 0], rot_cam[:, :, 1], rot_cam[:, :, 2]
        s1 = scales[:, 0]
        s2 = scales[:, 1]
        geom[:, 0:3] = pc
        geom[:, 3:6] = e1
        geom[:, 6:9] = e2
        geom[:, 9:12] = e3
        geom[:, 12] = 1.0 / s1
        geom[:, 13] = 1.0 / s2
        geom[:, 14] = np.einsum("ni,ni->n", e3, pc)
        # conservative screen bbox: project the axis-aligned box around the
        # bounding sphere of the cutoff ellipse
        r3 = np.sqrt(2.0 * cfg.falloff_cutoff) * np.maximum(s1, s2)
        zmin = np.maximum(pc[:, 2] - r3, 1e-6)
        zmax = pc[:, 2] + r3
        bound[:, 0] = _axis_bound(pc[:, 0] - r3, pc[:, 0] + r3, zmin, zmax, fx, cx, lo=True)
        bound[:, 1] = _axis_bound(pc[:, 0] - r3, pc[:, 0] + r3, zmin, zmax, fx, cx, lo=False)
        bound[:, 2] = _axis_bound(pc[:, 1] - r3, pc[:, 1] + r3, zmin, zmax, fy, cy, lo=True)
        bound[:, 3] = _axis_bound(pc[:, 1] - r3, pc[:, 1] + r3, zmin, zmax, fy, cy, lo=False)

    # pixel x covers center x+0.5; one extra guard pixel on each side
    w, h = cam.width, cam.height
    scene.bbox[:, 0] = np.clip(np.floor(bound[:, 0] - 0.5) - 1, 0, w)
    scene.bbox[:, 1] = np.clip(np.floor(bound[:, 1] - 0.5) + 2, 0, w)
    scene.bbox[:, 2] = np.clip(np.floor(bound[:, 2] - 0.5) - 1, 0, h)
    scene.bbox[:, 3] = np.clip(np.floor(bound[:, 3] - 0.5) + 2, 0, h)
    return scene


def scene_covariance_chain(scene: Scene, cam: Camera):
    """Recompute the 3dgs projection intermediates (rot, m3, cov3, t2, cov2)
    needed by the backward chain; fitting-scale only."""
    rot = quat_to_rotmat(scene.quat_unit)
    m3 = rot * scene.scales[:, None, :]
    cov3 = m3 @ m3.transpose(0, 2, 1)
    x, y, z = scene.pc[:, 0], scene.pc[:, 1], scene.pc[:, 2]
    n = len(scene.pc)
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = cam.fx / z
    jac[:, 0, 2] = -cam.fx * x / z**2
    jac[:, 1, 1] = cam.fy / z
    jac[:, 1, 2] = -cam.fy * y / z**2
    t2 = jac @ cam.rotation[None]
    cov2 = t2 @ cov3 @ t2.transpose(0, 2, 1)
    cov2[:, 0, 0] += LOWPASS_DILATION
    cov2[:, 1, 1] += LOWPASS_DILATION
    return rot, m3, cov3, t2, cov2


def _axis_bound(lo_w, hi_w, zmin, zmax, f, c, lo: bool):
    cands = np.stack([lo_w / zmin, lo_w / zmax, hi_w / zmin, hi_w / zmax])
    best = cands.min(axis=0) if lo else cands.max(axis=0)
    return f * best + c


@njit(cache=True)
def _fill_tile_lists(tx0, tx1, ty0, ty1, ntx, nty):
    n = tx0.shape[0]
    n_tiles = ntx * nty
    offsets = np.zeros(n_tiles + 1, np.int64)
    for i in range(n):
        for ty in range(ty0[i], ty1[i]):
            row = ty * ntx
            for tx in range(tx0[i], tx1[i]):
                offsets[row + tx + 1] += 1
    for t in range(n_tiles):
        offsets[t + 1] += offsets[t]
    lists = np.empty(offsets[n_tiles], np.int64)
    cursor = offsets[:-1].copy()
    for i in range(n):  # depth order is preserved inside each tile
        for ty in range(ty0[i], ty1[i]):
            row = ty * ntx
            for tx in range(tx0[i], tx1[i]):
                tid = row + tx
                lists[cursor[tid]] = i
                cursor[tid] += 1
    return offsets, lists


def build_tile_lists(scene: Scene, width: int, height: int, tile: int):
    """CSR layout of depth-ordered splat ids per tile.

    Returns (offsets (T+1,), lists (P,), ntx, nty) with splat ids referring
    to the packed scene arrays, depth-ordered inside each tile.
    """
    ntx = (width + tile - 1) // tile
    nty = (height + tile - 1) // tile
    n = len(scene.geom)
    if n == 0:
        return np.zeros(ntx * nty + 1, np.int64), np.zeros(0, np.int64), ntx, nty
    nonempty = (scene.bbox[:, 1] > scene.bbox[:, 0]) & (scene.bbox[:, 3] > scene.bbox[:, 2])
    tx0 = np.where(nonempty, scene.bbox[:, 0] // tile, 0)
    tx1 = np.where(nonempty, (scene.bbox[:, 1] - 1) // tile + 1, 0)
    ty0 = np.where(nonempty, scene.bbox[:, 2] // tile, 0)
    ty1 = np.where(nonempty, (scene.bbox[:, 3] - 1) // tile + 1, 0)
    offsets, lists = _fill_tile_lists(tx0, tx1, ty0, ty1, ntx, nty)
    return offsets, lists, ntx, nty
