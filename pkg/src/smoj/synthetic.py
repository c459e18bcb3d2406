"""Deterministic synthetic assets and scenes for tests, benches, and demos."""

from __future__ import annotations

import numpy as np

from .assets import (
    FACS_CHANNELS,
    AvatarAsset,
    Camera,
    GaussianSet,
    normalize_quaternions,
)


def random_scene(rng: np.random.Generator, m: int, *, radius: float = 1.0,
                 scale_range=(0.05, 0.3), opacity_range=(0.1, 0.9)) -> GaussianSet:
    """Random valid Gaussian set centered at the origin."""
    q = rng.normal(size=(m, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianSet(
        positions=rng.uniform(-radius, radius, size=(m, 3)),
        scales=rng.uniform(*scale_range, size=(m, 3)),
        orientations=normalize_quaternions(q.astype(np.float32)),
        colors=rng.uniform(0, 1, size=(m, 3)),
        opacities=rng.uniform(*opacity_range, size=m),
    )


def gradient_scene(rng: np.random.Generator, m: int, mode: str = "3dgs") -> GaussianSet:
    """Random scene conditioned for finite-difference gradient checks.

    Central differences need a smooth neighborhood around the evaluation
    point, so this generator keeps center depths separated (no
    compositing-order swaps under perturbation), uses a large world scale so
    falloff curvature stays far below the 1/h^2 truncation limit, and, for
    disks, keeps orientations away from grazing ray incidence. Pair with
    gradient_camera and a high falloff cutoff.
    """
    zs = (np.arange(m) - (m - 1) / 2) * 0.3
    zs = rng.permutation(zs) + rng.uniform(-0.05, 0.05, size=m)
    pos = np.stack([rng.uniform(-1.0, 1.0, size=m),
                    rng.uniform(-1.0, 1.0, size=m), zs], axis=-1)
    if mode == "2dgs":
        # modest tilt from camera-facing keeps ray-plane denominators healthy
        axis = rng.normal(size=(m, 3))
        axis /= np.linalg.norm(axis, axis=1, keepdims=True)
        ang = rng.uniform(0.0, 0.5, size=m)
        q = np.concatenate([np.cos(ang / 2)[:, None],
                            np.sin(ang / 2)[:, None] * axis], axis=1)
    else:
        q = rng.normal(size=(m, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianSet(
        positions=pos,
        scales=rng.uniform(0.55, 1.0, size=(m, 3)),
        orientations=normalize_quaternions(q.astype(np.float32)),
        colors=rng.uniform(0, 1, size=(m, 3)),
        opacities=rng.uniform(0.2, 0.8, size=m),
    )


def gradient_camera(width: int = 32, height: int = 32) -> Camera:
    """Camera matching gradient_scene's world scale."""
    return Camera.look_at(np.array([0.0, 0.0, 10.0]), np.zeros(3),
                          fx=7.0 * min(width, height), width=width, height=height)


def random_asset(rng: np.random.Generator, m: int, k: int = 16, *,
                 delta: float = 0.08) -> AvatarAsset:
    """Random valid avatar: rest set plus k perturbed component sets."""
    rest = random_scene(rng, m, scale_range=(0.02, 0.2))
    comps = []
    for _ in range(k):
        c = rest.copy()
        c.positions = c.positions + rng.normal(0, delta, size=(m, 3)).astype(np.float32)
        c.scales = np.maximum(
            c.scales * rng.uniform(0.85, 1.2, size=(m, 3)).astype(np.float32),
            np.float32(1e-3))
        q = c.orientations.astype(np.float64) + rng.normal(0, delta, size=(m, 4))
        c.orientations = normalize_quaternions(
            (q / np.linalg.norm(q, axis=1, keepdims=True)).astype(np.float32))
        c.colors = np.clip(c.colors + rng.normal(0, delta, size=(m, 3)).astype(np.float32), 0, 1)
        c.opacities = np.clip(c.opacities + rng.normal(0, delta, size=m).astype(np.float32), 0, 1)
        comps.append(c)
    names = list(FACS_CHANNELS) if k == 16 else [f"channel{i:02d}" for i in range(k)]
    return AvatarAsset(rest=rest, components=comps, channel_names=names)


def head_asset(m: int = 4000, seed: int = 7, *, splat_sigma: float = 0.007) -> AvatarAsset:
    """Head-like blob avatar at bench-friendly splat sizes.

    Splats sit on a vertically stretched ellipsoid shell; each FACS component
    displaces a coherent region so blended poses are visibly distinct.
    """
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(m, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    radii = np.array([0.45, 0.55, 0.45])
    pos = u * radii * rng.uniform(0.9, 1.0, size=(m, 1))
    q = rng.normal(size=(m, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    rest = GaussianSet(
        positions=pos,
        scales=rng.uniform(0.6, 1.6, size=(m, 3)) * splat_sigma,
        orientations=normalize_quaternions(q.astype(np.float32)),
        colors=np.clip(0.45 + 0.25 * u + rng.normal(0, 0.08, size=(m, 3)), 0, 1),
        opacities=rng.uniform(0.7, 0.98, size=m),
    )
    comps = []
    for i in range(16):
        c = rest.copy()
        anchor = u[(i * 37) % m]  # deterministic region seed per channel
        affinity = np.exp(-np.sum((u - anchor) ** 2, axis=1) / 0.1)
        push = rng.normal(0, 0.02, size=3)
        c.positions = (c.positions + affinity[:, None] * push).astype(np.float32)
        comps.append(c)
    return AvatarAsset(rest=rest, components=comps, channel_names=list(FACS_CHANNELS))


def resize_asset(asset: AvatarAsset, m: int, seed: int = 0) -> AvatarAsset:
    """Subsample or jitter-tile an asset to exactly m splats (bench helper)."""
    if m == asset.m:
        return asset
    rng = np.random.default_rng(seed)
    if m < asset.m:
        pick = rng.choice(asset.m, size=m, replace=False)
        pick.sort()
        take = lambda s: GaussianSet(s.positions[pick], s.scales[pick],
                                     s.orientations[pick], s.colors[pick],
                                     s.opacities[pick])
        return AvatarAsset(take(asset.rest), [take(c) for c in asset.components],
                           list(asset.channel_names))
    reps = m - asset.m
    src = rng.integers(0, asset.m, size=reps)
    jitter = rng.normal(0, 0.01, size=(reps, 3)).astype(np.float32)

    def grow(s: GaussianSet) -> GaussianSet:
        return GaussianSet(
            np.concatenate([s.positions, s.positions[src] + jitter]),
            np.concatenate([s.scales, s.scales[src]]),
            np.concatenate([s.orientations, s.orientations[src]]),
            np.concatenate([s.colors, s.colors[src]]),
            np.concatenate([s.opacities, s.opacities[src]]),
        )

    return AvatarAsset(grow(asset.rest), [grow(c) for c in asset.components],
                       list(asset.channel_names))


def frontal_camera(width: int = 512, height: int = 512, *, distance: float = 3.0,
                   target=(0.0, 0.0, 0.0), focal: float | None = None) -> Camera:
    target = np.asarray(target, np.float64)
    eye = target + np.array([0.0, 0.0, distance])
    return Camera.look_at(eye, target, fx=focal or 1.1 * min(width, height),
                          width=width, height=height)
