"""Blendshape animation: posing a Gaussian set by linear interpolation.

Every field of the posed set is ``rest + sum_i w_i * (component_i - rest)``,
accumulated in double precision and stored as float32. Orientations get the
same linear blend on quaternion components followed by renormalization, which
matches what a real-time mobile path affords; it is approximate for large
rotation deltas.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .assets import (
    AvatarAsset,
    BlendWeights,
    GaussianSet,
    InvalidAssetError,
    QUAT_NORM_TOL,
    validate_asset,
)

SCALE_FLOOR = 1e-6  # post-blend floor keeping scales strictly positive


def _blend_cache(asset: AvatarAsset):
    """Cached (rest_flat, [(offset, (K, span) delta block), ...]).

    Only fields where some component actually differs from rest get a delta
    block, so sparse rigs (position-only blendshapes) blend cheaply. Blocks
    are float64; the weighted sum runs without BLAS (single-threaded, exact
    accumulation order).
    """
    cached = asset.metadata.get("_blend_cache")
    if cached is not None:
        return cached
    rest = _flat(asset.rest)
    blocks = []
    if asset.k:
        full = np.stack([_flat(c) for c in asset.components]) - rest
        offset = 0
        m = asset.m
        for width in (3, 3, 4, 3, 1):
            span = m * width
            block = full[:, offset:offset + span]
            if np.any(block):
                blocks.append((offset, span, np.ascontiguousarray(block)))
            offset += span
    asset.metadata["_blend_cache"] = (rest, blocks)
    return rest, blocks


def _flat(s: GaussianSet) -> np.ndarray:
    return np.concatenate([
        s.positions.reshape(-1), s.scales.reshape(-1), s.orientations.reshape(-1),
        s.colors.reshape(-1), s.opacities.reshape(-1),
    ]).astype(np.float64)


def _unflat(v: np.ndarray, m: int) -> GaussianSet:
    o = 0
    parts = []
    for width in (3, 3, 4, 3, 1):
        parts.append(v[o:o + m * width].reshape(m, width) if width > 1 else v[o:o + m])
        o += m * width
    return GaussianSet(*parts)


def blend(asset: AvatarAsset, weights, *, scale_floor: float = SCALE_FLOOR,
          validate: bool = False) -> GaussianSet:
    """Pose the asset: rest plus weighted component deltas.

    Zero weights reproduce the rest set bit-for-bit and a one-hot weight
    reproduces that component bit-for-bit (f64 accumulation keeps the float32
    store exact in both cases). Post-blend, opacity is clamped to [0,1], scale
    floored at ``scale_floor``, and quaternions renormalized; a blended quat
    that cancels to zero norm falls back to the rest orientation of that splat.
    """
    w = weights.values if isinstance(weights, BlendWeights) else np.asarray(weights, np.float64)
    if w.shape != (asset.k,):
        raise ValueError(f"expected {asset.k} weights, got {w.shape}")
    if validate:
        violations = validate_asset(asset)
        if violations:
            raise InvalidAssetError(violations)
    m = asset.m
    rest_flat, blocks = _blend_cache(asset)
    posed = rest_flat.copy()
    for offset, span, block in blocks:
        seg = posed[offset:offset + span]
        seg += np.einsum("k,ks->s", w, block, optimize=False)
    out = _unflat(posed, m)

    # Orientation: renormalize the linearly blended 4-vectors in f64, with a
    # rest-pose fallback where the blend cancels out.
    q = out.orientations.astype(np.float64)
    sq = np.sum(q * q, axis=1)
    dead = sq < 1e-12
    if np.any(dead):
        q[dead] = asset.rest.orientations[dead]
        sq[dead] = np.sum(q[dead] * q[dead], axis=1)
    needs = np.abs(sq - 1.0) > QUAT_NORM_TOL
    q[needs] /= np.sqrt(sq[needs, None])
    out.orientations = q.astype(np.float32)

    np.clip(out.opacities, 0.0, 1.0, out=out.opacities)
    np.maximum(out.scales, np.float32(scale_floor), out=out.scales)
    return out


@dataclass
class BlendTimeline:
    """Ordered (timestamp, weights) keyframes plus a playback-rate hint."""

    times: np.ndarray  # (N,) seconds, strictly increasing
    weights: np.ndarray  # (N, K)
    rate_hint: float = 30.0
    channel_names: list | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, np.float64).reshape(-1)
        self.weights = np.atleast_2d(np.asarray(self.weights, np.float64))
        if len(self.times) != len(self.weights):
            raise ValueError("times and weights length mismatch")
        if len(self.times) == 0:
            raise ValueError("timeline is empty")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    def sample(self, t: float) -> np.ndarray:
        """Linear interpolation between keyframes, constant at the ends."""
        ts = self.times
        if t <= ts[0]:
            return self.weights[0].copy()
        if t >= ts[-1]:
            return self.weights[-1].copy()
        i = bisect_right(ts, t)
        a = (t - ts[i - 1]) / (ts[i] - ts[i - 1])
        return (1.0 - a) * self.weights[i - 1] + a * self.weights[i]

    def sample_times(self, rate: float) -> np.ndarray:
        """Frame timestamps from the first to the last keyframe at ``rate`` fps."""
        if rate <= 0:
            raise ValueError("sample rate must be positive")
        span = self.times[-1] - self.times[0]
        n = int(np.floor(span * rate + 1e-9)) + 1
        return self.times[0] + np.arange(n) / rate


def blend_timeline(asset: AvatarAsset, timeline: BlendTimeline, rate: float):
    """Resample the timeline at ``rate`` fps and pose each frame.

    Yields (timestamp, GaussianSet) pairs.
    """
    if timeline.channel_names is not None and list(timeline.channel_names) != list(asset.channel_names):
        raise ValueError("timeline channel order does not match asset channel names")
    for t in timeline.sample_times(rate):
        yield float(t), blend(asset, timeline.sample(t))


# ---------------------------------------------------------------------------
# Timeline file format: header "# smoj-timeline v1 <names comma-separated>",
# then one "t,w1,...,wK" line per keyframe.
# ---------------------------------------------------------------------------


def save_timeline(path, timeline: BlendTimeline, channel_names) -> None:
    with open(path, "w") as f:
        f.write("# smoj-timeline v1 " + ",".join(channel_names) + "\n")
        for t, w in zip(timeline.times, timeline.weights):
            f.write(",".join([repr(float(t))] + [repr(float(x)) for x in w]) + "\n")


def load_timeline(path) -> BlendTimeline:
    with open(path) as f:
        header = f.readline().strip()
        prefix = "# smoj-timeline v1 "
        if not header.startswith(prefix):
            raise ValueError("missing smoj-timeline v1 header")
        names = header[len(prefix):].split(",")
        times, rows = [], []
        for line in f:
            line = line.strip()
            if not line:
                continue
            vals = [float(x) for x in line.split(",")]
            if len(vals) != len(names) + 1:
                raise ValueError(f"expected 1+{len(names)} values per line, got {len(vals)}")
            times.append(vals[0])
            rows.append(vals[1:])
    return BlendTimeline(np.array(times), np.array(rows), channel_names=names)


# Emotion presets. The channel mixes are artifact-defined constants; each entry
# documents which FACS channels it drives.
EMOTION_PRESETS = {
    # rest pose
    "neutrality": {},
    # symmetric smile
    "happiness": {"mouthSmileLeft": 0.85, "mouthSmileRight": 0.85},
    # lowered brows with a shallow frown
    "frustration": {"browDownLeft": 0.8, "browDownRight": 0.8,
                    "mouthFrownLeft": 0.45, "mouthFrownRight": 0.45},
    # asymmetric smile plus a wink and a slight jaw shift
    "playfulness": {"mouthSmileLeft": 0.7, "mouthSmileRight": 0.35,
                    "eyeBlinkLeft": 1.0, "jawLeft": 0.3},
    # hard brow lower, pursed lips, deep frown
    "anger": {"browDownLeft": 1.0, "browDownRight": 1.0,
              "mouthFrownLeft": 0.6, "mouthFrownRight": 0.6, "lipsPucker": 0.4},
    # raised brows and dropped jaw
    "surprise": {"browUpLeft": 0.95, "browUpRight": 0.95, "jawOpen": 0.65},
}


def emotion_preset(name: str, channel_names=None) -> BlendWeights:
    """Fixed weight vector for a named emotion (see EMOTION_PRESETS)."""
    from .assets import FACS_CHANNELS

    if name not in EMOTION_PRESETS:
        raise KeyError(f"unknown emotion preset {name!r}; options: {sorted(EMOTION_PRESETS)}")
    names = list(channel_names) if channel_names is not None else list(FACS_CHANNELS)
    w = np.zeros(len(names))
    for ch, val in EMOTION_PRESETS[name].items():
        w[names.index(ch)] = val
    return BlendWeights(w)
