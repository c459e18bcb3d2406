"""Avatar asset model: Gaussian sets, validation, and the SMOJ binary format.

An avatar is a rest-pose Gaussian set plus K expression-component sets that
share the rest set's splat count and ordering. All persisted scalars are
little-endian float32; in-memory arrays mirror that so file round-trips are
bit-exact.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

# Canonical 16-channel blendshape list (ARKit/Mediapipe-compatible naming).
FACS_CHANNELS = (
    "browDownLeft",
    "browDownRight",
    "browUpLeft",
    "browUpRight",
    "eyeBlinkLeft",
    "eyeBlinkRight",
    "jawOpen",
    "jawLeft",
    "jawRight",
    "lipsPucker",
    "mouthFrownLeft",
    "mouthFrownRight",
    "mouthSmileLeft",
    "mouthSmileRight",
    "mouthStretchLeft",
    "mouthStretchRight",
)

SMOJ_MAGIC = b"SMOJ"
SMOJ_VERSION = 1
FLAG_DELTA_COMPONENTS = 1  # reserved: writers always emit full sets

# Field name -> components per splat, in payload order.
FIELD_LAYOUT = (
    ("positions", 3),
    ("scales", 3),
    ("orientations", 4),
    ("colors", 3),
    ("opacities", 1),
)

FLOATS_PER_SPLAT = sum(n for _, n in FIELD_LAYOUT)  # 14

QUAT_NORM_TOL = 1e-6  # tolerance on |q.q - 1| below which a quat counts as unit


class SmojError(Exception):
    """Base class for asset format and validation errors."""


class SmojParseError(SmojError):
    """Structural failure while decoding a SMOJ file."""

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"offset {offset}: {message}")


class InvalidAssetError(SmojError):
    """Asset violates type invariants (carries the validation report)."""

    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def normalize_quaternions(q: np.ndarray) -> np.ndarray:
    """Renormalize quaternions to unit length.

    Quats already unit within QUAT_NORM_TOL (on the squared norm) are returned
    unchanged, which makes normalization exactly idempotent on float32 storage.
    Zero-norm quats raise.
    """
    q = np.asarray(q)
    single = q.ndim == 1
    q2 = np.atleast_2d(q)
    sq = np.sum(q2.astype(np.float64) ** 2, axis=1)
    if np.any(sq < 1e-12):
        raise ValueError("zero-norm quaternion cannot be normalized")
    needs = np.abs(sq - 1.0) > QUAT_NORM_TOL
    out = q2.copy()
    if np.any(needs):
        out[needs] = (q2[needs].astype(np.float64) / np.sqrt(sq[needs, None])).astype(q2.dtype)
    return out[0] if single else out


@dataclass(frozen=True)
class Gaussian:
    """A single splat; orientation is renormalized on construction."""

    position: np.ndarray
    scale: np.ndarray
    orientation: np.ndarray  # (w, x, y, z), scalar-first
    color: np.ndarray
    opacity: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, np.float32).reshape(3))
        object.__setattr__(self, "scale", np.asarray(self.scale, np.float32).reshape(3))
        q = np.asarray(self.orientation, np.float32).reshape(4)
        object.__setattr__(self, "orientation", normalize_quaternions(q))
        object.__setattr__(self, "color", np.asarray(self.color, np.float32).reshape(3))
        object.__setattr__(self, "opacity", float(self.opacity))


@dataclass
class GaussianSet:
    """Struct-of-arrays container for M splats (float32 storage)."""

    positions: np.ndarray  # (M, 3)
    scales: np.ndarray  # (M, 3), strictly positive
    orientations: np.ndarray  # (M, 4) unit quats, scalar-first
    colors: np.ndarray  # (M, 3) in [0, 1]
    opacities: np.ndarray  # (M,) in [0, 1]

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, np.float32).reshape(-1, 3)
        m = len(self.positions)
        self.scales = np.ascontiguousarray(self.scales, np.float32).reshape(m, 3)
        self.orientations = np.ascontiguousarray(self.orientations, np.float32).reshape(m, 4)
        self.colors = np.ascontiguousarray(self.colors, np.float32).reshape(m, 3)
        self.opacities = np.ascontiguousarray(self.opacities, np.float32).reshape(m)

    @property
    def m(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls) -> "GaussianSet":
        z = np.zeros((0, 3), np.float32)
        return cls(z, z.copy(), np.zeros((0, 4), np.float32), z.copy(), np.zeros(0, np.float32))

    @classmethod
    def from_gaussians(cls, gaussians) -> "GaussianSet":
        gs = list(gaussians)
        if not gs:
            return cls.empty()
        return cls(
            np.stack([g.position for g in gs]),
            np.stack([g.scale for g in gs]),
            np.stack([g.orientation for g in gs]),
            np.stack([g.color for g in gs]),
            np.array([g.opacity for g in gs], np.float32),
        )

    def gaussian(self, i: int) -> Gaussian:
        return Gaussian(
            self.positions[i], self.scales[i], self.orientations[i],
            self.colors[i], float(self.opacities[i]),
        )

    def copy(self) -> "GaussianSet":
        return GaussianSet(
            self.positions.copy(), self.scales.copy(), self.orientations.copy(),
            self.colors.copy(), self.opacities.copy(),
        )

    def field_arrays(self):
        """(name, array) pairs in the SMOJ payload order."""
        return (
            ("positions", self.positions),
            ("scales", self.scales),
            ("orientations", self.orientations),
            ("colors", self.colors),
            ("opacities", self.opacities),
        )

    def allclose(self, other: "GaussianSet") -> bool:
        return all(
            np.array_equal(a, b)
            for (_, a), (_, b) in zip(self.field_arrays(), other.field_arrays())
        )


@dataclass
class BlendWeights:
    """Per-channel activation weights driving the animation equation."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, np.float64).reshape(-1)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def zeros(cls, k: int = 16) -> "BlendWeights":
        return cls(np.zeros(k))

    @classmethod
    def one_hot(cls, i: int, k: int = 16, value: float = 1.0) -> "BlendWeights":
        v = np.zeros(k)
        v[i] = value
        return cls(v)


@dataclass
class AvatarAsset:
    """Rest-pose set plus K expression components sharing splat order.

    ``metadata`` is runtime-only annotation; the SMOJ format does not persist
    it, so round-trip equality is defined over the other fields.
    """

    rest: GaussianSet
    components: list
    channel_names: list
    metadata: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.rest.m

    @property
    def k(self) -> int:
        return len(self.components)

    def component(self, name: str) -> GaussianSet:
        return self.components[self.channel_names.index(name)]

    def allclose(self, other: "AvatarAsset") -> bool:
        return (
            self.k == other.k
            and list(self.channel_names) == list(other.channel_names)
            and self.rest.allclose(other.rest)
            and all(a.allclose(b) for a, b in zip(self.components, other.components))
        )


@dataclass(frozen=True)
class Violation:
    """One validation finding; ``code`` is a stable machine-checkable token."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def _validate_set(name: str, s: GaussianSet, out: list):
    for fname, arr in s.field_arrays():
        if not np.all(np.isfinite(arr)):
            idx = int(np.argwhere(~np.isfinite(arr.reshape(s.m, -1)).all(axis=1))[0, 0]) if s.m else 0
            out.append(Violation("non-finite", f"{name}.{fname} has non-finite value (splat {idx})"))
            return  # range checks below would be meaningless
    sq = np.sum(s.orientations.astype(np.float64) ** 2, axis=1)
    bad = np.flatnonzero(np.abs(np.sqrt(sq) - 1.0) > QUAT_NORM_TOL)
    for i in bad[:8]:
        out.append(Violation("orientation-norm", f"{name}: splat {i} quaternion norm {np.sqrt(sq[i]):.8f}"))
    for i in np.flatnonzero((s.opacities < 0) | (s.opacities > 1))[:8]:
        out.append(Violation("opacity-range", f"{name}: splat {i} opacity {s.opacities[i]!r} outside [0,1]"))
    for i in np.flatnonzero(((s.colors < 0) | (s.colors > 1)).any(axis=1))[:8]:
        out.append(Violation("color-range", f"{name}: splat {i} color outside [0,1]"))
    for i in np.flatnonzero((s.scales <= 0).any(axis=1))[:8]:
        out.append(Violation("scale-range", f"{name}: splat {i} scale not strictly positive"))


def validate_asset(asset: AvatarAsset) -> list:
    """Report every invariant violation; an empty list means the asset is valid."""
    report: list = []
    if len(asset.channel_names) != asset.k:
        report.append(Violation(
            "channel-count",
            f"{asset.k} components but {len(asset.channel_names)} channel names"))
    if asset.k == 16 and list(asset.channel_names) != list(FACS_CHANNELS):
        report.append(Violation("channel-names", "16-channel asset must use the canonical FACS list"))
    _validate_set("rest", asset.rest, report)
    for i, comp in enumerate(asset.components):
        label = asset.channel_names[i] if i < len(asset.channel_names) else f"component[{i}]"
        if comp.m != asset.rest.m:
            report.append(Violation(
                "count-mismatch",
                f"component {i} ({label}) has {comp.m} splats, rest has {asset.rest.m}"))
            continue
        _validate_set(label, comp, report)
    return report


@dataclass(frozen=True)
class ComponentDelta:
    """Max/mean absolute per-field difference of one component vs rest."""

    name: str
    max_abs: dict
    mean_abs: dict


def component_deltas(asset: AvatarAsset) -> list:
    """Per-component delta statistics against the rest pose.

    Used for sparsity reporting and for judging whether delta-encoded storage
    would pay off.
    """
    out = []
    field_of = dict(FIELD_LAYOUT)
    rename = {"positions": "position", "scales": "scale", "orientations": "orientation",
              "colors": "color", "opacities": "opacity"}
    del field_of
    for name, comp in zip(asset.channel_names, asset.components):
        mx, mn = {}, {}
        for (fname, a), (_, b) in zip(comp.field_arrays(), asset.rest.field_arrays()):
            d = np.abs(a.astype(np.float64) - b.astype(np.float64))
            key = rename[fname]
            mx[key] = float(d.max()) if d.size else 0.0
            mn[key] = float(d.mean()) if d.size else 0.0
        out.append(ComponentDelta(name, mx, mn))
    return out


# ---------------------------------------------------------------------------
# SMOJ binary I/O
#
# magic "SMOJ" | version u32 | M u32 | K u32 | flags u32 | name table
# (K x u16 length + UTF-8) | payload (rest then components: positions,
# scales, orientations, colors, opacities as f32 LE) | CRC32(payload) u32.
# ---------------------------------------------------------------------------


def save_asset(asset: AvatarAsset, path) -> int:
    """Write ``asset`` to ``path`` in SMOJ form; returns bytes written.

    Refuses invalid assets so every file on disk loads back cleanly.
    """
    violations = validate_asset(asset)
    if violations:
        raise InvalidAssetError(violations)
    head = SMOJ_MAGIC + struct.pack("<IIII", SMOJ_VERSION, asset.m, asset.k, 0)
    names = b"".join(
        struct.pack("<H", len(n.encode())) + n.encode() for n in asset.channel_names
    )
    chunks = []
    for s in [asset.rest, *asset.components]:
        for _, arr in s.field_arrays():
            chunks.append(np.ascontiguousarray(arr, "<f4").tobytes())
    payload = b"".join(chunks)
    crc = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    blob = head + names + payload + crc
    with open(path, "wb") as f:
        f.write(blob)
    return len(blob)


def load_asset(path, validate: bool = True) -> AvatarAsset:
    """Parse a SMOJ file; raises SmojParseError with the failing byte offset.

    With ``validate=True`` (default) the decoded asset must also pass
    validate_asset, raising InvalidAssetError otherwise.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != SMOJ_MAGIC:
        raise SmojParseError(0, "bad magic (not a SMOJ file)")
    if len(blob) < 20:
        raise SmojParseError(len(blob), "truncated header")
    version, m, k, flags = struct.unpack_from("<IIII", blob, 4)
    if version != SMOJ_VERSION:
        raise SmojParseError(4, f"unsupported format version {version}")
    if flags & FLAG_DELTA_COMPONENTS:
        raise SmojParseError(16, "delta-encoded components are reserved and not supported")
    if flags & ~FLAG_DELTA_COMPONENTS:
        raise SmojParseError(16, f"unknown flag bits 0x{flags:x}")
    off = 20
    names = []
    for i in range(k):
        if off + 2 > len(blob):
            raise SmojParseError(off, f"truncated in name table entry {i}")
        (n,) = struct.unpack_from("<H", blob, off)
        off += 2
        if off + n > len(blob):
            raise SmojParseError(off, f"truncated in name table entry {i}")
        try:
            names.append(blob[off:off + n].decode())
        except UnicodeDecodeError as e:
            raise SmojParseError(off, f"name table entry {i} is not UTF-8") from e
        off += n

    payload_start = off
    sets = []
    set_labels = ["rest"] + [f"component[{i}]" for i in range(k)]
    for label in set_labels:
        fields = {}
        for fname, width in FIELD_LAYOUT:
            count = m * width
            nbytes = count * 4
            if off + nbytes > len(blob) - 4:
                raise SmojParseError(off, f"truncated in {label}.{fname}")
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
            if not np.all(np.isfinite(arr)):
                raise SmojParseError(off, f"non-finite value in {label}.{fname}")
            shape = (m, width) if width > 1 else (m,)
            fields[fname] = arr.reshape(shape).copy()
            off += nbytes
        sets.append(GaussianSet(**fields))
    if off + 4 != len(blob):
        raise SmojParseError(off, "trailing bytes after payload")
    (stored_crc,) = struct.unpack_from("<I", blob, off)
    actual = zlib.crc32(blob[payload_start:off]) & 0xFFFFFFFF
    if stored_crc != actual:
        raise SmojParseError(off, f"payload CRC mismatch (stored {stored_crc:#x}, computed {actual:#x})")

    asset = AvatarAsset(rest=sets[0], components=sets[1:], channel_names=names)
    for s in [asset.rest, *asset.components]:
        for _, arr in s.field_arrays():
            arr.flags.writeable = False
    if validate:
        violations = validate_asset(asset)
        if violations:
            raise InvalidAssetError(violations)
    return asset


# ---------------------------------------------------------------------------
# Cameras
# ---------------------------------------------------------------------------


@dataclass
class Camera:
    """Pinhole camera: world-to-camera rigid transform plus pixel intrinsics.

    Convention: camera looks along +z, x right, y down; visible surface
    normals point toward the camera, i.e. have negative z.
    """

    rotation: np.ndarray  # (3, 3) world-to-camera
    translation: np.ndarray  # (3,)
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-6:
            raise ValueError(f"rotation not orthonormal (max deviation {err:.2e})")

    @classmethod
    def look_at(cls, eye, target, *, fx, fy=None, width, height,
                cx=None, cy=None, up=(0.0, 1.0, 0.0)) -> "Camera":
        eye = np.asarray(eye, np.float64)
        target = np.asarray(target, np.float64)
        forward = target - eye
        n = np.linalg.norm(forward)
        if n < 1e-12:
            raise ValueError("eye and target coincide")
        forward = forward / n
        up = np.asarray(up, np.float64)
        right = np.cross(forward, up)
        if np.linalg.norm(right) < 1e-8:  # looking straight along up
            right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
        right = right / np.linalg.norm(right)
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])
        return cls(
            rotation=rot, translation=-rot @ eye,
            fx=float(fx), fy=float(fy if fy is not None else fx),
            cx=float(cx if cx is not None else width / 2.0),
            cy=float(cy if cy is not None else height / 2.0),
            width=int(width), height=int(height),
        )

    def world_to_cam(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, np.float64) @ self.rotation.T + self.translation

    def project(self, points_cam: np.ndarray) -> np.ndarray:
        p = np.asarray(points_cam, np.float64)
        z = p[..., 2]
        return np.stack([
            p[..., 0] / z * self.fx + self.cx,
            p[..., 1] / z * self.fy + self.cy,
        ], axis=-1)

    def to_line(self) -> str:
        ext = np.eye(4)
        ext[:3, :3] = self.rotation
        ext[:3, 3] = self.translation
        vals = list(ext.reshape(-1)) + [self.fx, self.fy, self.cx, self.cy,
                                        float(self.width), float(self.height)]
        return " ".join(repr(float(v)) for v in vals)

    @classmethod
    def from_line(cls, line: str) -> "Camera":
        vals = [float(t) for t in line.split()]
        if len(vals) != 22:
            raise ValueError(f"camera line must have 22 values, got {len(vals)}")
        ext = np.array(vals[:16]).reshape(4, 4)
        fx, fy, cx, cy, w, h = vals[16:]
        return cls(rotation=ext[:3, :3], translation=ext[:3, 3],
                   fx=fx, fy=fy, cx=cx, cy=cy, width=int(w), height=int(h))


def save_cameras(path, cameras) -> None:
    with open(path, "w") as f:
        for cam in cameras:
            f.write(cam.to_line() + "\n")


def load_cameras(path) -> list:
    cams = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                cams.append(Camera.from_line(line))
    return cams
