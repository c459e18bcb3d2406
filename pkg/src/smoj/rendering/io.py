"""Buffer file formats: SMIM raw float dumps and PNG previews.

SMIM: ASCII header line "SMIM v1 H W C" followed by H*W*C little-endian
float32 values, row-major. Bit-exact by construction, which is what the loss
pipeline and golden tests rely on.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .config import RenderOutput


def save_buffer(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, np.float32)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ValueError("buffer must be HxW or HxWxC")
    h, w, c = arr.shape
    with open(path, "wb") as f:
        f.write(f"SMIM v1 {h} {w} {c}\n".encode())
        f.write(np.ascontiguousarray(arr, "<f4").tobytes())


def load_buffer(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().decode().split()
        if header[:2] != ["SMIM", "v1"] or len(header) != 5:
            raise ValueError(f"{path}: not a SMIM v1 buffer")
        h, w, c = (int(x) for x in header[2:])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != h * w * c:
        raise ValueError(f"{path}: expected {h * w * c} floats, got {data.size}")
    arr = data.reshape(h, w, c)
    return arr[..., 0] if c == 1 else arr


def save_png(path, rgb: np.ndarray, alpha: np.ndarray | None = None) -> None:
    """8-bit preview; optional alpha channel."""
    img = (np.clip(np.asarray(rgb, np.float64), 0, 1) * 255.0 + 0.5).astype(np.uint8)
    if alpha is not None:
        a = (np.clip(np.asarray(alpha, np.float64), 0, 1) * 255.0 + 0.5).astype(np.uint8)
        img = np.concatenate([img, a[..., None]], axis=-1)
        Image.fromarray(img, "RGBA").save(path)
    else:
        Image.fromarray(img, "RGB").save(path)


def save_render(prefix, out: RenderOutput, *, png: bool = True,
                normals: bool = False) -> list:
    """Write rgb/alpha (and optionally depth+normal) buffers for one view.

    Returns the list of written paths.
    """
    paths = []
    for name, arr in [("rgb", out.rgb), ("alpha", out.alpha), ("depth", out.depth)]:
        p = f"{prefix}.{name}.smim"
        save_buffer(p, arr)
        paths.append(p)
    if normals:
        p = f"{prefix}.normal.smim"
        save_buffer(p, out.normal)
        paths.append(p)
    if png:
        p = f"{prefix}.png"
        save_png(p, out.rgb, out.alpha)
        paths.append(p)
    return paths
