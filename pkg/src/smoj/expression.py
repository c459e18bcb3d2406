"""Expression feature plumbing: code fusion and cross-attention kernels.

Weights are loaded from a manifest, never trained here. Matrix files carry an
ASCII header "SMWT v1 rows cols" followed by row-major little-endian float32
data; the manifest is a JSON file referencing them by relative path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

F_BS_DIM = 16
F_MM_DIM = 100
F_EXP_DIM = 16

ACTIVATIONS = ("silu", "identity")


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Numerically stable row softmax (max-subtracted)."""
    x = np.asarray(x, np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class AttentionSite:
    """Projection weights for one cross-attention site."""

    w_q: np.ndarray  # (D_in, d_k)
    w_k: np.ndarray  # (D_ctx, d_k)
    w_v: np.ndarray  # (D_ctx, d_v)

    def __post_init__(self):
        self.w_q = np.asarray(self.w_q, np.float64)
        self.w_k = np.asarray(self.w_k, np.float64)
        self.w_v = np.asarray(self.w_v, np.float64)
        if self.w_q.shape[1] != self.w_k.shape[1]:
            raise ValueError("query and key projections disagree on d_k")
        if self.d_k <= 0:
            raise ValueError("d_k must be positive")

    @property
    def d_k(self) -> int:
        return self.w_q.shape[1]


@dataclass
class MlpLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "silu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, np.float64)
        self.bias = np.asarray(self.bias, np.float64).reshape(-1)
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ValueError("bias length does not match layer output dim")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        y = self.weight @ x + self.bias
        return silu(y) if self.activation == "silu" else y


@dataclass
class PipelineWeights:
    """All loadable weights: expression projection, fusion MLP, attention sites."""

    projection: np.ndarray  # (16, 116)
    projection_bias: np.ndarray  # (16,)
    mlp: list  # of MlpLayer
    attention: dict = field(default_factory=dict)  # site name -> AttentionSite

    def __post_init__(self):
        self.projection = np.asarray(self.projection, np.float64)
        self.projection_bias = np.asarray(self.projection_bias, np.float64).reshape(-1)
        if self.projection.shape != (F_EXP_DIM, F_BS_DIM + F_MM_DIM):
            raise ValueError(
                f"projection must be ({F_EXP_DIM}, {F_BS_DIM + F_MM_DIM}), got {self.projection.shape}")
        if self.projection_bias.shape != (F_EXP_DIM,):
            raise ValueError("projection bias must have 16 entries")
        # MLP dims must chain: first layer consumes concat(f_exp, f_id)
        for prev, nxt in zip(self.mlp, self.mlp[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError("MLP layer dimensions do not compose")


@dataclass
class DriveFeature:
    """Fused drive vector paired with the untouched position map."""

    fused: np.ndarray
    position_map: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.fused)):
            raise ValueError("fused drive feature contains non-finite entries")


def encode_expression(f_bs: np.ndarray, f_mm: np.ndarray,
                      weights: PipelineWeights) -> np.ndarray:
    """Project concat(f_bs, f_mm) to the 16-d expression vector."""
    f_bs = np.asarray(f_bs, np.float64).reshape(-1)
    f_mm = np.asarray(f_mm, np.float64).reshape(-1)
    if f_bs.shape != (F_BS_DIM,) or f_mm.shape != (F_MM_DIM,):
        raise ValueError(f"expected dims ({F_BS_DIM},) and ({F_MM_DIM},), "
                         f"got {f_bs.shape} and {f_mm.shape}")
    return weights.projection @ np.concatenate([f_bs, f_mm]) + weights.projection_bias


def build_drive(f_exp: np.ndarray, f_id: np.ndarray, f_pos: np.ndarray,
                weights: PipelineWeights) -> DriveFeature:
    """Run the fusion MLP over concat(f_exp, f_id); f_pos passes through."""
    x = np.concatenate([np.asarray(f_exp, np.float64).reshape(-1),
                        np.asarray(f_id, np.float64).reshape(-1)])
    if weights.mlp and weights.mlp[0].weight.shape[1] != x.shape[0]:
        raise ValueError(
            f"MLP expects input dim {weights.mlp[0].weight.shape[1]}, got {x.shape[0]}")
    for layer in weights.mlp:
        x = layer(x)
    return DriveFeature(fused=x, position_map=np.asarray(f_pos))


def cross_attention(f_in: np.ndarray, f_ctx: np.ndarray,
                    site: AttentionSite) -> np.ndarray:
    """Single-context scaled dot-product attention, one head.

    out = softmax((f_in Wq)(f_ctx Wk)^T / sqrt(d_k)) (f_ctx Wv)
    """
    f_in = np.atleast_2d(np.asarray(f_in, np.float64))
    f_ctx = np.atleast_2d(np.asarray(f_ctx, np.float64))
    if f_in.shape[1] != site.w_q.shape[0]:
        raise ValueError(f"query dim {f_in.shape[1]} != W_Q rows {site.w_q.shape[0]}")
    if f_ctx.shape[1] != site.w_k.shape[0]:
        raise ValueError(f"context dim {f_ctx.shape[1]} != W_K rows {site.w_k.shape[0]}")
    logits = (f_in @ site.w_q) @ (f_ctx @ site.w_k).T / math.sqrt(site.d_k)
    return softmax_rows(logits) @ (f_ctx @ site.w_v)


def dual_cross_attention(f_sty: np.ndarray, f_ref: np.ndarray, f_txt: np.ndarray,
                         site: AttentionSite) -> np.ndarray:
    """Two-context attention with a shared query projection plus the
    residual scaled by 1/sqrt(d_k).

    out = attn(f_sty -> f_ref) + attn(f_sty -> f_txt) + f_sty / sqrt(d_k)

    The residual requires d_v == D_in so the sum is well-formed.
    """
    f_sty = np.atleast_2d(np.asarray(f_sty, np.float64))
    if site.w_v.shape[1] != f_sty.shape[1]:
        raise ValueError("dual attention residual needs value dim == input dim")
    return (cross_attention(f_sty, f_ref, site)
            + cross_attention(f_sty, f_txt, site)
            + residual_scale(f_sty, site.d_k))


def residual_scale(x: np.ndarray, d_k: int) -> np.ndarray:
    """The residual branch scaling, isolated so tests can pin the convention
    (division by sqrt(d_k))."""
    return x / math.sqrt(d_k)


# ---------------------------------------------------------------------------
# SMWT matrix files and the weights manifest
# ---------------------------------------------------------------------------


def save_matrix(path, mat: np.ndarray) -> None:
    mat = np.atleast_2d(np.asarray(mat, np.float32))
    with open(path, "wb") as f:
        f.write(f"SMWT v1 {mat.shape[0]} {mat.shape[1]}\n".encode())
        f.write(np.ascontiguousarray(mat, "<f4").tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().decode().split()
        if header[:2] != ["SMWT", "v1"] or len(header) != 4:
            raise ValueError(f"{path}: not a SMWT v1 matrix file")
        rows, cols = int(header[2]), int(header[3])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} floats, got {data.size}")
    return data.reshape(rows, cols).astype(np.float64)


def save_weights(manifest_path, weights: PipelineWeights) -> None:
    base = Path(manifest_path).parent
    mf = {"projection": {"weight": "proj_w.smwt", "bias": "proj_b.smwt"},
          "mlp": [], "attention": {}}
    save_matrix(base / "proj_w.smwt", weights.projection)
    save_matrix(base / "proj_b.smwt", weights.projection_bias[None, :])
    for i, layer in enumerate(weights.mlp):
        entry = {"weight": f"mlp{i}_w.smwt", "bias": f"mlp{i}_b.smwt",
                 "activation": layer.activation}
        save_matrix(base / entry["weight"], layer.weight)
        save_matrix(base / entry["bias"], layer.bias[None, :])
        mf["mlp"].append(entry)
    for name, site in weights.attention.items():
        entry = {"w_q": f"{name}_q.smwt", "w_k": f"{name}_k.smwt", "w_v": f"{name}_v.smwt"}
        save_matrix(base / entry["w_q"], site.w_q)
        save_matrix(base / entry["w_k"], site.w_k)
        save_matrix(base / entry["w_v"], site.w_v)
        mf["attention"][name] = entry
    with open(manifest_path, "w") as f:
        json.dump(mf, f, indent=2)


def load_weights(manifest_path) -> PipelineWeights:
    base = Path(manifest_path).parent
    with open(manifest_path) as f:
        mf = json.load(f)
    proj = load_matrix(base / mf["projection"]["weight"])
    bias = load_matrix(base / mf["projection"]["bias"]).reshape(-1)
    mlp = [MlpLayer(load_matrix(base / e["weight"]),
                    load_matrix(base / e["bias"]).reshape(-1),
                    e.get("activation", "silu"))
           for e in mf.get("mlp", [])]
    attention = {name: AttentionSite(load_matrix(base / e["w_q"]),
                                     load_matrix(base / e["w_k"]),
                                     load_matrix(base / e["w_v"]))
                 for name, e in mf.get("attention", {}).items()}
    return PipelineWeights(projection=proj, projection_bias=bias, mlp=mlp,
                           attention=attention)
