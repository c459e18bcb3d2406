"""Multi-view fitting: recover a Gaussian set from target renders.

First-order adaptive-moment descent on all Gaussian fields with per-group
learning rates. After every step quaternions are renormalized and opacity,
color, and scale are projected back into their valid ranges. The whole loop
is deterministic: gradients reduce over views and tiles in a fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assets import GaussianSet, normalize_quaternions
from .losses import LossWeights, l_normal, l_render, psnr
from .rendering.api import render
from .rendering.backward import backprop_render
from .rendering.config import MODE_2DGS, RenderConfig, RenderOutput
from .rendering.normals import normals_from_depth

PARAM_GROUPS = ("positions", "scales", "orientations", "colors", "opacities")


@dataclass
class FitConfig:
    iterations: int = 2000
    learning_rates: dict = field(default_factory=lambda: {
        "positions": 1.6e-4,
        "scales": 5e-3,
        "orientations": 1e-3,
        "colors": 2.5e-3,
        "opacities": 5e-2,
    })
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scale_min: float = 1e-6
    seed: int = 0  # reserved for stochastic extensions; the loop itself is deterministic
    perceptual: object = None  # optional callable (rgb, gt) -> (value, grad or None)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        for g in PARAM_GROUPS:
            if self.learning_rates.get(g, 0.0) < 0:
                raise ValueError(f"learning rate for {g} must be >= 0")


@dataclass
class HistoryRow:
    iteration: int
    total: float
    render: float
    normal: float
    dist: float

    def line(self) -> str:
        return f"{self.iteration},{self.total:.8g},{self.render:.8g},{self.normal:.8g},{self.dist:.8g}"


class FitDiverged(RuntimeError):
    def __init__(self, history):
        self.history = history
        super().__init__(f"loss became non-finite at iteration {len(history)}")


@dataclass
class FitResult:
    gaussians: GaussianSet
    history: list
    psnr_per_view: list


def _as_target(t):
    if isinstance(t, RenderOutput):
        return t.rgb.astype(np.float64), t.alpha.astype(np.float64)
    rgb, mask = t
    return np.asarray(rgb, np.float64), np.asarray(mask, np.float64)


def fit(targets, cameras, init: GaussianSet, cfg: FitConfig | None = None,
        weights: LossWeights | None = None,
        render_cfg: RenderConfig | None = None,
        log_fn=None) -> FitResult:
    """Fit ``init`` to multi-view targets (RenderOutputs or (rgb, mask) pairs).

    The optimized loss is the view-mean of render + gated distortion terms;
    the normal term is evaluated and logged (2dgs mode) but does not feed
    parameter gradients, since the normal buffer sits outside the renderer's
    backward contract. Raises FitDiverged when the loss goes non-finite.
    """
    cfg = cfg or FitConfig()
    weights = weights or LossWeights()
    render_cfg = render_cfg or RenderConfig()
    if len(targets) != len(cameras) or not targets:
        raise ValueError("need one camera per target view (at least one)")
    pairs = [_as_target(t) for t in targets]
    n_views = len(pairs)

    params = {
        "positions": init.positions.astype(np.float64),
        "scales": init.scales.astype(np.float64),
        "orientations": init.orientations.astype(np.float64),
        "colors": init.colors.astype(np.float64),
        "opacities": init.opacities.astype(np.float64),
    }
    mom = {g: np.zeros_like(params[g]) for g in PARAM_GROUPS}
    vel = {g: np.zeros_like(params[g]) for g in PARAM_GROUPS}
    history: list = []

    def snapshot() -> GaussianSet:
        return GaussianSet(
            positions=params["positions"].astype(np.float32),
            scales=params["scales"].astype(np.float32),
            orientations=params["orientations"].astype(np.float32),
            colors=params["colors"].astype(np.float32),
            opacities=params["opacities"].astype(np.float32),
        )

    for it in range(cfg.iterations):
        progress = it / cfg.iterations
        gate = 1.0 if progress >= weights.schedule_fraction else 0.0
        current = snapshot()
        grads = {g: np.zeros_like(params[g]) for g in PARAM_GROUPS}
        total = render_total = normal_total = dist_total = 0.0
        for (gt_rgb, gt_mask), cam in zip(pairs, cameras):
            out = render(current, cam, render_cfg)
            r_val, g_rgb, g_alpha = l_render(out, gt_rgb, gt_mask)
            n_rays = cam.width * cam.height
            dist_coeff = gate * weights.dist / (n_rays * n_views)
            pg = backprop_render(current, cam, render_cfg,
                                 grad_rgb=g_rgb / n_views,
                                 grad_alpha=g_alpha / n_views,
                                 distortion_coeff=dist_coeff)
            for g in PARAM_GROUPS:
                grads[g] += getattr(pg, g)
            dist_val = pg.distortion_sum / n_rays
            normal_val = 0.0
            if render_cfg.mode_id == MODE_2DGS and weights.normal > 0:
                n_surf = normals_from_depth(out.depth, cam)
                valid = (np.linalg.norm(out.normal, axis=-1) > 0) \
                    & (np.linalg.norm(n_surf, axis=-1) > 0)
                normal_val, _ = l_normal(out.normal, n_surf, valid)
            render_total += r_val / n_views
            normal_total += normal_val / n_views
            dist_total += dist_val / n_views
        total = render_total + gate * (weights.normal * normal_total
                                       + weights.dist * dist_total)
        row = HistoryRow(it, total, render_total, normal_total, dist_total)
        history.append(row)
        if log_fn is not None:
            log_fn(row)
        if not np.isfinite(total):
            raise FitDiverged(history)

        t = it + 1
        bc1 = 1.0 - cfg.beta1**t
        bc2 = 1.0 - cfg.beta2**t
        for g in PARAM_GROUPS:
            lr = cfg.learning_rates.get(g, 0.0)
            mom[g] = cfg.beta1 * mom[g] + (1 - cfg.beta1) * grads[g]
            vel[g] = cfg.beta2 * vel[g] + (1 - cfg.beta2) * grads[g] ** 2
            if lr > 0:
                params[g] -= lr * (mom[g] / bc1) / (np.sqrt(vel[g] / bc2) + cfg.eps)
        # projections back into the valid parameter domain
        np.clip(params["opacities"], 0.0, 1.0, out=params["opacities"])
        np.clip(params["colors"], 0.0, 1.0, out=params["colors"])
        np.maximum(params["scales"], cfg.scale_min, out=params["scales"])
        params["orientations"] = normalize_quaternions(params["orientations"])

    final = snapshot()
    psnrs = [psnr(render(final, cam, render_cfg).rgb, gt_rgb)
             for (gt_rgb, _), cam in zip(pairs, cameras)]
    return FitResult(gaussians=final, history=history, psnr_per_view=psnrs)
