import numpy as np
import pytest

from smoj.losses import (
    LossWeights,
    l_dist,
    l_gda,
    l_normal,
    l_render,
    normalization_backward,
    psnr,
    total_3dgen_loss,
)
from smoj.rendering import RenderConfig, RayDistortionInput, render_with_rays
from smoj.rendering.config import RenderOutput
from smoj.synthetic import frontal_camera, random_scene


def make_output(rgb, alpha, depth=None, normal=None):
    rgb = np.asarray(rgb, np.float32)
    alpha = np.asarray(alpha, np.float32)
    h, w = alpha.shape
    return RenderOutput(
        rgb=rgb,
        alpha=alpha,
        depth=np.zeros((h, w), np.float32) if depth is None else np.asarray(depth, np.float32),
        normal=np.zeros((h, w, 3), np.float32) if normal is None else np.asarray(normal, np.float32),
    )


def test_l_render_zero_on_match(rng):
    rgb = rng.random((4, 4, 3))
    alpha = rng.random((4, 4))
    v, g_rgb, g_a = l_render(make_output(rgb, alpha), rgb.astype(np.float32), alpha.astype(np.float32))
    assert v == 0
    assert np.all(g_rgb == 0) and np.all(g_a == 0)


def test_l_render_hand_value():
    # 2x2 image, one channel of one pixel off by +0.1: loss = 0.01 / 12
    rgb = np.zeros((2, 2, 3))
    gt = rgb.copy()
    rgb[0, 1, 2] = 0.1
    v, _, _ = l_render(make_output(rgb, np.zeros((2, 2))), gt, np.zeros((2, 2)))
    assert v == pytest.approx(0.01 / 12, rel=1e-6)  # float32 buffer storage


def test_l_render_gradient_matches_fd(rng):
    # float64 buffers so central differences of the quadratic are exact
    rgb = rng.random((4, 4, 3))
    alpha = rng.random((4, 4))
    gt_rgb = rng.random((4, 4, 3))
    gt_a = rng.random((4, 4))
    out = RenderOutput(rgb=rgb, alpha=alpha, depth=np.zeros((4, 4)),
                       normal=np.zeros((4, 4, 3)))
    v, g_rgb, g_a = l_render(out, gt_rgb, gt_a)
    h = 1e-5
    for arr, grad in [(rgb, g_rgb), (alpha, g_a)]:
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            vp, _, _ = l_render(out, gt_rgb, gt_a)
            flat[j] = orig - h
            vm, _, _ = l_render(out, gt_rgb, gt_a)
            flat[j] = orig
            fd = (vp - vm) / (2 * h)
            assert fd == pytest.approx(gflat[j], rel=1e-5, abs=1e-12)


def test_l_render_shape_mismatch():
    with pytest.raises(ValueError):
        l_render(make_output(np.zeros((2, 2, 3)), np.zeros((2, 2))),
                 np.zeros((3, 3, 3)), np.zeros((3, 3)))


def test_l_normal_anchors(rng):
    n = rng.normal(size=(8, 8, 3))
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    valid = np.ones((8, 8), bool)
    assert l_normal(n, n, valid)[0] == pytest.approx(0.0, abs=1e-6)
    assert l_normal(n, -n, valid)[0] == pytest.approx(2.0, abs=1e-6)
    # orthogonal field: rotate each vector into any perpendicular direction
    ref = np.cross(n, np.roll(n, 1, axis=0))
    ref /= np.linalg.norm(ref, axis=-1, keepdims=True)
    assert l_normal(n, ref, valid)[0] == pytest.approx(1.0, abs=1e-6)


def test_l_normal_empty_mask_is_zero(rng):
    n = rng.normal(size=(4, 4, 3))
    v, g = l_normal(n, n, np.zeros((4, 4), bool))
    assert v == 0.0 and np.all(g == 0)


def test_l_normal_gradient():
    n_surf = np.zeros((2, 2, 3))
    n_surf[..., 2] = -1.0
    n_pred = n_surf.copy()
    valid = np.ones((2, 2), bool)
    _, g = l_normal(n_pred, n_surf, valid)
    assert np.allclose(g, -n_surf / 4)


def test_normalization_backward_chain_rule(rng):
    raw = rng.normal(size=(5, 3)) * 2
    upstream = rng.normal(size=(5, 3))
    g = normalization_backward(upstream, raw)
    h = 1e-6
    for i in range(5):
        for c in range(3):
            p = raw.copy()
            p[i, c] += h
            up = np.sum(upstream * (p / np.linalg.norm(p, axis=-1, keepdims=True)))
            p[i, c] -= 2 * h
            um = np.sum(upstream * (p / np.linalg.norm(p, axis=-1, keepdims=True)))
            fd = (up - um) / (2 * h)
            assert fd == pytest.approx(g[i, c], rel=1e-4, abs=1e-8)


def test_l_dist_identical_depths_zero():
    rays = RayDistortionInput.from_lists([(np.array([0.5, 0.3]), np.array([2.0, 2.0]))])
    v, gw, gd = l_dist(rays)
    assert v == 0.0
    assert np.all(gd == 0)


def test_l_dist_hand_value():
    # one ray, weights 1 and 1, depths 1 and 3: both orderings counted -> 4.0
    rays = RayDistortionInput.from_lists([(np.array([1.0, 1.0]), np.array([1.0, 3.0]))])
    v, gw, gd = l_dist(rays)
    assert v == pytest.approx(4.0, rel=1e-12)
    # gradients: dL/dw_k = 2 * sum_j w_j |d_k - d_j|; dL/dd_k = 2 w_k sum_j w_j sign
    assert np.allclose(gw, [4.0, 4.0])
    assert np.allclose(gd, [-2.0, 2.0])


def test_l_dist_empty_rays_count_toward_mean():
    rays = RayDistortionInput.from_lists([
        (np.array([1.0, 1.0]), np.array([1.0, 3.0])),
        (np.array([]), np.array([])),
    ])
    v, _, _ = l_dist(rays)
    assert v == pytest.approx(2.0)


def test_l_dist_gradient_matches_fd(rng):
    per_ray = []
    for _ in range(6):
        k = int(rng.integers(2, 6))
        per_ray.append((rng.uniform(0.05, 0.9, k), rng.uniform(1, 5, k)))
    rays = RayDistortionInput.from_lists(per_ray)
    v, gw, gd = l_dist(rays)
    h = 1e-5
    for arr, grad in [(rays.weights, gw), (rays.depths, gd)]:
        for j in range(len(arr)):
            orig = arr[j]
            arr[j] = orig + h
            vp, _, _ = l_dist(rays)
            arr[j] = orig - h
            vm, _, _ = l_dist(rays)
            arr[j] = orig
            fd = (vp - vm) / (2 * h)
            assert abs(fd - grad[j]) <= 1e-4 * max(1.0, abs(grad[j]))


def test_l_gda_cases(rng):
    img = rng.random((4, 4, 3))
    v, report = l_gda(img, img)
    assert v == 0.0 and report["perceptual"] == "disabled"
    v2, report2 = l_gda(img, img, perceptual=lambda a, b: 0.5)
    assert v2 == pytest.approx(0.5)
    assert report2["perceptual"] == 0.5
    # known 2x2 difference
    a = np.zeros((2, 2, 3))
    b = a.copy()
    b[0, 0, 0] = 0.5
    v3, _ = l_gda(a, b)
    assert v3 == pytest.approx(0.25 / 12)


def test_total_loss_gate(rng):
    scene = random_scene(rng, 8)
    cam = frontal_camera(24, 24, distance=3.0)
    cfg = RenderConfig()
    out, rays = render_with_rays(scene, cam, cfg)
    gt_rgb = rng.random((24, 24, 3))
    gt_mask = rng.random((24, 24))
    weights = LossWeights(normal=0.7, dist=2.0)
    n_surf = rng.normal(size=(24, 24, 3))
    n_surf /= np.linalg.norm(n_surf, axis=-1, keepdims=True)

    before = total_3dgen_loss(out, gt_rgb, gt_mask, weights, 0.19,
                              n_surf=n_surf, rays=rays)
    after = total_3dgen_loss(out, gt_rgb, gt_mask, weights, 0.21,
                             n_surf=n_surf, rays=rays)
    boundary = total_3dgen_loss(out, gt_rgb, gt_mask, weights, 0.2,
                                n_surf=n_surf, rays=rays)
    assert before.gate == 0.0 and after.gate == 1.0
    assert boundary.gate == 1.0  # inclusive boundary
    expected_jump = 0.7 * after.normal_raw + 2.0 * after.dist_raw
    assert after.total - before.total == pytest.approx(expected_jump, rel=1e-12)
    # below the gate the total is numerically independent of the lambdas
    before2 = total_3dgen_loss(out, gt_rgb, gt_mask,
                               LossWeights(normal=123.0, dist=456.0), 0.19,
                               n_surf=n_surf, rays=rays)
    assert before2.total == before.total


def test_total_loss_zero_lambdas(rng):
    scene = random_scene(rng, 5)
    cam = frontal_camera(16, 16, distance=3.0)
    out, rays = render_with_rays(scene, cam, RenderConfig())
    gt = rng.random((16, 16, 3))
    mask = rng.random((16, 16))
    w = LossWeights(lpips=0.0, normal=0.0, dist=0.0)
    b = total_3dgen_loss(out, gt, mask, w, 1.0, rays=rays)
    assert b.total == pytest.approx(b.render, rel=1e-15)


def test_total_loss_perceptual_plugin(rng):
    out = make_output(rng.random((4, 4, 3)), rng.random((4, 4)))
    gt = rng.random((4, 4, 3))
    w = LossWeights(lpips=2.0)
    b = total_3dgen_loss(out, gt, np.zeros((4, 4)), w, 0.0,
                         perceptual=lambda a, t: 0.25)
    assert b.weighted["lpips"] == pytest.approx(0.5)


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(normal=-1.0)
    with pytest.raises(ValueError):
        LossWeights(schedule_fraction=1.5)


def test_psnr():
    a = np.zeros((4, 4, 3))
    b = np.full((4, 4, 3), 0.1)
    assert psnr(a, b) == pytest.approx(20.0, rel=1e-6)
    assert psnr(a, a) == float("inf")
