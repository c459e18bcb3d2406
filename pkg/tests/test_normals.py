import numpy as np
import pytest

from smoj.assets import Camera
from smoj.rendering import normals_from_depth


def make_cam(w=32, h=32, fx=40.0):
    return Camera.look_at([0, 0, -1], [0, 0, 1], fx=fx, width=w, height=h)


def test_frontoparallel_plane():
    cam = make_cam()
    depth = np.full((32, 32), 2.5)
    n = normals_from_depth(depth, cam)
    interior = n[1:-1, 1:-1]
    assert np.allclose(interior, [0, 0, -1], atol=1e-6)
    # border pixels have no full neighborhood
    assert np.all(n[0] == 0) and np.all(n[-1] == 0)


def test_tilted_plane_matches_analytic():
    cam = make_cam(fx=64.0)
    # camera-space plane z = z0 + x, i.e. -x + z = z0, 45 degrees about y
    ys, xs = np.mgrid[0:32, 0:32]
    px = (xs + 0.5 - cam.cx) / cam.fx
    z0 = 3.0
    depth = z0 / (1.0 - px)
    n = normals_from_depth(depth, cam)
    expected = np.array([1.0, 0.0, -1.0]) / np.sqrt(2)
    interior = n[2:-2, 2:-2]
    assert np.abs(interior - expected).max() < 1e-3


def test_isolated_pixel_has_no_normal():
    cam = make_cam()
    depth = np.zeros((32, 32))
    depth[10, 10] = 2.0
    n = normals_from_depth(depth, cam)
    assert np.all(n == 0)


def test_hole_masks_neighbors():
    cam = make_cam()
    depth = np.full((32, 32), 2.0)
    depth[8, 8] = 0.0
    n = normals_from_depth(depth, cam)
    assert np.all(n[8, 8] == 0)
    assert np.all(n[8, 9] == 0) and np.all(n[9, 8] == 0)
    assert np.allclose(n[20, 20], [0, 0, -1], atol=1e-6)


def test_size_mismatch_rejected():
    cam = make_cam()
    with pytest.raises(ValueError):
        normals_from_depth(np.zeros((16, 16)), cam)
