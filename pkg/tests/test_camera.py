import numpy as np
import pytest

from facefuse.camera import (
    AffineCamera,
    estimate_affine_camera,
    normalize_points,
    project,
)
from facefuse.errors import (
    DegenerateConfigurationError,
    InsufficientCorrespondencesError,
)
from facefuse.synthetic import synthetic_camera


def random_camera(rng, scale=40.0):
    top = rng.standard_normal((2, 4)) * scale
    matrix = np.vstack([top, [0.0, 0.0, 0.0, 1.0]])
    return AffineCamera(matrix)


def random_points(rng, n=10, spread=1.0):
    # sprinkle and reject near-degenerate clouds
    while True:
        pts = rng.standard_normal((n, 3)) * spread
        if np.linalg.matrix_rank(pts - pts.mean(0)) == 3:
            return pts


def test_projection_matches_manual_rows(rng):
    cam = random_camera(rng)
    pts = random_points(rng, 5)
    got = cam.project(pts)
    m = cam.matrix
    for i, p in enumerate(pts):
        x = m[0, 0] * p[0] + m[0, 1] * p[1] + m[0, 2] * p[2] + m[0, 3]
        y = m[1, 0] * p[0] + m[1, 1] * p[1] + m[1, 2] * p[2] + m[1, 3]
        assert np.allclose(got[i], [x, y], atol=1e-12)


def test_projection_single_point_shape(rng):
    cam = random_camera(rng)
    p = cam.project(np.array([1.0, 2.0, 3.0]))
    assert p.shape == (2,)
    assert np.allclose(p, project(cam, [1.0, 2.0, 3.0]))


def test_bottom_row_is_pinned():
    m = np.arange(12, dtype=float).reshape(3, 4)
    cam = AffineCamera(m)
    assert np.array_equal(cam.matrix[2], [0.0, 0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        cam.matrix[0, 0] = 99.0  # read-only


def test_normalization_statistics(rng):
    pts2 = rng.uniform(10, 200, (12, 2))
    pts3 = random_points(rng, 12, 3.0)
    norm = normalize_points(pts2, pts3)
    t2 = norm.apply2d(pts2)
    t3 = norm.apply3d(pts3)
    assert np.allclose(t2.mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(t3.mean(axis=0), 0.0, atol=1e-9)
    assert abs(np.sqrt(np.mean(np.sum(t2 ** 2, axis=1))) - np.sqrt(2)) < 1e-9
    assert abs(np.sqrt(np.mean(np.sum(t3 ** 2, axis=1))) - np.sqrt(3)) < 1e-9


def test_normalization_rejects_coincident_points():
    pts2 = np.zeros((5, 2))
    pts3 = np.zeros((5, 3))
    with pytest.raises(DegenerateConfigurationError):
        normalize_points(pts2, pts3 + np.arange(15).reshape(5, 3))
    with pytest.raises(DegenerateConfigurationError):
        normalize_points(pts2 + np.arange(10).reshape(5, 2), pts3)


def test_estimation_recovers_exact_camera(rng):
    for _ in range(20):
        cam = random_camera(rng)
        pts3 = random_points(rng, 10)
        pts2 = cam.project(pts3)
        est = estimate_affine_camera(pts2, pts3)
        assert np.allclose(est.matrix, cam.matrix, atol=1e-8)
        reproj = est.project(pts3)
        assert np.sqrt(np.mean((reproj - pts2) ** 2)) < 1e-9


def test_estimation_handles_badly_scaled_data(rng):
    # normalization makes the solve independent of raw units
    cam = random_camera(rng, scale=1.0)
    pts3 = random_points(rng, 8, spread=1e-3)
    pts2 = cam.project(pts3) * 1.0 + 1e4
    shifted = AffineCamera(cam.matrix + np.array([[0, 0, 0, 1e4],
                                                  [0, 0, 0, 1e4],
                                                  [0, 0, 0, 0.0]]))
    est = estimate_affine_camera(pts2, pts3)
    assert np.sqrt(np.mean((est.project(pts3) - pts2) ** 2)) < 1e-6
    assert np.allclose(est.matrix, shifted.matrix, rtol=1e-5, atol=1e-5)


def test_estimation_is_least_squares_optimum(rng):
    # probe: no small perturbation of the 8 free entries may reduce the
    # reprojection SSE (the normalizing map is a uniform-scale similarity,
    # so the normalized and raw objectives share their minimizer)
    cam = random_camera(rng)
    pts3 = random_points(rng, 12)
    pts2 = cam.project(pts3) + rng.standard_normal((12, 2)) * 0.5
    est = estimate_affine_camera(pts2, pts3)
    base = np.sum((est.project(pts3) - pts2) ** 2)
    for _ in range(200):
        delta = np.zeros((3, 4))
        delta[:2] = rng.standard_normal((2, 4)) * 1e-4
        trial = AffineCamera(est.matrix + delta)
        trial_sse = np.sum((trial.project(pts3) - pts2) ** 2)
        assert trial_sse >= base - 1e-9 * max(base, 1.0)


def test_estimation_insufficient_points(rng):
    pts3 = random_points(rng, 4)
    cam = random_camera(rng)
    pts2 = cam.project(pts3)
    with pytest.raises(InsufficientCorrespondencesError):
        estimate_affine_camera(pts2[:3], pts3[:3])
    # exactly 4 non-degenerate points are fine
    est = estimate_affine_camera(pts2, pts3)
    assert np.allclose(est.project(pts3), pts2, atol=1e-7)


def test_estimation_degenerate_rank(rng):
    # collinear 3D points cannot pin down 8 dof
    t = np.linspace(0, 1, 10)[:, None]
    pts3 = t * np.array([1.0, 2.0, 3.0]) + np.array([0.5, 0.0, -1.0])
    cam = random_camera(rng)
    pts2 = cam.project(pts3)
    with pytest.raises(DegenerateConfigurationError) as err:
        estimate_affine_camera(pts2, pts3)
    assert err.value.rank is not None and err.value.rank < 8


def test_view_direction_and_depth_frontal():
    cam = synthetic_camera(0.0)
    view = cam.view_direction()
    assert np.allclose(view, [0.0, 0.0, 1.0], atol=1e-12)
    # nearer points (larger z) have smaller depth, so min-depth wins
    assert cam.depth(np.array([0.0, 0.0, 1.0])) < cam.depth(np.array([0.0, 0.0, 0.0]))


def test_yaw_indicator_sides():
    assert synthetic_camera(25.0).front_facing_side() == "left"
    assert synthetic_camera(-25.0).front_facing_side() == "right"
    # indicator changes sign with the yaw
    assert synthetic_camera(25.0).yaw_indicator() > 0
    assert synthetic_camera(-25.0).yaw_indicator() < 0


def test_view_direction_yawed_camera():
    # rotating the model +beta about y swings the view vector in x
    beta = np.deg2rad(30.0)
    cam = synthetic_camera(30.0)
    view = cam.view_direction()
    assert np.allclose(view, [-np.sin(beta), 0.0, np.cos(beta)], atol=1e-12)
