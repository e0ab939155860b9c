import numpy as np

from facefuse.render import (
    barycentric_grid,
    depth_buffer,
    render_mesh,
    sample_image_bilinear,
    sample_texture_bilinear,
    triangle_normals,
)
from facefuse.synthetic import synthetic_camera


def test_barycentric_grid_matches_linear_solve(rng):
    # the function evaluates the full row-by-column grid
    tri = rng.uniform(0, 20, (3, 2))
    xs = rng.uniform(-2, 22, 8)
    ys = rng.uniform(-2, 22, 7)
    out = barycentric_grid(tri, xs, ys)
    assert out is not None
    w0, w1, w2 = out
    assert w0.shape == (7, 8)
    a_mat = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    for r in range(7):
        for c in range(8):
            # reference: solve [p1-p0, p2-p0] [a, b]^T = p - p0
            ab = np.linalg.solve(a_mat, np.array([xs[c], ys[r]]) - tri[0])
            assert abs(w1[r, c] - ab[0]) < 1e-9
            assert abs(w2[r, c] - ab[1]) < 1e-9
            assert abs(w0[r, c] - (1 - ab.sum())) < 1e-9


def test_barycentric_grid_degenerate_returns_none():
    tri = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    assert barycentric_grid(tri, np.array([0.5]), np.array([0.5])) is None


def test_triangle_normals_unit_and_oriented():
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    tris = np.array([[0, 1, 2]])
    n = triangle_normals(verts, tris)
    # counter-clockwise seen from +z points toward +z
    assert np.allclose(n[0], [0.0, 0.0, 1.0], atol=1e-12)
    assert abs(np.linalg.norm(n[0]) - 1.0) < 1e-12


def test_depth_buffer_keeps_nearest():
    # two stacked triangles; the frontal camera's depth is -z, so the
    # z = 1 triangle (depth -1) wins every covered pixel
    verts = np.array([
        [-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 1.0, 0.0],
        [-1.0, -1.0, 1.0], [1.0, -1.0, 1.0], [0.0, 1.0, 1.0],
    ])
    tris = np.array([[0, 1, 2], [3, 4, 5]])
    cam = synthetic_camera(0.0, scale=20.0, center=(32.0, 32.0))
    buf = depth_buffer(verts, tris, cam, (64, 64))
    covered = np.isfinite(buf)
    assert covered.sum() > 50
    assert np.allclose(buf[covered], -1.0, atol=1e-9)


def test_render_z_order_and_background(rng):
    # near quad textured red, far quad green, identical footprint
    verts = np.array([
        [-1.0, -1.0, 1.0], [1.0, -1.0, 1.0], [-1.0, 1.0, 1.0], [1.0, 1.0, 1.0],
        [-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [1.0, 1.0, 0.0],
    ])
    tris = np.array([[0, 1, 3], [0, 3, 2], [4, 5, 7], [4, 7, 6]])
    uv = np.array([[0.0, 0.0], [0.45, 0.0], [0.0, 1.0], [0.45, 1.0],
                   [0.55, 0.0], [1.0, 0.0], [0.55, 1.0], [1.0, 1.0]])
    texture = np.zeros((32, 32, 3), dtype=np.float32)
    texture[:, :16, 0] = 1.0   # left uv half: red
    texture[:, 16:, 1] = 1.0   # right uv half: green
    cam = synthetic_camera(0.0, scale=20.0, center=(32.0, 32.0))
    img = render_mesh(verts, tris, uv, texture, cam, (64, 64))
    assert img.shape == (64, 64, 4)
    hit = img[..., 3] > 0
    assert hit.sum() > 500
    # every covered pixel shows the near (red) surface
    assert np.all(img[hit][:, 0] > 0.5)
    assert np.all(img[hit][:, 1] < 0.5)
    assert np.all(img[~hit][:, :3] == 0.0)


def test_render_culls_back_faces():
    verts = np.array([[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 1.0, 0.0]])
    tris = np.array([[0, 1, 2]])
    uv = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]])
    texture = np.full((8, 8, 3), 0.7, dtype=np.float32)
    front = render_mesh(verts, tris, uv, texture, synthetic_camera(0.0, 20.0, (32, 32)),
                        (64, 64))
    back = render_mesh(verts, tris, uv, texture, synthetic_camera(180.0, 20.0, (32, 32)),
                       (64, 64))
    assert (front[..., 3] > 0).sum() > 100
    assert (back[..., 3] > 0).sum() == 0


def test_texture_sampling_conventions():
    # row 0 of the array is the v = 1 edge; texel centers sit at
    # half-integer uv offsets
    res = 4
    texture = np.arange(res * res * 3, dtype=np.float32).reshape(res, res, 3)
    got = sample_texture_bilinear(texture, np.array([0.125]), np.array([0.875]))
    assert np.allclose(got[0], texture[0, 0])
    got2 = sample_texture_bilinear(texture, np.array([0.875]), np.array([0.125]))
    assert np.allclose(got2[0], texture[3, 3])


def test_image_sampling_interpolates(rng):
    img = np.zeros((4, 4, 3), dtype=np.float32)
    img[1, 1] = 1.0
    img[1, 2] = 3.0
    # halfway between two pixel centers
    got = sample_image_bilinear(img, np.array([1.5]), np.array([1.0]))
    assert np.allclose(got[0], 2.0)
    # clamped outside the grid
    edge = sample_image_bilinear(img, np.array([-5.0]), np.array([1.0]))
    assert np.allclose(edge[0], img[1, 0])
