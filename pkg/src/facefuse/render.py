"""Software rasterization of the textured mesh under an affine camera.

Pixel convention: continuous coordinate (x, y) = (c, r) is the center of
image array element [r, c], x right, y down. Texture convention: texel
[ty, tx] of an R x R map covers uv = ((tx+0.5)/R, 1-(ty+0.5)/R), so array
row 0 is the v = 1 edge (image top when exported).

Under an affine camera, barycentric coordinates measured in the projected
2D triangle equal the model-space ones, so depth and uv interpolate
linearly in screen space with no perspective correction.
"""

import numpy as np

from .camera import AffineCamera
from .model import BlendshapeSet, PcaShapeModel, generate_shape_with_expression


def barycentric_grid(tri2d, xs, ys):
    """Barycentric coordinates of grid points w.r.t. a 2D triangle.

    Args:
        tri2d: (3, 2) triangle vertices.
        xs: (W,) x coordinates of grid columns.
        ys: (H,) y coordinates of grid rows.

    Returns:
        (w0, w1, w2) arrays of shape (H, W), or None when the projected
        triangle is degenerate (zero signed area).
    """
    ax, ay = tri2d[0]
    bx, by = tri2d[1]
    cx, cy = tri2d[2]
    denom = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
    if abs(denom) < 1e-14:
        return None
    px = xs[None, :]
    py = ys[:, None]
    w0 = ((by - cy) * (px - cx) + (cx - bx) * (py - cy)) / denom
    w1 = ((cy - ay) * (px - cx) + (ax - cx) * (py - cy)) / denom
    w2 = 1.0 - w0 - w1
    return w0, w1, w2


def _triangle_bbox(tri2d, width, height):
    lo = np.floor(tri2d.min(axis=0)).astype(int)
    hi = np.ceil(tri2d.max(axis=0)).astype(int)
    x0 = max(lo[0], 0)
    y0 = max(lo[1], 0)
    x1 = min(hi[0], width - 1)
    y1 = min(hi[1], height - 1)
    if x0 > x1 or y0 > y1:
        return None
    return x0, x1, y0, y1


def sample_texture_bilinear(texture, u, v):
    """Bilinearly sample an (R, R, C) texture at uv coordinates.

    u, v are arrays of equal shape; coordinates are clamped to the border
    texel centers. Returns shape u.shape + (C,).
    """
    res = texture.shape[0]
    tx = np.clip(np.asarray(u) * res - 0.5, 0.0, res - 1.0)
    ty = np.clip((1.0 - np.asarray(v)) * res - 0.5, 0.0, res - 1.0)
    return _bilinear(texture, tx, ty)


def sample_image_bilinear(image, x, y):
    """Bilinearly sample an (H, W, C) image at pixel coordinates, clamped."""
    h, w = image.shape[:2]
    xc = np.clip(np.asarray(x, dtype=float), 0.0, w - 1.0)
    yc = np.clip(np.asarray(y, dtype=float), 0.0, h - 1.0)
    return _bilinear(image, xc, yc)


def _bilinear(grid, x, y):
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, grid.shape[1] - 1)
    y1 = np.minimum(y0 + 1, grid.shape[0] - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    g = grid.astype(float, copy=False)
    top = g[y0, x0] * (1.0 - fx) + g[y0, x1] * fx
    bot = g[y1, x0] * (1.0 - fx) + g[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def triangle_normals(vertices3, triangles):
    """Unit normals per triangle; (b-a) x (c-a), zero rows left unnormalized."""
    a = vertices3[triangles[:, 0]]
    b = vertices3[triangles[:, 1]]
    c = vertices3[triangles[:, 2]]
    n = np.cross(b - a, c - a)
    lens = np.linalg.norm(n, axis=1)
    ok = lens > 1e-14
    n[ok] /= lens[ok, None]
    return n


def depth_buffer(vertices3, triangles, camera: AffineCamera, shape, origin=(0.0, 0.0)):
    """Min-depth raster over ALL triangles (no backface culling).

    Args:
        vertices3: (N, 3) model-space vertices.
        triangles: (T, 3) int vertex indices.
        camera: projection to pixel coordinates.
        shape: (height, width) of the buffer.
        origin: (x, y) pixel coordinate of buffer element [0, 0].

    Returns:
        (height, width) float array of nearest depths, +inf where empty.
    """
    height, width = shape
    buf = np.full((height, width), np.inf)
    pts2 = camera.project(vertices3) - np.asarray(origin, dtype=float)
    depths = camera.depth(vertices3)
    for tri in triangles:
        tri2d = pts2[tri]
        box = _triangle_bbox(tri2d, width, height)
        if box is None:
            continue
        x0, x1, y0, y1 = box
        bary = barycentric_grid(tri2d, np.arange(x0, x1 + 1, dtype=float),
                                np.arange(y0, y1 + 1, dtype=float))
        if bary is None:
            continue
        w0, w1, w2 = bary
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        d = w0 * depths[tri[0]] + w1 * depths[tri[1]] + w2 * depths[tri[2]]
        window = buf[y0:y1 + 1, x0:x1 + 1]
        np.minimum(window, np.where(inside, d, np.inf), out=window)
    return buf


def render_mesh(vertices3, triangles, uv_coords, texture, camera: AffineCamera,
                image_size, background=0.0):
    """Rasterize a textured mesh to an RGBA image.

    Front-facing triangles only (normal toward the camera); z-buffered;
    uv interpolated barycentrically and sampled bilinearly. Returns an
    (H, W, 4) float32 array, alpha = 1 where any triangle was drawn.

    Args:
        image_size: (height, width) in pixels.
    """
    height, width = image_size
    img = np.full((height, width, 3), background, dtype=np.float32)
    alpha = np.zeros((height, width), dtype=np.float32)
    zbuf = np.full((height, width), np.inf)

    pts2 = camera.project(vertices3)
    depths = camera.depth(vertices3)
    normals = triangle_normals(vertices3, triangles)
    view = camera.view_direction()
    facing = normals @ view > 0.0

    for t, tri in enumerate(triangles):
        if not facing[t]:
            continue
        tri2d = pts2[tri]
        box = _triangle_bbox(tri2d, width, height)
        if box is None:
            continue
        x0, x1, y0, y1 = box
        bary = barycentric_grid(tri2d, np.arange(x0, x1 + 1, dtype=float),
                                np.arange(y0, y1 + 1, dtype=float))
        if bary is None:
            continue
        w0, w1, w2 = bary
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        d = w0 * depths[tri[0]] + w1 * depths[tri[1]] + w2 * depths[tri[2]]
        zwin = zbuf[y0:y1 + 1, x0:x1 + 1]
        win = inside & (d < zwin)
        if not win.any():
            continue
        u = w0 * uv_coords[tri[0], 0] + w1 * uv_coords[tri[1], 0] + w2 * uv_coords[tri[2], 0]
        v = w0 * uv_coords[tri[0], 1] + w1 * uv_coords[tri[1], 1] + w2 * uv_coords[tri[2], 1]
        colors = sample_texture_bilinear(texture, u[win], v[win])
        rows, cols = np.nonzero(win)
        img[y0 + rows, x0 + cols] = colors
        alpha[y0 + rows, x0 + cols] = 1.0
        zwin[win] = d[win]

    return np.concatenate([img, alpha[..., None]], axis=2)


def render_view(model: PcaShapeModel, blendshapes: BlendshapeSet, alpha, psi,
                fused_texture, camera: AffineCamera, image_size, background=0.0):
    """Render the model instance S(alpha, psi) with a fused texture.

    Passing psi = zeros gives the expression-neutral rendering of a fitted
    frame. Returns an (H, W, 4) float32 RGBA image.
    """
    shape = generate_shape_with_expression(model, blendshapes, alpha, psi)
    verts = shape.reshape(-1, 3)
    return render_mesh(verts, model.triangles, model.uv_coords,
                       np.asarray(fused_texture), camera, image_size, background)
