"""Isomap texture extraction and multi-frame fusion.

Every frame's texture is remapped into one fixed UV layout, so texel t
refers to the same surface point in every frame. Per-texel confidence is
the cosine between the triangle normal and the constant affine viewing
direction, clamped at 0 for back-facing triangles, with self-occluded
texels discarded by a depth-buffer test. Fusion is either an incremental
weighted average or an offline weighted median over all observations.

Texel [ty, tx] of an R x R map covers uv = ((tx+0.5)/R, 1-(ty+0.5)/R);
row 0 is the v = 1 edge.
"""

from dataclasses import dataclass, field

import numpy as np

from .camera import AffineCamera
from .errors import DimensionMismatchError
from .images import save_image, save_image_u16
from .model import PcaShapeModel
from .render import barycentric_grid, depth_buffer, sample_image_bilinear, triangle_normals

OCCLUSION_DEPTH_TOL_FACTOR = 1e-4
# cap on the internal depth-raster side length; beyond this the raster is
# scaled down (pure memory guard, never hit at desk scale)
MAX_DEPTH_RASTER_SIDE = 4096


@dataclass(frozen=True)
class IsomapLayout:
    """Static texel-to-surface assignment for one (model, resolution) pair.

    texel_to_triangle is -1 where no triangle covers the texel center;
    texel_barycentrics holds the barycentric coordinates of covered texel
    centers within their triangle. triangles is a snapshot of the model's
    index buffer so the layout is self-contained.
    """

    resolution: int
    texel_to_triangle: np.ndarray
    texel_barycentrics: np.ndarray
    triangles: np.ndarray
    n_degenerate_triangles: int = 0

    @property
    def covered_mask(self):
        return self.texel_to_triangle >= 0

    def covered_count(self):
        return int(np.count_nonzero(self.texel_to_triangle >= 0))


def build_isomap_layout(model: PcaShapeModel, resolution: int) -> IsomapLayout:
    """Rasterize the model's UV triangles once.

    A texel belongs to a triangle when its center lies strictly inside
    the UV triangle (all three barycentrics > 0); where triangles overlap
    the lower triangle index wins. Zero-area UV triangles are skipped and
    counted.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    res = int(resolution)
    t2t = np.full((res, res), -1, dtype=np.int32)
    bary = np.zeros((res, res, 3), dtype=np.float64)

    # uv -> continuous texel coordinates (texel centers at integers)
    uv = model.uv_coords
    txy = np.stack([uv[:, 0] * res - 0.5, (1.0 - uv[:, 1]) * res - 0.5], axis=1)

    n_degenerate = 0
    for t, tri in enumerate(model.triangles):
        tri2d = txy[tri]
        lo = np.floor(tri2d.min(axis=0)).astype(int)
        hi = np.ceil(tri2d.max(axis=0)).astype(int)
        x0, y0 = np.maximum(lo, 0)
        x1 = min(hi[0], res - 1)
        y1 = min(hi[1], res - 1)
        if x0 > x1 or y0 > y1:
            continue
        grid = barycentric_grid(tri2d, np.arange(x0, x1 + 1, dtype=float),
                                np.arange(y0, y1 + 1, dtype=float))
        if grid is None:
            n_degenerate += 1
            continue
        w0, w1, w2 = grid
        inside = (w0 > 0.0) & (w1 > 0.0) & (w2 > 0.0)
        window = t2t[y0:y1 + 1, x0:x1 + 1]
        claim = inside & (window < 0)
        if not claim.any():
            continue
        window[claim] = t
        bw = bary[y0:y1 + 1, x0:x1 + 1]
        bw[claim, 0] = w0[claim]
        bw[claim, 1] = w1[claim]
        bw[claim, 2] = w2[claim]

    return IsomapLayout(resolution=res, texel_to_triangle=t2t,
                        texel_barycentrics=bary,
                        triangles=np.array(model.triangles, dtype=np.int32),
                        n_degenerate_triangles=n_degenerate)


def _covered_surface_points(verts3, layout, rows, cols):
    tri = layout.texel_to_triangle[rows, cols]
    bc = layout.texel_barycentrics[rows, cols]
    corners = verts3[layout.triangles[tri]]  # (n, 3 corners, xyz)
    return np.einsum("nc,nck->nk", bc, corners)


def _sample_depth_bilinear(buf, x, y):
    """Bilinear depth lookup; +inf when any touched cell is empty.

    Depth varies linearly inside a triangle, so interpolating between
    cells of the same triangle is exact; returning +inf near empty cells
    biases toward 'visible', never toward false occlusion.
    """
    h, w = buf.shape
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(int)
    y0 = np.floor(yc).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    corners = np.stack([buf[y0, x0], buf[y0, x1], buf[y1, x0], buf[y1, x1]])
    finite = np.isfinite(corners).all(axis=0)
    safe = np.where(np.isfinite(corners), corners, 0.0)
    fx = xc - x0
    fy = yc - y0
    top = safe[0] * (1 - fx) + safe[1] * fx
    bot = safe[2] * (1 - fx) + safe[3] * fx
    return np.where(finite, top * (1 - fy) + bot * fy, np.inf)


def compute_texel_weights(mesh, camera: AffineCamera, layout: IsomapLayout):
    """Per-texel view-angle weight with self-occlusion masking.

    omega = clamp(<view_direction, triangle_normal>, 0, 1), flat per
    triangle; texels whose surface point lies deeper than the rasterized
    depth buffer (plus a bounding-box-relative tolerance) get omega = 0.

    Returns:
        (R, R) float32 weight map.
    """
    verts3 = np.asarray(mesh, dtype=float).reshape(-1, 3)
    normals = triangle_normals(verts3, layout.triangles)
    view = camera.view_direction()
    tri_w = np.clip(normals @ view, 0.0, 1.0)

    res = layout.resolution
    weights = np.zeros((res, res), dtype=np.float32)
    mask = layout.covered_mask
    weights[mask] = tri_w[layout.texel_to_triangle[mask]]

    rows, cols = np.nonzero(weights > 0.0)
    if rows.size == 0:
        return weights

    # depth raster over the projected mesh footprint at ~1 px granularity
    pts2 = camera.project(verts3)
    lo = np.floor(pts2.min(axis=0)) - 1.0
    hi = np.ceil(pts2.max(axis=0)) + 1.0
    extent = hi - lo + 1.0
    scale = min(1.0, MAX_DEPTH_RASTER_SIDE / float(extent.max()))
    cam_r = camera
    if scale < 1.0:
        m = camera.matrix.copy()
        m[:2] *= scale
        cam_r = AffineCamera(m)
        lo = lo * scale
        extent = extent * scale
    shape = (int(np.ceil(extent[1])), int(np.ceil(extent[0])))
    zbuf = depth_buffer(verts3, layout.triangles, cam_r, shape, origin=lo)

    points = _covered_surface_points(verts3, layout, rows, cols)
    xy = cam_r.project(points) - lo
    depths = cam_r.depth(points)
    bbox = verts3.max(axis=0) - verts3.min(axis=0)
    tol = OCCLUSION_DEPTH_TOL_FACTOR * float(np.linalg.norm(bbox))
    occluded = depths > _sample_depth_bilinear(zbuf, xy[:, 0], xy[:, 1]) + tol
    weights[rows[occluded], cols[occluded]] = 0.0
    return weights


@dataclass(frozen=True)
class FrameTexture:
    """One frame remapped into the isomap: colour + per-texel weight.

    weight is exactly 0 wherever the texel was unobserved (back-facing,
    occluded, or projecting outside the frame); colour is zeroed there.
    """

    colour: np.ndarray
    weight: np.ndarray
    frame_index: int = -1

    @property
    def resolution(self):
        return self.weight.shape[0]

    def observed_count(self):
        return int(np.count_nonzero(self.weight > 0.0))


def remap_frame(frame, mesh, camera: AffineCamera, layout: IsomapLayout,
                frame_index=-1) -> FrameTexture:
    """Pull one video frame's colours into the isomap.

    Each observed texel's surface point is projected into the frame and
    sampled bilinearly; texels projecting outside the frame (beyond the
    border pixel centers) get weight 0.
    """
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] < 3:
        raise DimensionMismatchError("frame must be (H, W, 3[+]) RGB")
    h, w = frame.shape[:2]

    verts3 = np.asarray(mesh, dtype=float).reshape(-1, 3)
    weights = compute_texel_weights(mesh, camera, layout)
    colour = np.zeros((layout.resolution, layout.resolution, 3), dtype=np.float32)

    rows, cols = np.nonzero(weights > 0.0)
    if rows.size:
        xy = camera.project(_covered_surface_points(verts3, layout, rows, cols))
        inside = ((xy[:, 0] >= 0.0) & (xy[:, 0] <= w - 1.0)
                  & (xy[:, 1] >= 0.0) & (xy[:, 1] <= h - 1.0))
        weights[rows[~inside], cols[~inside]] = 0.0
        if inside.any():
            samples = sample_image_bilinear(frame[..., :3], xy[inside, 0], xy[inside, 1])
            colour[rows[inside], cols[inside]] = samples
    return FrameTexture(colour=colour, weight=weights, frame_index=frame_index)


def fuse_median(values, weights):
    """Weighted median of one observation list, per the argmin definition.

    Returns the observed value minimizing sum_i w_i |c - c_i|; among
    tied minimizers the smallest value wins. Computed as the lower
    weighted median: sort by value, take the first entry whose cumulative
    weight reaches half the total.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("empty observation list")
    if values.size != weights.size:
        raise DimensionMismatchError("values and weights differ in length")
    order = np.argsort(values, kind="stable")
    v = values[order]
    cw = np.cumsum(weights[order])
    idx = int(np.searchsorted(cw, 0.5 * cw[-1], side="left"))
    return float(v[min(idx, v.size - 1)])


class TextureFusionBuffer:
    """Accumulates FrameTextures; query the fused map at any point.

    mode 'average' keeps running sums of weight*colour and weight, so each
    frame is folded in without revisiting previous frames. mode 'median'
    keeps every observation (compressed to observed texels) and computes
    per-channel weighted medians on demand. The buffer resolution already
    includes any super-resolution factor: pass resolution*s and a layout
    built at that size.
    """

    def __init__(self, resolution, mode="average"):
        if mode not in ("average", "median"):
            raise ValueError("mode must be 'average' or 'median'")
        self.resolution = int(resolution)
        self.mode = mode
        self.n_frames = 0
        if mode == "average":
            self._colour_sum = np.zeros((self.resolution, self.resolution, 3), dtype=np.float64)
            self._weight_sum = np.zeros((self.resolution, self.resolution), dtype=np.float64)
        else:
            self._observations = []  # (flat texel idx, colours, weights) per frame

    def add(self, frame_texture: FrameTexture):
        if frame_texture.resolution != self.resolution:
            raise DimensionMismatchError(
                "frame texture resolution %d != buffer resolution %d"
                % (frame_texture.resolution, self.resolution)
            )
        if self.mode == "average":
            w = frame_texture.weight.astype(np.float64)
            self._colour_sum += frame_texture.colour.astype(np.float64) * w[..., None]
            self._weight_sum += w
        else:
            flat = np.flatnonzero(frame_texture.weight > 0.0).astype(np.int64)
            rows, cols = np.unravel_index(flat, frame_texture.weight.shape)
            self._observations.append((
                flat,
                frame_texture.colour[rows, cols].astype(np.float32),
                frame_texture.weight[rows, cols].astype(np.float32),
            ))
        self.n_frames += 1

    def fused(self):
        """Current fused texture.

        Returns:
            (colour (R, R, 3) float32, observed (R, R) bool)
        """
        if self.mode == "average":
            observed = self._weight_sum > 0.0
            colour = np.zeros((self.resolution, self.resolution, 3), dtype=np.float32)
            colour[observed] = (self._colour_sum[observed]
                                / self._weight_sum[observed, None]).astype(np.float32)
            return colour, observed
        return self._fused_median()

    def _fused_median(self):
        colour = np.zeros((self.resolution, self.resolution, 3), dtype=np.float32)
        observed = np.zeros((self.resolution, self.resolution), dtype=bool)
        if not self._observations:
            return colour, observed
        idx = np.concatenate([o[0] for o in self._observations])
        cols = np.concatenate([o[1] for o in self._observations])
        ws = np.concatenate([o[2] for o in self._observations]).astype(np.float64)
        flat_colour = colour.reshape(-1, 3)
        for ch in range(3):
            vals = cols[:, ch].astype(np.float64)
            # sort by (texel, value); per-texel groups are then contiguous
            order = np.lexsort((vals, idx))
            sid = idx[order]
            sval = vals[order]
            cw = np.cumsum(ws[order])
            uniq, starts = np.unique(sid, return_index=True)
            ends = np.append(starts[1:], sid.size)
            base = np.where(starts > 0, cw[np.maximum(starts - 1, 0)], 0.0)
            totals = cw[ends - 1] - base
            # first in-group index whose cumulative weight passes half
            pick = np.searchsorted(cw, base + 0.5 * totals, side="left")
            pick = np.minimum(pick, ends - 1)
            flat_colour[uniq, ch] = sval[pick]
        observed.reshape(-1)[np.unique(idx)] = True
        return colour, observed

    def observed_count(self):
        _, observed = self.fused()
        return int(np.count_nonzero(observed))

    def weight_map(self):
        """Accumulated (average mode) or summed (median mode) weights."""
        if self.mode == "average":
            return self._weight_sum.copy()
        total = np.zeros(self.resolution * self.resolution, dtype=np.float64)
        for flat, _, w in self._observations:
            np.add.at(total, flat, w.astype(np.float64))
        return total.reshape(self.resolution, self.resolution)


def fuse_average(buffer: TextureFusionBuffer, frame_texture: FrameTexture):
    """Fold one frame into a running-average buffer (returns the buffer)."""
    if buffer.mode != "average":
        raise ValueError("fuse_average requires an average-mode buffer")
    buffer.add(frame_texture)
    return buffer


def save_isomap_png(path, colour, observed):
    """Write a fused isomap as RGBA PNG; alpha 255 = observed texel."""
    rgba = np.concatenate(
        [np.clip(colour, 0.0, 1.0),
         np.asarray(observed, dtype=np.float32)[..., None]], axis=2)
    save_image(path, rgba)


def save_weight_png(path, weights, normalize=False):
    """Write a weight map as 16-bit grayscale PNG.

    With normalize=True the map is scaled by its maximum first (useful for
    accumulated weight sums, which exceed 1).
    """
    w = np.asarray(weights, dtype=float)
    if normalize and w.max() > 0:
        w = w / w.max()
    save_image_u16(path, w)
