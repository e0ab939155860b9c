"""Self-contained synthetic face-like model, texture, and video generator.

No redistributable morphable face model exists, so all tests and demos run
on a procedurally generated stand-in: a smooth spheroid sheet (an open
surface wrapping 200 degrees of azimuth and 140 degrees of elevation, so
any single view always leaves part of it unobserved), a random orthonormal
PCA basis, and smooth localized blendshapes anchored near landmark sites
so expression coefficients are observable from landmarks alone.

Model space is right handed, y up; the sheet faces +z. The default camera
at yaw 0 looks down -z; positive yaw turns the face toward image-right.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .camera import AffineCamera
from .images import save_image
from .landmarks import LandmarkSet, LandmarkVertexMapping, save_landmarks
from .model import BlendshapeSet, PcaShapeModel, generate_shape_with_expression
from .render import render_mesh

# (u, v) sheet fractions of the fixed (non-contour) landmarks, ibug-style ids:
# chin 9, brows 20/25, nose 28/31/34, eye corners 37/40/43/46, mouth 49-58.
FIXED_LANDMARK_FRACTIONS = {
    "9": (0.50, 0.06),
    "20": (0.32, 0.72),
    "25": (0.68, 0.72),
    "28": (0.50, 0.64),
    "31": (0.50, 0.46),
    "34": (0.50, 0.38),
    "37": (0.28, 0.58),
    "40": (0.40, 0.58),
    "43": (0.60, 0.58),
    "46": (0.72, 0.58),
    "49": (0.38, 0.24),
    "52": (0.50, 0.30),
    "55": (0.62, 0.24),
    "58": (0.50, 0.18),
}

# blendshape bumps are centered on expressive regions (mouth, nose, brows)
_BLENDSHAPE_ANCHOR_IDS = ("58", "31", "20", "49", "25", "55", "52", "9")

AZIMUTH_SPAN_DEG = 200.0
ELEVATION_SPAN_DEG = 140.0


def _sheet_points(grid, radii, bump_amplitude):
    gh, gw = grid
    u = np.tile(np.arange(gw) / (gw - 1.0), gh)
    v = np.repeat(np.arange(gh) / (gh - 1.0), gw)
    phi = np.radians((u - 0.5) * AZIMUTH_SPAN_DEG)
    theta = np.radians((v - 0.5) * ELEVATION_SPAN_DEG)
    # fixed low-frequency radial detail, keeps the mean shape non-spherical
    bump = 0.6 * np.sin(3.0 * np.pi * u + 0.7) * np.cos(2.2 * np.pi * v + 0.3)
    bump += 0.4 * np.sin(1.8 * np.pi * v + 1.1)
    scale = 1.0 + bump_amplitude * bump
    rx, ry, rz = radii
    x = rx * scale * np.sin(phi) * np.cos(theta)
    y = ry * scale * np.sin(theta)
    z = rz * scale * np.cos(phi) * np.cos(theta)
    return np.stack([x, y, z], axis=1), np.stack([u, v], axis=1)


def _sheet_triangles(grid):
    gh, gw = grid
    tris = []
    for i in range(gh - 1):
        for j in range(gw - 1):
            a = i * gw + j
            b = i * gw + j + 1
            c = (i + 1) * gw + j
            d = (i + 1) * gw + j + 1
            tris.append((a, b, d))
            tris.append((a, d, c))
    return np.array(tris, dtype=int)


def _grid_vertex(grid, fu, fv):
    gh, gw = grid
    j = int(round(fu * (gw - 1)))
    i = int(round(fv * (gh - 1)))
    return i * gw + j


def generate_synthetic_model(grid=(16, 16), n_components=12, n_blendshapes=4,
                             seed=0, radii=(0.9, 1.1, 0.75), bump_amplitude=0.03):
    """Build a deterministic synthetic model + blendshapes.

    Args:
        grid: (rows, cols) of the sheet lattice; N = rows*cols vertices.
        n_components: PCA basis size M (orthonormal via QR of white noise).
        n_blendshapes: number of smooth localized displacement fields.
        seed: RNG seed for basis and blendshape draw.

    Returns:
        (PcaShapeModel, BlendshapeSet)
    """
    gh, gw = grid
    n = gh * gw
    if n_components > 3 * n:
        raise ValueError("n_components cannot exceed 3N")
    rng = np.random.default_rng(seed)

    points, uv = _sheet_points(grid, radii, bump_amplitude)
    mean = points.reshape(-1)

    raw = rng.standard_normal((3 * n, n_components))
    basis, r = np.linalg.qr(raw)
    basis = basis * np.sign(np.diag(r))[None, :]  # canonical column signs
    stddevs = 0.08 * 0.9 ** np.arange(n_components)

    # unit pseudo-normal per vertex: radial direction works for the spheroid
    radial = points / np.linalg.norm(points, axis=1, keepdims=True)
    disp = np.zeros((3 * n, n_blendshapes))
    for l in range(n_blendshapes):
        anchor = _BLENDSHAPE_ANCHOR_IDS[l % len(_BLENDSHAPE_ANCHOR_IDS)]
        cu, cv = FIXED_LANDMARK_FRACTIONS[anchor]
        cu += rng.uniform(-0.02, 0.02)
        cv += rng.uniform(-0.02, 0.02)
        width = rng.uniform(0.10, 0.16)
        amp = rng.uniform(0.04, 0.07)
        falloff = np.exp(-((uv[:, 0] - cu) ** 2 + (uv[:, 1] - cv) ** 2) / (2 * width ** 2))
        disp[:, l] = (radial * (amp * falloff)[:, None]).reshape(-1)

    model = PcaShapeModel(mean=mean, basis=basis, stddevs=stddevs,
                          triangles=_sheet_triangles(grid), uv_coords=uv)
    model.validate()
    blendshapes = BlendshapeSet(displacements=disp)
    blendshapes.validate(model)
    return model, blendshapes


def standard_synthetic_mapping(grid=(16, 16)) -> LandmarkVertexMapping:
    """Landmark-vertex mapping for the synthetic sheet.

    Fixed landmarks sit at interior lattice sites; contour candidates are
    the full first (image-left) and last (image-right) lattice columns.
    """
    gh, gw = grid
    pairs = {}
    for lm_id, (fu, fv) in FIXED_LANDMARK_FRACTIONS.items():
        pairs[lm_id] = _grid_vertex(grid, fu, fv)
    if len(set(pairs.values())) != len(pairs):
        raise ValueError("grid %s too coarse: fixed landmarks collide" % (grid,))
    left = tuple(i * gw for i in range(gh))
    right = tuple(i * gw + gw - 1 for i in range(gh))
    mapping = LandmarkVertexMapping(pairs, left, right)
    mapping.validate(gh * gw)
    return mapping


def contour_landmark_vertices(grid=(16, 16)):
    """Ground-truth vertex for each contour landmark id.

    Ids 1..8 spread evenly along the image-left candidate column, 10..17
    along the image-right one. Used only to synthesize observations; the
    fitter rediscovers these by the argmin search.
    """
    gh, gw = grid
    out = {}
    for k in range(8):
        i = int(round(k * (gh - 1) / 7.0))
        out[str(1 + k)] = i * gw
        out[str(10 + k)] = i * gw + gw - 1
    return out


def synthetic_texture(resolution=256, seed=0):
    """Smooth low-frequency RGB texture, (R, R, 3) float32 in [0, 1].

    Array row 0 is the v = 1 edge of uv space.
    """
    rng = np.random.default_rng(seed)
    t = (np.arange(resolution) + 0.5) / resolution
    uu = t[None, :]
    vv = (1.0 - t)[:, None]
    img = np.zeros((resolution, resolution, 3), dtype=np.float64)
    for ch in range(3):
        acc = np.full((resolution, resolution), rng.uniform(0.35, 0.65))
        for _ in range(4):
            fu, fv = rng.integers(1, 4, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.06, 0.16)
            acc = acc + amp * np.sin(2.0 * np.pi * (fu * uu + fv * vv) + phase)
        img[..., ch] = acc
    return np.clip(img, 0.02, 0.98).astype(np.float32)


def synthetic_camera(yaw_deg=0.0, scale=45.0, center=(64.0, 64.0)) -> AffineCamera:
    """Scaled-orthographic camera with a yaw turn about the model y axis.

    Positive yaw turns the face toward image-right. Image y points down,
    so the second row carries -scale on the model y axis.
    """
    b = math.radians(yaw_deg)
    cx, cy = center
    mat = np.array([
        [scale * math.cos(b), 0.0, scale * math.sin(b), cx],
        [0.0, -scale, 0.0, cy],
        [0.0, 0.0, 0.0, 1.0],
    ])
    return AffineCamera(mat)


def ground_truth_landmarks(shape, camera: AffineCamera,
                           mapping: LandmarkVertexMapping,
                           contour_vertices=None, noise_sigma=0.0, rng=None,
                           variance=None) -> LandmarkSet:
    """Project mapped (and optionally contour) vertices to a LandmarkSet.

    Args:
        shape: (3N,) vertex vector.
        contour_vertices: dict id -> vertex for contour observations, or
            None to emit fixed landmarks only.
        noise_sigma: stddev of additive Gaussian pixel noise.
        variance: if set, attach this variance to every landmark.
    """
    verts = shape.reshape(-1, 3)
    ids = list(mapping.pairs.keys())
    vids = [mapping.pairs[i] for i in ids]
    if contour_vertices:
        for lm_id in sorted(contour_vertices, key=int):
            ids.append(lm_id)
            vids.append(contour_vertices[lm_id])
    pts = camera.project(verts[vids])
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        pts = pts + rng.normal(0.0, noise_sigma, pts.shape)
    var = np.full(len(ids), float(variance)) if variance is not None else None
    return LandmarkSet(tuple(ids), pts, var)


@dataclass(frozen=True)
class SyntheticFrame:
    """One generated video frame with its full ground truth."""

    index: int
    image: np.ndarray
    landmarks: LandmarkSet
    camera: AffineCamera
    alpha: np.ndarray
    psi: np.ndarray


def generate_synthetic_sequence(model: PcaShapeModel, blendshapes: BlendshapeSet,
                                alpha, psi_schedule, camera_schedule, texture,
                                image_size=(128, 128), noise_sigma=0.0,
                                seed=0, mapping=None, contour_vertices=None):
    """Render a ground-truth video: one frame per schedule entry.

    Args:
        alpha: identity coefficients, fixed over the sequence.
        psi_schedule: sequence of per-frame expression vectors.
        camera_schedule: sequence of per-frame AffineCameras.
        texture: (R, R, 3) texture to paint the surface with.
        mapping: landmark mapping; defaults to the standard synthetic one
            (requires the model to come from the default grid).

    Returns:
        list of SyntheticFrame with rendered RGB images and exact landmark
        projections (plus optional Gaussian landmark noise).
    """
    if len(psi_schedule) != len(camera_schedule):
        raise ValueError("psi_schedule and camera_schedule lengths differ")
    if mapping is None:
        mapping = standard_synthetic_mapping()
    rng = np.random.default_rng(seed)
    alpha = np.asarray(alpha, dtype=float)
    frames = []
    for idx, (psi, cam) in enumerate(zip(psi_schedule, camera_schedule)):
        psi = np.asarray(psi, dtype=float)
        shape = generate_shape_with_expression(model, blendshapes, alpha, psi)
        rgba = render_mesh(shape.reshape(-1, 3), model.triangles, model.uv_coords,
                           texture, cam, image_size)
        lms = ground_truth_landmarks(shape, cam, mapping,
                                     contour_vertices=contour_vertices,
                                     noise_sigma=noise_sigma, rng=rng)
        frames.append(SyntheticFrame(index=idx, image=rgba[..., :3],
                                     landmarks=lms, camera=cam,
                                     alpha=alpha.copy(), psi=psi.copy()))
    return frames


def yaw_sweep_cameras(n_frames, yaw_min=-30.0, yaw_max=30.0, scale=45.0,
                      center=(64.0, 64.0)):
    """Evenly spaced yaw sweep, inclusive of both endpoints."""
    if n_frames == 1:
        yaws = [0.5 * (yaw_min + yaw_max)]
    else:
        yaws = np.linspace(yaw_min, yaw_max, n_frames)
    return [synthetic_camera(y, scale, center) for y in yaws]


def landmark_bbox(landmarks: LandmarkSet):
    """(x, y, w, h) axis-aligned box of a landmark set."""
    lo = landmarks.positions.min(axis=0)
    hi = landmarks.positions.max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1])


def write_sequence(out_dir, frames, face_box=None):
    """Write frames + ground truth to disk in the pipeline's input layout.

    Produces frame_0000.png / frame_0000.lms pairs, a face_box.json for
    the first frame, and ground_truth.json with per-frame camera matrices
    and coefficients.
    """
    os.makedirs(out_dir, exist_ok=True)
    truth = {"frames": []}
    for fr in frames:
        stem = "frame_%04d" % fr.index
        save_image(os.path.join(out_dir, stem + ".png"), fr.image)
        save_landmarks(os.path.join(out_dir, stem + ".lms"), fr.landmarks)
        truth["frames"].append({
            "index": fr.index,
            "camera": fr.camera.matrix.tolist(),
            "alpha": fr.alpha.tolist(),
            "psi": fr.psi.tolist(),
        })
    if face_box is None:
        face_box = landmark_bbox(frames[0].landmarks)
    with open(os.path.join(out_dir, "face_box.json"), "w") as fh:
        json.dump({"x": face_box[0], "y": face_box[1],
                   "w": face_box[2], "h": face_box[3]}, fh)
    with open(os.path.join(out_dir, "ground_truth.json"), "w") as fh:
        json.dump(truth, fh, indent=1)
