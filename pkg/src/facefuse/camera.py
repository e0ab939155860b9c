"""Affine camera estimation from 2D-3D correspondences.

Normalized direct linear estimation: both point sets are moved to their
centroid and isotropically scaled to RMS distance sqrt(2) (2D) / sqrt(3)
(3D), the 8 free entries of the normalized camera are solved by linear
least squares, and the result is denormalized. Image coordinates are
pixels with y pointing down; model space is right handed with y up.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InsufficientCorrespondencesError,
)

# singular values below this fraction of the largest count as zero
RANK_RCOND = 1e-10


def _to_points(arr, dim, name):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError("%s must have shape (n, %d), got %s" % (name, dim, arr.shape))
    if not np.all(np.isfinite(arr)):
        raise ValueError("%s contains non-finite values" % name)
    return arr


@dataclass(frozen=True)
class AffineCamera:
    """3x4 projection matrix with last row fixed to (0, 0, 0, 1)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 4):
            raise ValueError("camera matrix must be 3x4, got %s" % (m.shape,))
        m = m.copy()
        m[2] = (0.0, 0.0, 0.0, 1.0)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def project(self, points3d):
        """Project (n, 3) or (3,) model points to (n, 2) or (2,) pixels."""
        pts = np.asarray(points3d, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = pts @ self.matrix[:2, :3].T + self.matrix[:2, 3]
        return out[0] if single else out

    def _orthonormal_rows(self):
        r1 = self.matrix[0, :3]
        r2 = self.matrix[1, :3]
        n1 = np.linalg.norm(r1)
        if n1 < 1e-12:
            raise DegenerateConfigurationError("camera row 1 has zero 3D part")
        e1 = r1 / n1
        r2o = r2 - (r2 @ e1) * e1
        n2 = np.linalg.norm(r2o)
        if n2 < 1e-12:
            raise DegenerateConfigurationError("camera rows are collinear")
        return e1, r2o / n2

    def view_direction(self):
        """Unit vector pointing from the scene toward the camera."""
        e1, e2 = self._orthonormal_rows()
        return np.cross(e2, e1)

    def depth(self, points3d):
        """Scalar depth per point; larger = farther from the camera."""
        pts = np.atleast_2d(np.asarray(points3d, dtype=float))
        d = pts @ -self.view_direction()
        return d[0] if np.asarray(points3d).ndim == 1 else d

    def yaw_indicator(self):
        """x component of (r1_hat x r2_hat); sign encodes the head turn."""
        e1, e2 = self._orthonormal_rows()
        return float(np.cross(e1, e2)[0])

    def front_facing_side(self) -> str:
        """Which face outline ('left'/'right' in image terms) faces the camera.

        Positive yaw indicator means the face is turned toward image-right,
        so the image-left outline is the camera-facing jaw line.
        """
        return "left" if self.yaw_indicator() > 0 else "right"

    def pixel_scale(self):
        """Approximate pixels per model unit (mean row norm)."""
        return 0.5 * (np.linalg.norm(self.matrix[0, :3]) + np.linalg.norm(self.matrix[1, :3]))


@dataclass(frozen=True)
class SimilarityNormalization:
    """Centering + isotropic scaling transforms for both point sets.

    transform2d maps homogeneous 2D input points to centroid 0 and RMS
    distance sqrt(2); transform3d does the same for 3D with sqrt(3).
    """

    transform2d: np.ndarray
    transform3d: np.ndarray

    def apply2d(self, points2d):
        pts = _to_points(points2d, 2, "points2d")
        return pts @ self.transform2d[:2, :2].T + self.transform2d[:2, 2]

    def apply3d(self, points3d):
        pts = _to_points(points3d, 3, "points3d")
        return pts @ self.transform3d[:3, :3].T + self.transform3d[:3, 3]


def _similarity(points, target_rms):
    centroid = points.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((points - centroid) ** 2, axis=1)))
    if rms < 1e-12:
        raise DegenerateConfigurationError("all points coincident, RMS distance is zero")
    scale = target_rms / rms
    dim = points.shape[1]
    t = np.eye(dim + 1)
    t[:dim, :dim] *= scale
    t[:dim, dim] = -scale * centroid
    return t


def normalize_points(points2d, points3d) -> SimilarityNormalization:
    """Build the similarity transforms taking each set to its canonical frame."""
    p2 = _to_points(points2d, 2, "points2d")
    p3 = _to_points(points3d, 3, "points3d")
    if len(p2) < 2 or len(p3) < 2:
        raise DegenerateConfigurationError("need at least 2 points per set to normalize")
    return SimilarityNormalization(_similarity(p2, np.sqrt(2.0)), _similarity(p3, np.sqrt(3.0)))


def estimate_affine_camera(landmarks2d, model_points3d) -> AffineCamera:
    """Least-squares affine camera from >= 4 point correspondences.

    Solves for the 8 free entries of the normalized camera's top two rows,
    then denormalizes: C = T^-1 Ct U. The design matrix is solved by SVD;
    singular values below RANK_RCOND times the largest count as zero and
    a deficient rank raises DegenerateConfigurationError with `.rank` set.
    """
    p2 = _to_points(landmarks2d, 2, "landmarks2d")
    p3 = _to_points(model_points3d, 3, "model_points3d")
    if len(p2) != len(p3):
        raise ValueError("point counts differ: %d vs %d" % (len(p2), len(p3)))
    if len(p2) < 4:
        raise InsufficientCorrespondencesError(
            "need >= 4 correspondences, got %d" % len(p2)
        )
    norm = normalize_points(p2, p3)
    x2 = norm.apply2d(p2)
    x3 = norm.apply3d(p3)

    n = len(x2)
    design = np.zeros((2 * n, 8))
    design[0::2, 0:3] = x3
    design[0::2, 3] = 1.0
    design[1::2, 4:7] = x3
    design[1::2, 7] = 1.0
    rhs = x2.reshape(-1)

    params, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=RANK_RCOND)
    if rank < 8:
        raise DegenerateConfigurationError(
            "design matrix rank %d < 8 (degenerate 3D configuration)" % rank,
            rank=int(rank),
        )

    ct = np.vstack([params.reshape(2, 4), (0.0, 0.0, 0.0, 1.0)])
    t_inv = np.linalg.inv(norm.transform2d)
    cam = t_inv @ ct @ norm.transform3d
    return AffineCamera(cam)


def project(camera: AffineCamera, point3d):
    """2D projection of a 3D point (free-function form of camera.project)."""
    return camera.project(point3d)
