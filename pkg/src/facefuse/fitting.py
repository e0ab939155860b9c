"""Coefficient recovery from 2D landmarks under a fixed affine camera.

Identity coefficients come from a closed-form regularized linear least
squares solve, expression coefficients from non-negative least squares,
and the two alternate until stable. Contour landmarks are re-associated
with outline vertices by a nearest-reprojection search on the side of the
face that is turned toward the camera.
"""

from dataclasses import dataclass, replace

import numpy as np

from .camera import AffineCamera, estimate_affine_camera
from .errors import (
    ConfigurationError,
    InsufficientCorrespondencesError,
    RankDeficiencyError,
)
from .landmarks import LandmarkSet, LandmarkVertexMapping
from .model import (
    BlendshapeSet,
    PcaShapeModel,
    generate_shape,
    generate_shape_with_expression,
    homogeneous_subvector,
    landmark_basis_submatrix,
    landmark_displacement_submatrix,
)
from .nnls import nnls

DEFAULT_REGULARIZATION = 1.0
DEFAULT_TOLERANCE = 1e-5
DEFAULT_ALTERNATIONS = 10


@dataclass
class FitResult:
    """Outcome of a (possibly multi-round) landmark fit.

    residuals holds the combined fitting cost after each alternation round
    (weighted squared reprojection error plus the identity regularizer,
    pixel^2 scale); with uniform landmark variances every entry is a true
    descent step of the alternation.
    """

    alpha: np.ndarray
    psi: np.ndarray
    camera: AffineCamera
    residuals: list
    contour_assignments: dict
    converged: bool
    n_iterations: int

    def to_dict(self):
        return {
            "alpha": self.alpha.tolist(),
            "psi": self.psi.tolist(),
            "camera": self.camera.matrix.tolist(),
            "residuals": [float(r) for r in self.residuals],
            "contour_assignments": {k: int(v) for k, v in self.contour_assignments.items()},
            "converged": bool(self.converged),
            "n_iterations": int(self.n_iterations),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            alpha=np.asarray(data["alpha"], dtype=float),
            psi=np.asarray(data["psi"], dtype=float),
            camera=AffineCamera(np.asarray(data["camera"], dtype=float)),
            residuals=[float(r) for r in data["residuals"]],
            contour_assignments={str(k): int(v) for k, v in data["contour_assignments"].items()},
            converged=bool(data["converged"]),
            n_iterations=int(data["n_iterations"]),
        )


def _correspondences(landmarks: LandmarkSet, mapping: LandmarkVertexMapping,
                     contour_assignments=None):
    """Resolve each landmark to a vertex id, skipping unassigned contours.

    Returns (vertex_ids (K,), points (K, 2), variances (K,)); variances
    default to 1. Landmarks that are neither fixed pairs nor currently
    assigned contour landmarks are excluded.
    """
    vids, pts, variances = [], [], []
    for idx, lm_id in enumerate(landmarks.ids):
        if lm_id in mapping.pairs:
            v = mapping.pairs[lm_id]
        elif contour_assignments and lm_id in contour_assignments:
            v = contour_assignments[lm_id]
        else:
            continue
        vids.append(v)
        pts.append(landmarks.positions[idx])
        variances.append(1.0 if landmarks.variances is None else float(landmarks.variances[idx]))
    return (np.asarray(vids, dtype=int), np.asarray(pts, dtype=float).reshape(-1, 2),
            np.asarray(variances, dtype=float))


def _offset_subvector(offset, vertex_ids):
    # homogeneous selection with w = 0: displacements do not touch w
    rows = (3 * vertex_ids[:, None] + np.arange(3)[None, :]).ravel()
    out = np.zeros(4 * vertex_ids.size)
    out.reshape(-1, 4)[:, :3] = np.asarray(offset)[rows].reshape(-1, 3)
    return out


def _project_rows(camera: AffineCamera, homogeneous, k):
    # (4k,) homogeneous stack -> (2k,) stacked image coordinates
    return (homogeneous.reshape(k, 4) @ camera.matrix[:2].T).reshape(-1)


def fit_shape(camera: AffineCamera, model: PcaShapeModel, landmarks: LandmarkSet,
              mapping: LandmarkVertexMapping, regularization=DEFAULT_REGULARIZATION,
              expression_offset=None, contour_assignments=None) -> np.ndarray:
    """Closed-form identity coefficients minimizing the landmark cost.

    Minimizes sum_i (y_model,i - y_i)^2 / (2 var_i) + regularization*||alpha||^2
    where y_model stacks the projections of the homogeneous landmark
    sub-shape mean_h + offset_h + basis_h * alpha. Solved exactly as one
    regularized linear least-squares system (sqrt-weighted rows plus
    sqrt(regularization) identity block).

    Args:
        regularization: ridge weight, >= 0; default 1 matches the cost as
            written with a unit weight on the norm penalty.
        expression_offset: optional (3N,) displacement (current blendshape
            contribution) added to the mean before solving.
        contour_assignments: extra landmark id -> vertex id pairs from
            contour refinement.

    Returns:
        (M,) coefficient vector.
    """
    if regularization < 0:
        raise ConfigurationError("regularization must be >= 0")
    vids, pts, variances = _correspondences(landmarks, mapping, contour_assignments)
    k = vids.size
    if k == 0:
        raise InsufficientCorrespondencesError("no landmark maps to a model vertex")
    basis_h, mean_h = landmark_basis_submatrix(model, vids)
    if expression_offset is not None:
        mean_h = mean_h + _offset_subvector(expression_offset, vids)

    m = model.n_components
    design = np.einsum("rj,kjm->krm", camera.matrix[:2],
                       basis_h.reshape(k, 4, m)).reshape(2 * k, m)
    rhs = pts.reshape(-1) - _project_rows(camera, mean_h, k)

    sw = np.sqrt(np.repeat(1.0 / (2.0 * variances), 2))
    design = design * sw[:, None]
    rhs = rhs * sw

    if regularization > 0:
        design = np.vstack([design, np.sqrt(regularization) * np.eye(m)])
        rhs = np.concatenate([rhs, np.zeros(m)])
        alpha, _, _, _ = np.linalg.lstsq(design, rhs, rcond=None)
    else:
        alpha, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
        if rank < m:
            raise RankDeficiencyError(
                "unregularized system is underdetermined (rank %d < %d)" % (rank, m)
            )
    return alpha


def fit_expressions(camera: AffineCamera, model: PcaShapeModel,
                    blendshapes: BlendshapeSet, landmarks: LandmarkSet,
                    mapping: LandmarkVertexMapping, identity_shape,
                    contour_assignments=None) -> np.ndarray:
    """Non-negative expression coefficients for a fixed identity shape.

    Minimizes the unweighted squared reprojection error of
    identity_h + displacements_h * psi subject to psi >= 0 via active-set
    NNLS; the returned vector satisfies the KKT conditions of that
    problem and has exact zeros on the inactive set.

    Returns:
        (L,) coefficient vector (empty when the blendshape set is empty).
    """
    if blendshapes.n_blendshapes == 0:
        return np.zeros(0)
    vids, pts, _ = _correspondences(landmarks, mapping, contour_assignments)
    k = vids.size
    if k == 0:
        raise InsufficientCorrespondencesError("no landmark maps to a model vertex")
    disp_h = landmark_displacement_submatrix(blendshapes, vids)
    l = blendshapes.n_blendshapes
    design = np.einsum("rj,kjl->krl", camera.matrix[:2],
                       disp_h.reshape(k, 4, l)).reshape(2 * k, l)
    rhs = pts.reshape(-1) - _project_rows(camera, homogeneous_subvector(identity_shape, vids), k)
    psi, _ = nnls(design, rhs)
    return psi


def _alternation_cost(camera, model, blendshapes, alpha, psi, vids, pts,
                      variances, regularization):
    shape = generate_shape_with_expression(model, blendshapes, alpha, psi)
    proj = camera.project(shape.reshape(-1, 3)[vids])
    r2 = ((proj - pts) ** 2).sum(axis=1)
    return float(np.sum(r2 / (2.0 * variances)) + regularization * float(alpha @ alpha))


def fit_shape_and_expressions(camera: AffineCamera, model: PcaShapeModel,
                              blendshapes: BlendshapeSet, landmarks: LandmarkSet,
                              mapping: LandmarkVertexMapping,
                              max_iterations=DEFAULT_ALTERNATIONS,
                              tolerance=DEFAULT_TOLERANCE,
                              regularization=DEFAULT_REGULARIZATION,
                              contour_assignments=None) -> FitResult:
    """Alternate identity and expression fits until both stabilize.

    Shape first, then expressions; stops when the max-abs change of
    (alpha, psi) over one round drops below tolerance, or after
    max_iterations rounds. The recorded cost list is evaluated after each
    full round.
    """
    if max_iterations < 1:
        raise ConfigurationError("max_iterations must be >= 1")
    vids, pts, variances = _correspondences(landmarks, mapping, contour_assignments)
    if vids.size == 0:
        raise InsufficientCorrespondencesError("no landmark maps to a model vertex")

    l = blendshapes.n_blendshapes
    alpha = np.zeros(model.n_components)
    psi = np.zeros(l)
    residuals = []
    converged = False
    rounds = 0
    for rounds in range(1, max_iterations + 1):
        offset = blendshapes.displacements @ psi if l else None
        new_alpha = fit_shape(camera, model, landmarks, mapping, regularization,
                              expression_offset=offset,
                              contour_assignments=contour_assignments)
        if l:
            identity = generate_shape(model, new_alpha)
            new_psi = fit_expressions(camera, model, blendshapes, landmarks, mapping,
                                      identity, contour_assignments=contour_assignments)
        else:
            new_psi = psi
        residuals.append(_alternation_cost(camera, model, blendshapes, new_alpha,
                                           new_psi, vids, pts, variances,
                                           regularization))
        delta = float(np.max(np.abs(new_alpha - alpha))) if new_alpha.size else 0.0
        if l:
            delta = max(delta, float(np.max(np.abs(new_psi - psi))))
        alpha, psi = new_alpha, new_psi
        if delta < tolerance:
            converged = True
            break
    return FitResult(alpha=alpha, psi=psi, camera=camera, residuals=residuals,
                     contour_assignments=dict(contour_assignments or {}),
                     converged=converged, n_iterations=rounds)


def refine_contour(camera: AffineCamera, current_mesh, contour_landmarks: LandmarkSet,
                   mapping: LandmarkVertexMapping) -> dict:
    """Re-associate front-facing contour landmarks with outline vertices.

    The camera's yaw sign selects which outline list faces the camera;
    each contour landmark on that side gets the candidate vertex with the
    smallest squared 2D reprojection distance (ties to the smaller vertex
    index). Landmarks on the occluded side are left unassigned and thereby
    excluded from subsequent fitting.

    Returns:
        dict landmark id -> vertex id for the front-facing side.
    """
    side = camera.front_facing_side()
    candidates = sorted(mapping.candidates_for_side(side))
    if not candidates:
        raise ConfigurationError("contour candidate list for side %r is empty" % side)
    verts = np.asarray(current_mesh).reshape(-1, 3)
    proj = camera.project(verts[np.asarray(candidates, dtype=int)])
    out = {}
    for idx, lm_id in enumerate(contour_landmarks.ids):
        if mapping.contour_side_of(lm_id) != side:
            continue
        d2 = ((proj - contour_landmarks.positions[idx]) ** 2).sum(axis=1)
        out[lm_id] = candidates[int(np.argmin(d2))]
    return out


def fit_frame(model: PcaShapeModel, blendshapes: BlendshapeSet,
              landmarks: LandmarkSet, mapping: LandmarkVertexMapping,
              iterations=3, max_alternations=DEFAULT_ALTERNATIONS,
              tolerance=DEFAULT_TOLERANCE,
              regularization=DEFAULT_REGULARIZATION) -> FitResult:
    """Full single-frame loop: camera, shape+expressions, contour, repeat.

    Each round estimates the camera from the currently assigned
    correspondences (fixed pairs only in round one), runs the alternating
    coefficient fit, and refreshes contour assignments from the fitted
    mesh. Needs >= 4 fixed (non-contour) landmarks for the first camera.
    """
    n_fixed = sum(1 for i in landmarks.ids if i in mapping.pairs)
    if n_fixed < 4:
        raise InsufficientCorrespondencesError(
            "need >= 4 fixed landmarks for camera estimation, got %d" % n_fixed
        )
    has_contour = any(mapping.contour_side_of(i) is not None for i in landmarks.ids)

    assignments = {}
    shape = model.mean
    result = None
    for _ in range(iterations):
        vids, pts, _ = _correspondences(landmarks, mapping, assignments)
        camera = estimate_affine_camera(pts, shape.reshape(-1, 3)[vids])
        result = fit_shape_and_expressions(camera, model, blendshapes, landmarks,
                                           mapping, max_alternations, tolerance,
                                           regularization,
                                           contour_assignments=assignments or None)
        shape = generate_shape_with_expression(model, blendshapes, result.alpha,
                                               result.psi)
        if has_contour:
            assignments = refine_contour(camera, shape, landmarks, mapping)
    return replace(result, contour_assignments=dict(assignments))
