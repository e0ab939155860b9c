import numpy as np
import pytest

from facefuse.errors import (
    ConfigurationError,
    InsufficientCorrespondencesError,
    RankDeficiencyError,
)
from facefuse.fitting import (
    fit_expressions,
    fit_frame,
    fit_shape,
    fit_shape_and_expressions,
    refine_contour,
)
from facefuse.landmarks import LandmarkSet, LandmarkVertexMapping
from facefuse.model import (
    generate_shape,
    generate_shape_with_expression,
)
from facefuse.synthetic import (
    contour_landmark_vertices,
    generate_synthetic_model,
    ground_truth_landmarks,
    standard_synthetic_mapping,
    synthetic_camera,
)


def dense_fit_oracle(camera, model, landmarks, mapping, regularization,
                     expression_offset=None):
    """Reference solver: loop-built design, explicit normal equations."""
    ids = [i for i in landmarks.ids if i in mapping.pairs]
    k = len(ids)
    m = model.n_components
    design = np.zeros((2 * k, m))
    rhs = np.zeros(2 * k)
    weights = np.zeros(2 * k)
    c = camera.matrix
    for row, lm_id in enumerate(ids):
        v = mapping.pairs[lm_id]
        base = model.mean[3 * v:3 * v + 3].copy()
        if expression_offset is not None:
            base = base + expression_offset[3 * v:3 * v + 3]
        proj_mean = c[:2, :3] @ base + c[:2, 3]
        y = landmarks.position_of(lm_id)
        var = 1.0
        if landmarks.variances is not None:
            var = landmarks.variances[landmarks.index_of(lm_id)]
        for j in range(m):
            col = model.stddevs[j] * model.basis[3 * v:3 * v + 3, j]
            step = c[:2, :3] @ col
            design[2 * row, j] = step[0]
            design[2 * row + 1, j] = step[1]
        rhs[2 * row] = y[0] - proj_mean[0]
        rhs[2 * row + 1] = y[1] - proj_mean[1]
        weights[2 * row] = weights[2 * row + 1] = 1.0 / (2.0 * var)
    w = np.diag(weights)
    lhs = design.T @ w @ design + regularization * np.eye(m)
    return np.linalg.solve(lhs, design.T @ w @ rhs)


@pytest.fixture(scope="module")
def setup():
    model, blendshapes = generate_synthetic_model(seed=0)
    mapping = standard_synthetic_mapping((16, 16))
    camera = synthetic_camera(8.0)
    return model, blendshapes, mapping, camera


def test_fit_shape_matches_dense_oracle(setup, rng):
    model, _, mapping, camera = setup
    alpha_true = rng.standard_normal(model.n_components) * 0.4
    shape = generate_shape(model, alpha_true)
    lms = ground_truth_landmarks(shape, camera, mapping)
    for lam in (1.0, 0.01, 25.0):
        got = fit_shape(camera, model, lms, mapping, regularization=lam)
        ref = dense_fit_oracle(camera, model, lms, mapping, lam)
        assert np.allclose(got, ref, atol=1e-9)


def test_fit_shape_respects_variances(setup, rng):
    model, _, mapping, camera = setup
    alpha_true = rng.standard_normal(model.n_components) * 0.4
    shape = generate_shape(model, alpha_true)
    lms = ground_truth_landmarks(shape, camera, mapping)
    noisy = LandmarkSet(lms.ids, lms.positions + rng.standard_normal(lms.positions.shape),
                        variances=rng.uniform(0.5, 4.0, len(lms)))
    got = fit_shape(camera, model, noisy, mapping, regularization=0.7)
    ref = dense_fit_oracle(camera, model, noisy, mapping, 0.7)
    assert np.allclose(got, ref, atol=1e-9)


def test_fit_shape_is_cost_minimum(setup, rng):
    # perturbation probe on the fitted coefficients
    model, _, mapping, camera = setup
    shape = generate_shape(model, rng.standard_normal(model.n_components) * 0.3)
    lms = ground_truth_landmarks(shape, camera, mapping)
    noisy = LandmarkSet(lms.ids, lms.positions + rng.standard_normal(lms.positions.shape))
    lam = 0.5
    alpha = fit_shape(camera, model, noisy, mapping, regularization=lam)

    def cost(a):
        inst = generate_shape(model, a)
        total = 0.0
        for lm_id in noisy.ids:
            if lm_id not in mapping.pairs:
                continue
            v = mapping.pairs[lm_id]
            pred = camera.project(inst[3 * v:3 * v + 3])
            r = pred - noisy.position_of(lm_id)
            total += 0.5 * float(r @ r)
        return total + lam * float(a @ a)

    base = cost(alpha)
    for _ in range(50):
        assert cost(alpha + rng.standard_normal(alpha.shape) * 1e-4) >= base - 1e-10


def test_variance_regularization_tradeoff(setup, rng):
    # scaling every variance by c is identical to scaling lambda by c
    model, _, mapping, camera = setup
    shape = generate_shape(model, rng.standard_normal(model.n_components) * 0.3)
    lms = ground_truth_landmarks(shape, camera, mapping)
    noisy_pos = lms.positions + rng.standard_normal(lms.positions.shape)
    ones = LandmarkSet(lms.ids, noisy_pos, variances=np.ones(len(lms)))
    doubled = LandmarkSet(lms.ids, noisy_pos, variances=np.full(len(lms), 2.0))
    a1 = fit_shape(camera, model, doubled, mapping, regularization=1.0)
    a2 = fit_shape(camera, model, ones, mapping, regularization=2.0)
    assert np.allclose(a1, a2, atol=1e-9)


def test_fit_shape_with_expression_offset(setup, rng):
    model, blendshapes, mapping, camera = setup
    alpha_true = rng.standard_normal(model.n_components) * 0.4
    psi_true = rng.uniform(0.1, 0.5, blendshapes.n_blendshapes)
    shape = generate_shape_with_expression(model, blendshapes, alpha_true, psi_true)
    lms = ground_truth_landmarks(shape, camera, mapping)
    offset = blendshapes.displacements @ psi_true
    alpha = fit_shape(camera, model, lms, mapping, regularization=1e-8,
                      expression_offset=offset)
    assert np.abs(alpha - alpha_true).max() < 1e-5


def test_fit_shape_rank_error_without_ridge(setup):
    model, _, mapping, camera = setup
    # a pair of landmarks cannot determine 12 coefficients
    ids = list(mapping.pairs)[:2]
    shape = model.mean
    full = ground_truth_landmarks(shape, camera, mapping)
    sub = full.subset(ids)
    with pytest.raises(RankDeficiencyError):
        fit_shape(camera, model, sub, mapping, regularization=0.0)
    # ridge keeps the same system solvable
    fit_shape(camera, model, sub, mapping, regularization=1.0)


def test_fit_shape_rejects_negative_regularization(setup):
    model, _, mapping, camera = setup
    lms = ground_truth_landmarks(model.mean, camera, mapping)
    with pytest.raises(ConfigurationError):
        fit_shape(camera, model, lms, mapping, regularization=-1.0)


def test_fit_expressions_recovery_and_clamp(setup, rng):
    model, blendshapes, mapping, camera = setup
    alpha = rng.standard_normal(model.n_components) * 0.3
    identity = generate_shape(model, alpha)
    psi_true = np.array([0.45, 0.0, 0.3, 0.05])
    shape = identity + blendshapes.displacements @ psi_true
    lms = ground_truth_landmarks(shape, camera, mapping)
    psi = fit_expressions(camera, model, blendshapes, lms, mapping,
                          identity_shape=identity)
    assert np.abs(psi - psi_true).max() < 1e-8
    assert psi[1] == 0.0


def test_alternation_cost_non_increasing(setup, rng):
    model, blendshapes, mapping, camera = setup
    for seed in range(10):
        r = np.random.default_rng(seed)
        alpha = r.standard_normal(model.n_components) * 0.3
        psi = r.uniform(0, 0.4, blendshapes.n_blendshapes)
        shape = generate_shape_with_expression(model, blendshapes, alpha, psi)
        lms = ground_truth_landmarks(shape, camera, mapping,
                                     noise_sigma=0.3, rng=r)
        res = fit_shape_and_expressions(camera, model, blendshapes, lms, mapping)
        diffs = np.diff(res.residuals)
        assert np.all(diffs <= 1e-9)
        assert len(res.residuals) == res.n_iterations
        assert np.all(res.psi >= 0.0)


def test_alternation_converged_flag(setup, rng):
    model, blendshapes, mapping, camera = setup
    alpha = rng.standard_normal(model.n_components) * 0.3
    psi = rng.uniform(0, 0.4, blendshapes.n_blendshapes)
    shape = generate_shape_with_expression(model, blendshapes, alpha, psi)
    lms = ground_truth_landmarks(shape, camera, mapping)
    res = fit_shape_and_expressions(camera, model, blendshapes, lms, mapping)
    assert res.converged
    assert res.n_iterations <= 10


def brute_force_contour(camera, mesh, contour_landmarks, mapping):
    """Nearest projected candidate per contour landmark, smallest id on ties."""
    side = camera.front_facing_side()
    candidates = mapping.contour_left if side == "left" else mapping.contour_right
    ids_on_side = [i for i in contour_landmarks.ids
                   if mapping.contour_side_of(i) == side]
    verts = np.asarray(mesh, dtype=float).reshape(-1, 3)
    out = {}
    for lm_id in ids_on_side:
        pos = contour_landmarks.position_of(lm_id)
        best = None
        best_d = None
        for v in candidates:
            d = float(np.sum((camera.project(verts[v]) - pos) ** 2))
            if best_d is None or d < best_d - 1e-15 or (abs(d - best_d) <= 1e-15 and v < best):
                best, best_d = v, d
        out[lm_id] = best
    return out


def test_refine_contour_matches_brute_force(setup, rng):
    model, blendshapes, mapping, camera_unused = setup
    contour = contour_landmark_vertices((16, 16))
    for trial in range(100):
        r = np.random.default_rng(trial)
        yaw = float(r.uniform(-35, 35))
        if abs(yaw) < 1.0:
            yaw = 5.0
        cam = synthetic_camera(yaw)
        alpha = r.standard_normal(model.n_components) * 0.4
        shape = generate_shape(model, alpha)
        lms = ground_truth_landmarks(shape, cam, mapping, contour_vertices=contour,
                                     noise_sigma=1.0, rng=r)
        contour_only = lms.subset([i for i in lms.ids
                                   if mapping.contour_side_of(i) is not None])
        got = refine_contour(cam, shape, contour_only, mapping)
        ref = brute_force_contour(cam, shape, contour_only, mapping)
        assert got == ref


def test_refine_contour_tie_breaks_to_smaller_vertex():
    # two candidates separated only along the viewing axis project to the
    # same pixel: the smaller vertex index must win the tie
    mesh = np.zeros(12)
    mesh[0:3] = [1.0, 0.0, 0.0]    # vertex 0
    mesh[3:6] = [1.0, 0.0, 5.0]    # vertex 1, same frontal projection
    mesh[6:9] = [9.0, 9.0, 0.0]
    mapping = LandmarkVertexMapping(pairs={"99": 3},
                                    contour_left=(2,),
                                    contour_right=(1, 0, 2),
                                    contour_ids_left=frozenset(["5"]),
                                    contour_ids_right=frozenset(["12"]))
    cam = synthetic_camera(0.0)  # zero indicator resolves to "right"
    assert cam.front_facing_side() == "right"
    lms = LandmarkSet(("12",), cam.project(np.array([[1.0, 0.0, 2.0]])))
    got = refine_contour(cam, mesh, lms, mapping)
    assert got == {"12": 0}


def test_fit_frame_requires_fixed_landmarks(setup):
    model, blendshapes, mapping, camera = setup
    contour = contour_landmark_vertices((16, 16))
    lms = ground_truth_landmarks(model.mean, camera, mapping, contour_vertices=contour)
    only_contour = lms.subset([i for i in lms.ids
                               if mapping.contour_side_of(i) is not None])
    with pytest.raises(InsufficientCorrespondencesError):
        fit_frame(model, blendshapes, only_contour, mapping)


def test_fit_frame_full_loop(setup, rng):
    model, blendshapes, mapping, _ = setup
    contour = contour_landmark_vertices((16, 16))
    alpha = rng.standard_normal(model.n_components) * 0.3
    psi = rng.uniform(0, 0.4, blendshapes.n_blendshapes)
    cam = synthetic_camera(18.0)
    shape = generate_shape_with_expression(model, blendshapes, alpha, psi)
    lms = ground_truth_landmarks(shape, cam, mapping, contour_vertices=contour)
    res = fit_frame(model, blendshapes, lms, mapping)
    # assignments exist for the front side only
    assert res.contour_assignments
    for lm_id, v in res.contour_assignments.items():
        assert mapping.contour_side_of(lm_id) == "left"
        assert v in mapping.contour_left
    # fitted camera reprojects fixed landmarks tightly
    fitted = generate_shape_with_expression(model, blendshapes, res.alpha, res.psi)
    for lm_id, v in mapping.pairs.items():
        if lm_id not in lms.ids:
            continue
        err = np.linalg.norm(res.camera.project(fitted[3 * v:3 * v + 3])
                             - lms.position_of(lm_id))
        assert err < 1.0

    d = res.to_dict()
    from facefuse.fitting import FitResult
    back = FitResult.from_dict(d)
    assert np.allclose(back.alpha, res.alpha)
    assert np.allclose(back.camera.matrix, res.camera.matrix)
    assert back.contour_assignments == res.contour_assignments
