"""Cascaded linear landmark regression: dense HOG features in, coordinate
updates out, applied stage by stage.

Landmark vectors are flat (2K,) arrays in (x0, y0, x1, y1, ...) order.
The canonical mean shape lives in a normalized frame with its bounding
box centered at 0 and its bounding-box width scaled to exactly 1; video
re-initialization places that mean into the previous frame's landmark
box (or an externally supplied face box on the first frame).
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    FileFormatError,
    MissingInitializationError,
    RankDeficiencyError,
    SchemaVersionError,
)

CASCADE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FeatureConfig:
    """Dense HOG parameters.

    cells x cells spatial cells over a square patch, `bins` unsigned
    orientation bins over [0, pi), magnitude votes split linearly between
    the two nearest bin centers, whole-patch L2 normalization guarded by
    normalize_eps. The patch side length is patch_size pixels when set;
    otherwise patch_scale times a per-call reference length (inter-eye
    distance when ied_indices names two landmarks, else the larger
    bounding-box side of the current estimate).
    """

    cells: int = 3
    bins: int = 9
    patch_scale: float = 0.25
    ied_indices: tuple = None
    patch_size: int = None
    normalize_eps: float = 1e-5

    @property
    def descriptor_length(self):
        return self.cells * self.cells * self.bins

    def to_dict(self):
        return {
            "cells": self.cells,
            "bins": self.bins,
            "patch_scale": self.patch_scale,
            "ied_indices": list(self.ied_indices) if self.ied_indices else None,
            "patch_size": self.patch_size,
            "normalize_eps": self.normalize_eps,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            cells=int(data.get("cells", 3)),
            bins=int(data.get("bins", 9)),
            patch_scale=float(data.get("patch_scale", 0.25)),
            ied_indices=tuple(data["ied_indices"]) if data.get("ied_indices") else None,
            patch_size=int(data["patch_size"]) if data.get("patch_size") else None,
            normalize_eps=float(data.get("normalize_eps", 1e-5)),
        )


def landmark_bbox_2k(theta):
    """(center (2,), width, height) of a flat landmark vector's box."""
    pts = np.asarray(theta, dtype=float).reshape(-1, 2)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    return 0.5 * (lo + hi), float(hi[0] - lo[0]), float(hi[1] - lo[1])


def patch_size_for(config: FeatureConfig, theta):
    """Patch side in pixels for the current landmark estimate."""
    if config.patch_size is not None:
        return max(int(config.patch_size), config.cells)
    pts = np.asarray(theta, dtype=float).reshape(-1, 2)
    if config.ied_indices is not None:
        i, j = config.ied_indices
        ref = float(np.linalg.norm(pts[i] - pts[j]))
    else:
        _, w, h = landmark_bbox_2k(theta)
        ref = max(w, h)
    return max(int(round(config.patch_scale * ref)), config.cells, 4)


def _hog_patch(frame, cx, cy, size, config: FeatureConfig):
    """HOG descriptor of one size x size patch centered at (cx, cy).

    The patch is read with edge replication (clamped indices), padded by
    one pixel for central differences. Orientation is unsigned (mod pi).
    """
    h, w = frame.shape
    half = size // 2
    rows = np.clip(np.arange(cy - half - 1, cy - half + size + 1), 0, h - 1)
    cols = np.clip(np.arange(cx - half - 1, cx - half + size + 1), 0, w - 1)
    patch = frame[np.ix_(rows, cols)]
    gx = 0.5 * (patch[1:-1, 2:] - patch[1:-1, :-2])
    gy = 0.5 * (patch[2:, 1:-1] - patch[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)

    bins = config.bins
    cells = config.cells
    bin_width = np.pi / bins
    t = ang / bin_width - 0.5
    b0 = np.floor(t)
    frac = t - b0
    b0 = np.mod(b0.astype(int), bins)
    b1 = np.mod(b0 + 1, bins)

    # hard spatial cell assignment via integer division
    idx = np.arange(size)
    cell = np.minimum((idx * cells) // size, cells - 1)
    cell_row = cell[:, None]
    cell_col = cell[None, :]
    cell_flat = (cell_row * cells + cell_col) * bins

    flat0 = (cell_flat + b0).ravel()
    flat1 = (cell_flat + b1).ravel()
    length = cells * cells * bins
    hist = np.bincount(flat0, weights=(mag * (1.0 - frac)).ravel(), minlength=length)
    hist += np.bincount(flat1, weights=(mag * frac).ravel(), minlength=length)
    norm = np.sqrt(hist @ hist + config.normalize_eps ** 2)
    return hist / norm


def extract_features(frame, theta, config: FeatureConfig):
    """Concatenated per-landmark HOG descriptors at the current estimate.

    Args:
        frame: (H, W) grayscale image, values in [0, 1].
        theta: flat (2K,) landmark vector; patch centers are the nearest
            integer pixel of each landmark (clamped at borders).

    Returns:
        (K * cells^2 * bins,) float descriptor.
    """
    frame = np.asarray(frame, dtype=float)
    pts = np.asarray(theta, dtype=float).reshape(-1, 2)
    size = patch_size_for(config, theta)
    descs = []
    for x, y in pts:
        cx = int(np.rint(x))
        cy = int(np.rint(y))
        descs.append(_hog_patch(frame, cx, cy, size, config))
    return np.concatenate(descs)


@dataclass
class RegressorCascade:
    """Trained stages plus the canonical mean shape and feature settings.

    stages is a list of (A, b) with A of shape (2K, feature_dim);
    train_errors records the RMS landmark error over the training set
    before any stage and after each stage (length n_stages + 1).
    """

    stages: list
    feature_config: FeatureConfig
    mean_landmarks: np.ndarray
    landmark_ids: tuple = None
    train_errors: list = None

    @property
    def n_landmarks(self):
        return self.mean_landmarks.size // 2

    def predict(self, frame, initial_landmarks):
        """Run every stage: theta <- theta + A f(I, theta) + b."""
        theta = np.asarray(initial_landmarks, dtype=float).copy()
        if theta.size != self.mean_landmarks.size:
            raise DegenerateConfigurationError(
                "initial landmarks have length %d, cascade expects %d"
                % (theta.size, self.mean_landmarks.size)
            )
        for a, b in self.stages:
            feats = extract_features(frame, theta, self.feature_config)
            theta = theta + a @ feats + b
        return theta

    def save(self, path):
        payload = {
            "version": CASCADE_SCHEMA_VERSION,
            "K": self.n_landmarks,
            "feature_config": self.feature_config.to_dict(),
            "mean_landmarks": self.mean_landmarks.tolist(),
            "stages": [{"A": a.tolist(), "b": b.tolist()} for a, b in self.stages],
            "landmark_ids": list(self.landmark_ids) if self.landmark_ids else None,
            "train_errors": self.train_errors,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path):
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FileFormatError("not a valid cascade file: %s" % exc) from exc
        version = data.get("version")
        if version != CASCADE_SCHEMA_VERSION:
            raise SchemaVersionError(
                "cascade schema version %r unsupported (expected %d)"
                % (version, CASCADE_SCHEMA_VERSION)
            )
        config = FeatureConfig.from_dict(data["feature_config"])
        mean = np.asarray(data["mean_landmarks"], dtype=float)
        k = int(data["K"])
        if mean.size != 2 * k:
            raise FileFormatError("mean_landmarks length %d != 2K" % mean.size)
        stages = []
        for stage in data["stages"]:
            a = np.asarray(stage["A"], dtype=float)
            b = np.asarray(stage["b"], dtype=float)
            if a.shape != (2 * k, k * config.descriptor_length) or b.shape != (2 * k,):
                raise FileFormatError("stage matrix shape %s inconsistent" % (a.shape,))
            stages.append((a, b))
        ids = tuple(data["landmark_ids"]) if data.get("landmark_ids") else None
        return cls(stages=stages, feature_config=config, mean_landmarks=mean,
                   landmark_ids=ids, train_errors=data.get("train_errors"))


def canonicalize_landmarks(theta):
    """Map a flat landmark vector to the canonical frame.

    Bounding-box center goes to 0 and bounding-box width to exactly 1
    (isotropic; the height follows the aspect ratio).
    """
    pts = np.asarray(theta, dtype=float).reshape(-1, 2)
    center, width, _ = landmark_bbox_2k(theta)
    if width <= 0:
        raise DegenerateConfigurationError("landmark box has zero width")
    return ((pts - center) / width).reshape(-1)


def mean_canonical_landmarks(ground_truths):
    """Average the canonicalized ground truths, then re-canonicalize."""
    acc = np.mean([canonicalize_landmarks(g) for g in ground_truths], axis=0)
    return canonicalize_landmarks(acc)


def place_in_box(mean_landmarks, center, width):
    """Instantiate the canonical mean at a box center and width."""
    pts = np.asarray(mean_landmarks, dtype=float).reshape(-1, 2)
    return (pts * width + np.asarray(center, dtype=float)).reshape(-1)


@dataclass(frozen=True)
class PerturbationConfig:
    """Training-time initialization jitter around the ground truth."""

    n_perturbations: int = 10
    translation_frac: float = 0.05
    scale_frac: float = 0.10


def train(samples, perturbation_config: PerturbationConfig = None, n_stages=5,
          ridge_lambda=None, feature_config: FeatureConfig = None,
          mean_landmarks=None, landmark_ids=None, seed=0) -> RegressorCascade:
    """Fit a cascade by stage-wise ridge regression.

    Each training sample is a (grayscale frame, flat ground-truth
    landmarks) pair. Per sample, n_perturbations initializations place
    the canonical mean into the ground-truth box jittered by uniform
    translation (fraction of face size) and scale noise. Each stage
    minimizes ||A F + b 1^T - D||_F^2 + ridge ||A||_F^2 over the current
    training state (b unregularized, so the offset absorbs the mean), then
    the state advances by the fitted stage. The recorded RMS training
    error can never increase: A = 0, b = mean displacement is feasible.

    Args:
        ridge_lambda: ridge weight; default 1e-3 times the mean squared
            feature norm of the current stage's features. Pass 0 to
            disable (raises RankDeficiencyError on singular systems).

    Returns:
        RegressorCascade with train_errors of length n_stages + 1.
    """
    if not samples:
        raise ValueError("need at least one training sample")
    if n_stages < 1:
        raise ValueError("n_stages must be >= 1")
    if perturbation_config is None:
        perturbation_config = PerturbationConfig()
    if feature_config is None:
        feature_config = FeatureConfig()
    frames = [np.asarray(f, dtype=float) for f, _ in samples]
    gts = [np.asarray(g, dtype=float).reshape(-1) for _, g in samples]
    if mean_landmarks is None:
        mean_landmarks = mean_canonical_landmarks(gts)
    else:
        mean_landmarks = np.asarray(mean_landmarks, dtype=float).reshape(-1)

    rng = np.random.default_rng(seed)
    thetas = []
    targets = []
    frame_of = []
    for s, gt in enumerate(gts):
        center, width, height = landmark_bbox_2k(gt)
        face_size = max(width, height)
        for _ in range(perturbation_config.n_perturbations):
            jitter = rng.uniform(-1.0, 1.0, 2) * perturbation_config.translation_frac * face_size
            scale = 1.0 + rng.uniform(-1.0, 1.0) * perturbation_config.scale_frac
            thetas.append(place_in_box(mean_landmarks, center + jitter, width * scale))
            targets.append(gt)
            frame_of.append(s)
    thetas = np.array(thetas)          # (S, 2K)
    targets = np.array(targets)

    def rms_error():
        return float(np.sqrt(np.mean((thetas - targets) ** 2)))

    stages = []
    errors = [rms_error()]
    for _ in range(n_stages):
        feats = np.array([
            extract_features(frames[frame_of[i]], thetas[i], feature_config)
            for i in range(len(thetas))
        ])                              # (S, D)
        deltas = targets - thetas       # (S, 2K)
        ridge = ridge_lambda
        if ridge is None:
            ridge = 1e-3 * float(np.mean(np.sum(feats ** 2, axis=1)))
        a, b = _fit_stage(feats, deltas, ridge)
        stages.append((a, b))
        thetas = thetas + feats @ a.T + b
        errors.append(rms_error())

    return RegressorCascade(stages=stages, feature_config=feature_config,
                            mean_landmarks=mean_landmarks,
                            landmark_ids=tuple(landmark_ids) if landmark_ids else None,
                            train_errors=errors)


def _fit_stage(feats, deltas, ridge):
    """Ridge solve for one stage; A regularized, offset b free.

    feats (S, D), deltas (S, 2K). Uses the sample-space (dual) form when
    S < D, the feature-space form otherwise; both give the identical
    unique ridge solution A = Dc Fc^T (Fc Fc^T + ridge I)^-1.
    """
    fm = feats.mean(axis=0)
    dm = deltas.mean(axis=0)
    fc = feats - fm                    # (S, D)
    dc = deltas - dm                   # (S, 2K)
    s, d = fc.shape
    try:
        if s < d:
            gram = fc @ fc.T
            gram[np.diag_indices_from(gram)] += ridge
            a = dc.T @ np.linalg.solve(gram, fc)
        else:
            gram = fc.T @ fc
            gram[np.diag_indices_from(gram)] += ridge
            a = np.linalg.solve(gram, fc.T @ dc).T
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            "stage system singular with ridge=%g (degenerate features)" % ridge
        ) from exc
    b = dm - a @ fm
    return a, b


def track_video_step(cascade: RegressorCascade, frame, previous_landmarks=None,
                     face_box=None):
    """One video-mode prediction with mean-shape re-initialization.

    The canonical mean is placed into the previous frame's landmark box
    when previous_landmarks is given, else into face_box = (x, y, w, h).
    Starting from the rigid mean rather than the previous frame's exact
    shape regularizes the per-frame estimate.
    """
    if previous_landmarks is not None:
        center, width, _ = landmark_bbox_2k(previous_landmarks)
        if width <= 1e-9:
            raise DegenerateConfigurationError("previous landmark box has zero width")
    elif face_box is not None:
        x, y, w, h = face_box
        if w <= 0:
            raise DegenerateConfigurationError("face box has non-positive width")
        center = np.array([x + 0.5 * w, y + 0.5 * h])
        width = float(w)
    else:
        raise MissingInitializationError(
            "track_video_step needs previous_landmarks or face_box"
        )
    init = place_in_box(cascade.mean_landmarks, center, width)
    return cascade.predict(frame, init)
