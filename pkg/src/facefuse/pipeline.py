"""Video pipeline: track landmarks, fit coefficients, remap and fuse texture.

Per frame: the cascade tracker predicts landmarks (face-box init on the
first frame, previous-frame box afterwards), the frame fitter estimates
camera + identity + expression coefficients, and the frame's colours are
remapped into the shared isomap fusion buffer. Frames whose tracked
landmark box collapses are logged and skipped without touching the
fusion state. Outputs: fused texture, a mesh built from the last
successful frame's identity and the mean expression over all processed
frames, per-frame records (JSON lines, byte-stable across reruns), and
wall-clock stage timings in a separate sidecar so the records themselves
stay deterministic.
"""

import json
import os
import re
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateConfigurationError,
    FileFormatError,
    SchemaVersionError,
)
from .fitting import FitResult, fit_frame
from .images import load_image_rgb, rgb_to_gray
from .landmarks import LandmarkSet, load_landmarks, load_mapping
from .model import generate_shape_with_expression, load_model, save_obj
from .texture import (
    TextureFusionBuffer,
    build_isomap_layout,
    remap_frame,
    save_isomap_png,
    save_weight_png,
)
from .tracker import RegressorCascade, landmark_bbox_2k, track_video_step

CONFIG_SCHEMA_VERSION = 1

# outer eye corners; landmark error is reported as a percentage of their
# ground-truth distance
EVAL_IED_IDS = ("37", "46")

_FRAME_RE = re.compile(r"^frame_(\d+)\.png$")


@dataclass
class PipelineConfig:
    """Everything run_video needs, serializable to a JSON config file."""

    model_path: str = ""
    cascade_path: str = ""
    mapping_path: str = ""
    frames_dir: str = ""
    output_dir: str = ""
    face_box: tuple = None          # (x, y, w, h); None reads face_box.json
    isomap_resolution: int = 512
    supersampling: int = 1
    fusion_mode: str = "median"
    fit_iterations: int = 3
    max_alternations: int = 10
    tolerance: float = 1e-5
    regularization: float = 1.0
    snapshot_interval: int = 0      # fused snapshot every n processed frames

    def to_dict(self):
        data = {"version": CONFIG_SCHEMA_VERSION}
        for key in ("model_path", "cascade_path", "mapping_path", "frames_dir",
                    "output_dir", "isomap_resolution", "supersampling",
                    "fusion_mode", "fit_iterations", "max_alternations",
                    "tolerance", "regularization", "snapshot_interval"):
            data[key] = getattr(self, key)
        data["face_box"] = list(self.face_box) if self.face_box else None
        return data

    @classmethod
    def from_dict(cls, data):
        version = data.get("version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise SchemaVersionError("config version %r unsupported" % version)
        kwargs = {}
        for key in ("model_path", "cascade_path", "mapping_path", "frames_dir",
                    "output_dir", "isomap_resolution", "supersampling",
                    "fusion_mode", "fit_iterations", "max_alternations",
                    "tolerance", "regularization", "snapshot_interval"):
            if key in data:
                kwargs[key] = data[key]
        if data.get("face_box"):
            kwargs["face_box"] = tuple(data["face_box"])
        return cls(**kwargs)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FileFormatError("not a valid config file: %s" % exc) from exc
        return cls.from_dict(data)


@dataclass
class FrameRecord:
    """What happened on one input frame."""

    index: int
    stem: str
    skipped: bool = False
    reason: str = None
    landmark_ids: tuple = None
    landmarks: np.ndarray = None    # tracked, flat (2K,)
    fit: FitResult = None
    observed_count: int = 0

    def to_dict(self):
        return {
            "index": self.index,
            "stem": self.stem,
            "skipped": self.skipped,
            "reason": self.reason,
            "landmark_ids": list(self.landmark_ids) if self.landmark_ids else None,
            "landmarks": self.landmarks.tolist() if self.landmarks is not None else None,
            "fit": self.fit.to_dict() if self.fit is not None else None,
            "observed_count": self.observed_count,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            index=int(data["index"]),
            stem=data["stem"],
            skipped=bool(data.get("skipped", False)),
            reason=data.get("reason"),
            landmark_ids=tuple(data["landmark_ids"]) if data.get("landmark_ids") else None,
            landmarks=(np.asarray(data["landmarks"], dtype=float)
                       if data.get("landmarks") is not None else None),
            fit=FitResult.from_dict(data["fit"]) if data.get("fit") else None,
            observed_count=int(data.get("observed_count", 0)),
        )


def save_frame_records(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")


def load_frame_records(path):
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(FrameRecord.from_dict(json.loads(line)))
    return records


def list_frames(frames_dir):
    """Sorted (stem, path) pairs for frame_NNNN.png files."""
    out = []
    for name in sorted(os.listdir(frames_dir)):
        if _FRAME_RE.match(name):
            out.append((name[:-4], os.path.join(frames_dir, name)))
    return out


def load_face_box(path):
    with open(path) as fh:
        data = json.load(fh)
    return (float(data["x"]), float(data["y"]), float(data["w"]), float(data["h"]))


def run_video(config: PipelineConfig):
    """Run the full pipeline over a frame directory.

    Returns a summary dict (also written to output_dir/summary.json) with
    frame counts, the final coefficients, and output paths. Per-frame
    records land in records.jsonl, stage timings in timings.jsonl.
    """
    model, blendshapes = load_model(config.model_path)
    mapping = load_mapping(config.mapping_path)
    mapping.validate(model.n_vertices)
    cascade = RegressorCascade.load(config.cascade_path)
    if cascade.landmark_ids is None:
        raise ConfigurationError(
            "cascade carries no landmark ids; tracked points cannot be "
            "associated with mapping entries"
        )

    frames = list_frames(config.frames_dir)
    if not frames:
        raise FileNotFoundError("no frame_NNNN.png files in %s" % config.frames_dir)
    face_box = config.face_box
    if face_box is None:
        face_box = load_face_box(os.path.join(config.frames_dir, "face_box.json"))

    resolution = config.isomap_resolution * max(int(config.supersampling), 1)
    layout = build_isomap_layout(model, resolution)
    buffer = TextureFusionBuffer(resolution, mode=config.fusion_mode)

    os.makedirs(config.output_dir, exist_ok=True)

    records = []
    timings = []
    prev = None
    last_fit = None
    psi_sum = np.zeros(blendshapes.n_blendshapes)
    n_ok = 0
    for pos, (stem, path) in enumerate(frames):
        rgb = load_image_rgb(path)
        gray = rgb_to_gray(rgb)
        t0 = time.perf_counter()
        if prev is None:
            theta = track_video_step(cascade, gray, face_box=face_box)
        else:
            theta = track_video_step(cascade, gray, previous_landmarks=prev)
        t_track = time.perf_counter() - t0

        _, bw, bh = landmark_bbox_2k(theta)
        if bw < 1e-6 or bh < 1e-6:
            records.append(FrameRecord(index=pos, stem=stem, skipped=True,
                                       reason="degenerate landmark box"))
            timings.append({"index": pos, "stem": stem, "track_s": t_track,
                            "fit_s": 0.0, "remap_s": 0.0})
            continue
        prev = theta

        lms = LandmarkSet(cascade.landmark_ids, theta.reshape(-1, 2).copy())
        t0 = time.perf_counter()
        fit = fit_frame(model, blendshapes, lms, mapping,
                        iterations=config.fit_iterations,
                        max_alternations=config.max_alternations,
                        tolerance=config.tolerance,
                        regularization=config.regularization)
        t_fit = time.perf_counter() - t0

        t0 = time.perf_counter()
        mesh = generate_shape_with_expression(model, blendshapes, fit.alpha, fit.psi)
        frame_texture = remap_frame(rgb, mesh, fit.camera, layout, frame_index=pos)
        buffer.add(frame_texture)
        t_remap = time.perf_counter() - t0

        psi_sum += fit.psi
        n_ok += 1
        last_fit = fit
        records.append(FrameRecord(index=pos, stem=stem,
                                   landmark_ids=cascade.landmark_ids,
                                   landmarks=theta, fit=fit,
                                   observed_count=frame_texture.observed_count()))
        timings.append({"index": pos, "stem": stem, "track_s": t_track,
                        "fit_s": t_fit, "remap_s": t_remap})

        if config.snapshot_interval and n_ok % config.snapshot_interval == 0:
            colour, observed = buffer.fused()
            save_isomap_png(os.path.join(config.output_dir, "snapshot_%04d.png" % pos),
                            colour, observed)

    if n_ok == 0:
        raise DegenerateConfigurationError("every frame was skipped, nothing to fuse")

    colour, observed = buffer.fused()
    texture_path = os.path.join(config.output_dir, "fused_texture.png")
    save_isomap_png(texture_path, colour, observed)
    save_weight_png(os.path.join(config.output_dir, "fused_weights.png"),
                    buffer.weight_map(), normalize=True)

    mean_psi = psi_sum / n_ok
    final_shape = generate_shape_with_expression(model, blendshapes,
                                                 last_fit.alpha, mean_psi)
    mesh_path = os.path.join(config.output_dir, "final_mesh.obj")
    save_obj(mesh_path, final_shape, model)

    records_path = os.path.join(config.output_dir, "records.jsonl")
    save_frame_records(records_path, records)
    with open(os.path.join(config.output_dir, "timings.jsonl"), "w") as fh:
        for entry in timings:
            fh.write(json.dumps(entry) + "\n")

    summary = {
        "n_frames": len(frames),
        "n_processed": n_ok,
        "n_skipped": len(frames) - n_ok,
        "observed_count": int(np.count_nonzero(observed)),
        "isomap_resolution": resolution,
        "fusion_mode": config.fusion_mode,
        "alpha": last_fit.alpha.tolist(),
        "mean_psi": mean_psi.tolist(),
        # basenames, so the summary itself is byte-stable across runs
        # into different directories
        "outputs": {
            "fused_texture": os.path.basename(texture_path),
            "final_mesh": os.path.basename(mesh_path),
            "records": os.path.basename(records_path),
        },
    }
    with open(os.path.join(config.output_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary


def landmark_error_percent(predicted: LandmarkSet, truth: LandmarkSet,
                           ied_ids=EVAL_IED_IDS):
    """Mean point error over shared ids, as % of the truth inter-eye distance.

    The normalizer is the distance between the two ied_ids landmarks in
    the ground truth (outer eye corners by default).
    """
    common = [i for i in truth.ids if i in predicted.ids]
    if not common:
        raise ConfigurationError("no shared landmark ids to evaluate")
    for i in ied_ids:
        if i not in truth.ids:
            raise ConfigurationError("truth lacks eye-corner landmark %r" % i)
    ied = float(np.linalg.norm(truth.position_of(ied_ids[0])
                               - truth.position_of(ied_ids[1])))
    if ied <= 0:
        raise DegenerateConfigurationError("zero inter-eye distance in truth")
    errs = [np.linalg.norm(predicted.position_of(i) - truth.position_of(i))
            for i in common]
    return 100.0 * float(np.mean(errs)) / ied


def evaluate_tracking(records, frames_dir, ied_ids=EVAL_IED_IDS):
    """Score tracked landmarks in records against frame_NNNN.lms ground truth.

    Skipped frames and frames without a truth file are excluded from the
    mean but counted in the report.
    """
    per_frame = []
    n_skipped = 0
    n_missing = 0
    for rec in records:
        if rec.skipped or rec.landmarks is None:
            n_skipped += 1
            continue
        lms_path = os.path.join(frames_dir, rec.stem + ".lms")
        if not os.path.exists(lms_path):
            n_missing += 1
            continue
        truth = load_landmarks(lms_path)
        pred = LandmarkSet(rec.landmark_ids, rec.landmarks.reshape(-1, 2))
        per_frame.append({
            "index": rec.index,
            "stem": rec.stem,
            "error_percent": landmark_error_percent(pred, truth, ied_ids),
        })
    mean = float(np.mean([e["error_percent"] for e in per_frame])) if per_frame else None
    return {
        "n_evaluated": len(per_frame),
        "n_skipped": n_skipped,
        "n_missing_truth": n_missing,
        "mean_error_percent": mean,
        "per_frame": per_frame,
    }
