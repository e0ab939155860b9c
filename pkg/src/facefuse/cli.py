"""Command-line front end.

Subcommands cover the full loop: synthesize ground-truth data, train the
landmark tracker, fit single frames, track a video, run the fusion
pipeline, render fitted results, and score tracking accuracy.
"""

import argparse
import json
import os
import sys

import numpy as np

from .fitting import FitResult, fit_frame
from .images import load_image_rgb, rgb_to_gray, save_image
from .landmarks import load_landmarks, load_mapping, save_mapping
from .model import generate_shape_with_expression, load_model, save_model, save_obj
from .pipeline import (
    EVAL_IED_IDS,
    FrameRecord,
    PipelineConfig,
    evaluate_tracking,
    list_frames,
    load_face_box,
    load_frame_records,
    run_video,
    save_frame_records,
)
from .render import render_view
from .synthetic import (
    contour_landmark_vertices,
    generate_synthetic_model,
    generate_synthetic_sequence,
    landmark_bbox,
    standard_synthetic_mapping,
    synthetic_texture,
    write_sequence,
    yaw_sweep_cameras,
)
from .texture import build_isomap_layout
from .tracker import (
    FeatureConfig,
    PerturbationConfig,
    RegressorCascade,
    landmark_bbox_2k,
    track_video_step,
    train,
)


def cmd_synth(args):
    grid = (args.grid[0], args.grid[1])
    model, blendshapes = generate_synthetic_model(
        grid=grid, n_components=args.components, n_blendshapes=args.blendshapes,
        seed=args.seed)
    mapping = standard_synthetic_mapping(grid)
    contour_vertices = contour_landmark_vertices(grid)
    texture = synthetic_texture(resolution=args.texture_res, seed=args.seed)

    rng = np.random.default_rng(args.seed)
    alpha = rng.standard_normal(model.n_components) * 0.5
    psi_schedule = rng.uniform(0.0, 0.6, size=(args.frames, blendshapes.n_blendshapes))
    center = (args.image_size / 2.0, args.image_size / 2.0)
    cameras = yaw_sweep_cameras(args.frames, args.yaw_min, args.yaw_max,
                                scale=args.scale, center=center)
    frames = generate_synthetic_sequence(
        model, blendshapes, alpha, psi_schedule, cameras, texture,
        image_size=(args.image_size, args.image_size),
        noise_sigma=args.noise, seed=args.seed, mapping=mapping,
        contour_vertices=contour_vertices)

    os.makedirs(args.out, exist_ok=True)
    save_model(os.path.join(args.out, "model.json"), model, blendshapes)
    save_mapping(os.path.join(args.out, "mapping.txt"), mapping)
    save_image(os.path.join(args.out, "texture.png"), texture)
    write_sequence(os.path.join(args.out, "frames"), frames)
    print("wrote %d frames to %s" % (len(frames), os.path.join(args.out, "frames")))
    return 0


def _training_samples(frames_dir):
    """(gray frame, flat landmarks) pairs plus the shared id order."""
    samples = []
    ids = None
    for stem, path in list_frames(frames_dir):
        lms_path = os.path.join(frames_dir, stem + ".lms")
        if not os.path.exists(lms_path):
            continue
        lms = load_landmarks(lms_path)
        if ids is None:
            ids = lms.ids
        positions = np.array([lms.position_of(i) for i in ids])
        samples.append((rgb_to_gray(load_image_rgb(path)), positions.reshape(-1)))
    if not samples:
        raise FileNotFoundError("no frame/.lms pairs in %s" % frames_dir)
    return samples, ids


def cmd_train_tracker(args):
    samples, ids = _training_samples(args.frames)
    ied_indices = None
    if EVAL_IED_IDS[0] in ids and EVAL_IED_IDS[1] in ids:
        ied_indices = (ids.index(EVAL_IED_IDS[0]), ids.index(EVAL_IED_IDS[1]))
    config = FeatureConfig(ied_indices=ied_indices)
    perturb = PerturbationConfig(n_perturbations=args.perturbations)
    cascade = train(samples, perturbation_config=perturb, n_stages=args.stages,
                    ridge_lambda=args.ridge, feature_config=config,
                    landmark_ids=ids, seed=args.seed)
    cascade.save(args.out)
    errs = " -> ".join("%.4f" % e for e in cascade.train_errors)
    print("trained %d stages on %d images (%d samples); rms px error %s"
          % (args.stages, len(samples),
             len(samples) * args.perturbations, errs))
    return 0


def cmd_fit_image(args):
    model, blendshapes = load_model(args.model)
    mapping = load_mapping(args.mapping)
    mapping.validate(model.n_vertices)
    landmarks = load_landmarks(args.landmarks)
    result = fit_frame(model, blendshapes, landmarks, mapping,
                       iterations=args.iterations,
                       regularization=args.regularization)
    with open(args.out, "w") as fh:
        json.dump(result.to_dict(), fh, indent=1)
    if args.obj:
        shape = generate_shape_with_expression(model, blendshapes,
                                               result.alpha, result.psi)
        save_obj(args.obj, shape, model)
    print("fit %s: converged=%s rounds=%d cost=%.6g"
          % (args.landmarks, result.converged, result.n_iterations,
             result.residuals[-1]))
    return 0


def cmd_track_video(args):
    cascade = RegressorCascade.load(args.cascade)
    frames = list_frames(args.frames)
    if not frames:
        raise FileNotFoundError("no frame_NNNN.png files in %s" % args.frames)
    if args.face_box:
        face_box = tuple(args.face_box)
    else:
        face_box = load_face_box(os.path.join(args.frames, "face_box.json"))
    records = []
    prev = None
    for pos, (stem, path) in enumerate(frames):
        gray = rgb_to_gray(load_image_rgb(path))
        if prev is None:
            theta = track_video_step(cascade, gray, face_box=face_box)
        else:
            theta = track_video_step(cascade, gray, previous_landmarks=prev)
        _, bw, bh = landmark_bbox_2k(theta)
        if bw < 1e-6 or bh < 1e-6:
            records.append(FrameRecord(index=pos, stem=stem, skipped=True,
                                       reason="degenerate landmark box"))
            continue
        prev = theta
        records.append(FrameRecord(index=pos, stem=stem,
                                   landmark_ids=cascade.landmark_ids,
                                   landmarks=theta))
    save_frame_records(args.out, records)
    n_ok = sum(1 for r in records if not r.skipped)
    print("tracked %d/%d frames -> %s" % (n_ok, len(frames), args.out))
    return 0


def cmd_fuse(args):
    if args.config:
        config = PipelineConfig.load(args.config)
    else:
        required = ("model", "cascade", "mapping", "frames", "out_dir")
        missing = [r for r in required if getattr(args, r) is None]
        if missing:
            raise SystemExit("fuse needs --config or all of: %s"
                             % ", ".join("--" + m.replace("_", "-") for m in missing))
        config = PipelineConfig(
            model_path=args.model, cascade_path=args.cascade,
            mapping_path=args.mapping, frames_dir=args.frames,
            output_dir=args.out_dir, isomap_resolution=args.resolution,
            supersampling=args.supersampling, fusion_mode=args.mode,
            fit_iterations=args.iterations,
            snapshot_interval=args.snapshot_interval)
    summary = run_video(config)
    print("processed %d/%d frames, %d texels observed -> %s"
          % (summary["n_processed"], summary["n_frames"],
             summary["observed_count"],
             os.path.join(config.output_dir, summary["outputs"]["fused_texture"])))
    return 0


def cmd_render(args):
    model, blendshapes = load_model(args.model)
    texture = load_image_rgb(args.texture)
    alpha = np.zeros(model.n_components)
    psi = np.zeros(blendshapes.n_blendshapes)
    if args.fit:
        with open(args.fit) as fh:
            result = FitResult.from_dict(json.load(fh))
        alpha = result.alpha
        if not args.neutral:
            psi = result.psi
        camera = result.camera
    else:
        from .synthetic import synthetic_camera
        center = (args.size / 2.0, args.size / 2.0)
        camera = synthetic_camera(args.yaw, args.scale, center)
    image = render_view(model, blendshapes, alpha, psi, texture, camera,
                        image_size=(args.size, args.size))
    save_image(args.out, image)
    print("rendered %s" % args.out)
    return 0


def cmd_eval(args):
    records = load_frame_records(args.records)
    report = evaluate_tracking(records, args.frames)
    if report["mean_error_percent"] is None:
        print("no frames could be evaluated")
    else:
        print("mean landmark error: %.3f%% of inter-eye distance over %d frames"
              % (report["mean_error_percent"], report["n_evaluated"]))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report, fh, indent=1)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="facefuse",
        description="Monocular face reconstruction: landmark tracking, "
                    "model fitting, and multi-frame texture fusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic model and test video")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--grid", type=int, nargs=2, default=(16, 16),
                   metavar=("H", "W"))
    p.add_argument("--components", type=int, default=12)
    p.add_argument("--blendshapes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--yaw-min", type=float, default=-30.0)
    p.add_argument("--yaw-max", type=float, default=30.0)
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--texture-res", type=int, default=256)
    p.add_argument("--scale", type=float, default=45.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-tracker", help="train the cascaded landmark regressor")
    p.add_argument("--frames", required=True, help="directory with frame/.lms pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--stages", type=int, default=5)
    p.add_argument("--perturbations", type=int, default=10)
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_tracker)

    p = sub.add_parser("fit-image", help="fit coefficients to one landmark file")
    p.add_argument("--model", required=True)
    p.add_argument("--mapping", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--out", required=True, help="fit result JSON")
    p.add_argument("--obj", default=None, help="also export the fitted mesh")
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--regularization", type=float, default=1.0)
    p.set_defaults(func=cmd_fit_image)

    p = sub.add_parser("track-video", help="track landmarks through a frame directory")
    p.add_argument("--cascade", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True, help="records JSON lines")
    p.add_argument("--face-box", type=float, nargs=4, default=None,
                   metavar=("X", "Y", "W", "H"))
    p.set_defaults(func=cmd_track_video)

    p = sub.add_parser("fuse", help="run the full track/fit/fuse pipeline")
    p.add_argument("--config", default=None, help="pipeline config JSON")
    p.add_argument("--model", default=None)
    p.add_argument("--cascade", default=None)
    p.add_argument("--mapping", default=None)
    p.add_argument("--frames", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--resolution", type=int, default=512)
    p.add_argument("--supersampling", type=int, default=1)
    p.add_argument("--mode", choices=("average", "median"), default="median")
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--snapshot-interval", type=int, default=0)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("render", help="render a fitted mesh with a fused texture")
    p.add_argument("--model", required=True)
    p.add_argument("--texture", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fit", default=None, help="fit result JSON (pose + coefficients)")
    p.add_argument("--neutral", action="store_true",
                   help="zero the expression coefficients")
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=45.0)
    p.add_argument("--size", type=int, default=128)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="score tracked landmarks against ground truth")
    p.add_argument("--records", required=True)
    p.add_argument("--frames", required=True, help="directory with .lms ground truth")
    p.add_argument("--json", default=None, help="write the full report here")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
