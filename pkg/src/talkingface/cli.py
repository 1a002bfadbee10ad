"""Command-line entry points wiring the pipeline end to end.

Subcommands: prepare, train (general | finetune | render), synthesize,
evaluate. Every command exits nonzero on module errors and prints the
structured error kind as ``error[<kind>]: message``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import audio as audio_mod
from . import config as config_mod
from .attribute_gan import finetune_attribute_gan, infer_sequence, train_attribute_gan
from .checkpoint import load_checkpoint, save_checkpoint
from .container import FeatureTrack, read_track, write_array, write_track
from .datasets import DatasetManifest, load_manifest, save_manifest, split_attribute_matrix
from .errors import FrameCountMismatchError, StageOrderError, TalkingFaceError, TrackIOError
from .eyes import normalize_au
from .face3d.basis import load_face_basis, synthesize_geometry, apply_pose, PoseParams
from .face3d.raster import project_landmarks
from .image import (
    load_render_frame,
    load_rgb,
    read_frame_index,
    save_gray,
    save_render_frame,
    save_rgb,
    write_frame_index,
)
from .metrics import blink_stats, detect_blinks, lmd, normalize_mouth_landmarks
from .pipeline import FrameRenderer, load_reference
from .render_net import stack_window, train_render_net, translate
from .reporting import write_history_csv
from .seeding import seed_all


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="pipeline config JSON")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument("--seed", type=int, default=None, help="top-level seed override")
    parser.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="talkingface")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="resample audio tracks and validate alignment")
    p.add_argument("--manifest", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one pipeline stage")
    p.add_argument("--stage", required=True, choices=("general", "finetune", "render"))
    p.add_argument("--data", required=True, help="dataset dir (manifest.json) or pairs dir")
    p.add_argument("--checkpoint", default=None, help="general checkpoint (finetune stage)")
    p.add_argument("--clip", default=None, help="clip id to fine-tune on (default: first)")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synthesize", help="audio to frames and attribute tracks")
    p.add_argument("--audio", required=True, help="audio feature track (.facl)")
    p.add_argument("--attr-checkpoint", required=True)
    p.add_argument("--render-checkpoint", default=None)
    p.add_argument("--basis", required=True, help="face basis directory")
    p.add_argument("--reference", required=True, help="reference coefficients directory")
    p.add_argument("--export-attention", action="store_true", help="also write attention PNGs")
    _add_common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="metrics report for predicted vs reference tracks")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--basis", default=None, help="face basis dir (enables landmark distance)")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TalkingFaceError as exc:
        print(f"error[{exc.kind}]: {exc}", file=sys.stderr)
        return 1


def _setup(args) -> dict:
    cfg = config_mod.load_config(args.config, args.overrides, args.seed)
    seed_all(cfg["seed"])
    Path(args.out).mkdir(parents=True, exist_ok=True)
    return cfg


def cmd_prepare(args) -> int:
    cfg = _setup(args)
    target_fps = cfg["audio"]["target_fps"]
    src = Path(args.manifest)
    manifest = load_manifest(src, validate=False)
    out = Path(args.out)
    new_clips = []
    for clip in manifest.clips:
        track = read_track(src.parent / clip.audio_path)
        if track.fps != target_fps:
            track = audio_mod.resample_features(track, target_fps)
        write_track(track, out / clip.audio_path)
        for kind, rel in clip.attribute_paths.items():
            attr = read_track(src.parent / rel)
            if attr.frames != track.frames:
                raise FrameCountMismatchError(
                    f"clip {clip.clip_id}: {kind} track has {attr.frames} frames, "
                    f"audio resampled to {track.frames}"
                )
            write_track(attr, out / rel)
        clip.frame_count = track.frames
        new_clips.append(clip)
    save_manifest(
        DatasetManifest(clips=new_clips, split=manifest.split, extra=manifest.extra),
        out / "manifest.json",
    )
    print(f"prepared {len(new_clips)} clips at {target_fps} FPS -> {out}")
    return 0


def _windows_for_clips(manifest: DatasetManifest, base: Path, cfg: dict, clip_id=None):
    samples = []
    for clip in manifest.clips:
        if clip_id is not None and clip.clip_id != clip_id:
            continue
        tracks = {k: read_track(base / rel) for k, rel in clip.attribute_paths.items()}
        samples.extend(
            audio_mod.slice_windows(
                read_track(base / clip.audio_path),
                (tracks["expression"], tracks["pose"], tracks["blink_au"]),
                window=cfg["audio"]["window"],
                stride=cfg["audio"]["stride"],
                clip_id=clip.clip_id,
            )
        )
    return samples


def cmd_train(args) -> int:
    cfg = _setup(args)
    out = Path(args.out)
    if args.stage in ("general", "finetune"):
        gan_cfg = config_mod.attribute_gan_config(cfg)
        manifest = load_manifest(Path(args.data) / "manifest.json")
        if args.stage == "general":
            samples = _windows_for_clips(manifest, Path(args.data), cfg)
            ckpt, history = train_attribute_gan(samples, gan_cfg)
        else:
            if args.checkpoint is None:
                raise StageOrderError("finetune requires a general checkpoint (--checkpoint)")
            base_ckpt = load_checkpoint(args.checkpoint)
            if base_ckpt.kind != "attribute_gan":
                raise StageOrderError(
                    f"finetune requires an attribute_gan checkpoint, got {base_ckpt.kind!r}"
                )
            clip_id = args.clip or manifest.clips[0].clip_id
            samples = _windows_for_clips(manifest, Path(args.data), cfg, clip_id=clip_id)
            ckpt, history = finetune_attribute_gan(base_ckpt, samples)
    else:
        render_cfg = config_mod.render_net_config(cfg)
        pairs = _load_render_pairs(Path(args.data), render_cfg.n_w)
        ckpt, history = train_render_net(pairs, render_cfg)
    ckpt.extra["top_seed"] = cfg["seed"]
    ckpt.extra["stage"] = args.stage
    save_checkpoint(ckpt, out / "checkpoint")
    write_history_csv(history, out / "history.csv")
    print(f"trained stage {args.stage}: {ckpt.step} steps -> {out / 'checkpoint'}")
    return 0


def _load_render_pairs(pairs_dir: Path, n_w: int):
    renders_dir, targets_dir = pairs_dir / "renders", pairs_dir / "targets"
    render_names = read_frame_index(renders_dir)
    target_names = read_frame_index(targets_dir)
    if len(render_names) != len(target_names):
        raise TrackIOError(
            f"{pairs_dir}: {len(render_names)} renders but {len(target_names)} targets"
        )
    frames = [load_render_frame(renders_dir / name) for name in render_names]
    targets = [load_rgb(targets_dir / name) for name in target_names]
    return [
        (stack_window(frames, t, n_w), targets[t].transpose(2, 0, 1))
        for t in range(len(frames))
    ]


def _hash_path(path: Path) -> str:
    digest = hashlib.sha256()
    if path.is_dir():
        for sub in sorted(p for p in path.rglob("*") if p.is_file()):
            digest.update(str(sub.relative_to(path)).encode())
            digest.update(sub.read_bytes())
    else:
        digest.update(path.read_bytes())
    return digest.hexdigest()


def cmd_synthesize(args) -> int:
    cfg = _setup(args)
    out = Path(args.out)
    track = read_track(args.audio)
    if track.fps != cfg["audio"]["target_fps"]:
        track = audio_mod.resample_features(track, cfg["audio"]["target_fps"])
    basis = load_face_basis(args.basis)
    reference = load_reference(args.reference)
    attr_ckpt = load_checkpoint(args.attr_checkpoint)

    state0 = (
        reference.initial_state
        if reference.initial_state is not None
        else np.zeros(71, dtype=np.float32)
    )
    result = infer_sequence(track.data, state0, attr_ckpt)

    for kind, block in split_attribute_matrix(result.attributes.astype(np.float64)).items():
        write_track(
            FeatureTrack(block.astype(np.float32), fps=track.fps, kind=kind),
            out / f"{kind}.facl",
        )

    renderer = FrameRenderer(
        basis=basis,
        reference=reference,
        camera=config_mod.camera_config(cfg),
        eye_threshold=cfg["eye"]["threshold"],
        au_max=cfg["eye"]["au_max"],
    )
    frames = renderer.render_sequence(result.attributes)

    renders_dir = out / "renders"
    renders_dir.mkdir(parents=True, exist_ok=True)
    names = [f"frame_{i:05d}.png" for i in range(len(frames))]
    for name, frame in zip(names, frames):
        save_render_frame(renders_dir / name, frame)
    write_frame_index(renders_dir, names)

    if args.export_attention:
        att_dir = out / "attention"
        att_dir.mkdir(parents=True, exist_ok=True)
        for name, frame in zip(names, frames):
            save_gray(att_dir / name, frame.attention)
        write_frame_index(att_dir, names)
        maps = np.stack([frame.attention[..., 0] for frame in frames])
        write_array(att_dir / "maps.facl", maps, kind="attention_map", fps=track.fps)

    if args.render_checkpoint is not None:
        render_ckpt = load_checkpoint(args.render_checkpoint)
        final = translate(render_ckpt, frames)
        final_dir = out / "final"
        final_dir.mkdir(parents=True, exist_ok=True)
        for name, img in zip(names, final):
            save_rgb(final_dir / name, img)
        write_frame_index(final_dir, names)

    provenance = {
        "config": cfg,
        "seed": cfg["seed"],
        "frames": len(frames),
        "inputs": {
            "audio": _hash_path(Path(args.audio)),
            "basis": _hash_path(Path(args.basis)),
            "reference": _hash_path(Path(args.reference)),
        },
        "checkpoints": {
            "attribute_gan": _hash_path(Path(args.attr_checkpoint)),
            "render": _hash_path(Path(args.render_checkpoint))
            if args.render_checkpoint
            else None,
        },
    }
    (out / "provenance.json").write_text(json.dumps(provenance, indent=2))
    print(f"synthesized {len(frames)} frames -> {out}")
    return 0


def _mouth_landmark_tracks(track_dir: Path, basis) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame normalized mouth landmarks from expression+pose tracks."""
    exp = read_track(track_dir / "expression.facl").data.astype(np.float64)
    pose = read_track(track_dir / "pose.facl").data.astype(np.float64)
    mouth, interocular = [], []
    eye_groups = basis.eye_landmarks
    for t in range(exp.shape[0]):
        geometry = synthesize_geometry(basis, np.zeros(80), exp[t])
        posed = apply_pose(geometry, PoseParams.from_vector(pose[t]))
        mouth.append(project_landmarks(posed, basis.mouth_landmarks))
        left = project_landmarks(posed, eye_groups["left"]).mean(axis=0)
        right = project_landmarks(posed, eye_groups["right"]).mean(axis=0)
        interocular.append(np.linalg.norm(left - right))
    return normalize_mouth_landmarks(np.stack(mouth), np.array(interocular)), np.array(interocular)


def cmd_evaluate(args) -> int:
    cfg = _setup(args)
    out = Path(args.out)
    pred_dir, ref_dir = Path(args.pred), Path(args.ref)

    landmark_distance = None
    if args.basis is not None:
        basis = load_face_basis(args.basis)
        pred_marks, _ = _mouth_landmark_tracks(pred_dir, basis)
        ref_marks, _ = _mouth_landmark_tracks(ref_dir, basis)
        landmark_distance = lmd(pred_marks, ref_marks)

    m_cfg = cfg["metrics"]
    blink_reports = {}
    for label, src in (("pred", pred_dir), ("ref", ref_dir)):
        track = read_track(src / "blink_au.facl")
        normalized = np.array([normalize_au(v, cfg["eye"]["au_max"]) for v in track.data[:, 0]])
        events = detect_blinks(normalized, track.fps, hi=m_cfg["blink_hi"], lo=m_cfg["blink_lo"])
        stats = blink_stats(events, track.frames / track.fps, hist_bin_s=m_cfg["hist_bin_s"])
        blink_reports[label] = stats
        with open(out / f"blink_histogram_{label}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_edge_s", "count"])
            hist = stats["histogram"]
            for edge, count in zip(hist["bin_edges_s"], hist["counts"]):
                writer.writerow([edge, count])

    report = {
        "lmd": landmark_distance,
        "lmd_normalization": "inter-ocular scale, per-frame mouth-centroid alignment",
        "blinks": blink_reports,
        "external": {"cpbd": None, "av_offset": None, "av_confidence": None},
    }
    (out / "report.json").write_text(json.dumps(report, indent=2))
    print(json.dumps(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
