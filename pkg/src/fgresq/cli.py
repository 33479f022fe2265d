"""Command-line entry point wiring the pipeline stages together.

Exit codes: 0 success, 1 domain error (message names the failing
record), 2 usage error. Every randomized stage takes --seed; reports
contain no timestamps, so identical inputs and seed give byte-identical
outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .datamodel import (
    DatasetManifest,
    SplitSpec,
    load_manifest,
    normalize_manifest_mos,
    save_manifest,
    split_by_pairs,
)
from .errors import FgresqError
from .filtration import (
    FiltrationConfig,
    JndCalibration,
    JndConfig,
    calibrate_jnd_threshold,
    generate_pairs,
    load_image,
    run_filtration,
)
from .metrics import binned_correlation, consistency_analysis


def _disk_loader(manifest: DatasetManifest, root):
    idx = manifest._image_index()

    def load(image_id: str):
        return load_image(Path(root) / idx[image_id].path)

    return load


def _print_config(name: str, payload: dict):
    print(f"effective {name}: {json.dumps(payload, sort_keys=True)}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.normalize:
        manifest = normalize_manifest_mos(manifest)
        save_manifest(manifest, args.out or args.manifest)
    print(
        f"manifest ok: {len(manifest.images)} images, {len(manifest.pairs)} pairs, "
        f"{len(manifest.scenes)} scenes"
    )
    return 0


def cmd_pairgen(args) -> int:
    manifest = load_manifest(args.manifest)
    existing = {p.pair_id for p in manifest.pairs}
    new = [p for p in generate_pairs(manifest) if p.pair_id not in existing]
    manifest.pairs.extend(new)
    save_manifest(manifest, args.out or args.manifest)
    print(f"generated {len(new)} candidate pairs ({len(existing)} already present)")
    return 0


def cmd_calibrate_jnd(args) -> int:
    import random as _random

    manifest = load_manifest(args.manifest)
    ids = sorted(im.image_id for im in manifest.images)
    rng = _random.Random(args.seed)
    take = min(args.sample, len(ids))
    chosen = rng.sample(ids, take)
    loader = _disk_loader(manifest, args.image_root)
    images = [loader(i) for i in chosen]
    calibration = calibrate_jnd_threshold(
        images, JndConfig(), seed=args.seed, keep_per_image=not args.no_per_image
    )
    calibration.save(args.out)
    print(
        f"calibrated on {calibration.sample_size} images: "
        f"ssim_med = {calibration.ssim_med:.6f} -> {args.out}"
    )
    return 0


def cmd_filter(args) -> int:
    manifest = load_manifest(args.manifest)
    calibration = JndCalibration.load(args.calibration)
    config = FiltrationConfig(
        calibration=calibration,
        image_root=args.image_root,
        default_tau_d=args.tau_d,
        channel_mode=args.channel_mode,
    )
    filtered, report = run_filtration(manifest, config)
    save_manifest(filtered, args.out or args.manifest)
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    totals = report.totals()
    print(
        f"filtration: {totals['fine_grained']} fine-grained, "
        f"{totals['coarse_rejected']} coarse-rejected, "
        f"{totals['unnoticeable_rejected']} unnoticeable-rejected"
    )
    return 0


def cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    split = split_by_pairs(manifest, args.ratio, args.seed)
    split.save(args.out)
    print(
        f"split: {len(split.train_pair_ids)} train / {len(split.test_pair_ids)} test "
        f"(seed {split.seed}) -> {args.out}"
    )
    return 0


def cmd_synth(args) -> int:
    from .synth import build_toy_dataset

    dataset = build_toy_dataset(
        size=args.size,
        seed=args.seed,
        images_per_content=args.images_per_content,
    )
    out = Path(args.out)
    dataset.write_images(out / "images")
    save_manifest(dataset.manifest, out / "manifest.jsonl")
    print(
        f"synthetic dataset: {len(dataset.manifest.images)} images, "
        f"{len(dataset.manifest.pairs)} labeled pairs -> {out}"
    )
    return 0


def _train_configs(args):
    from .model import ModelConfig
    from .training import TrainConfig

    preset = TrainConfig.toy if args.preset == "toy" else TrainConfig.full
    file_overrides: dict = {}
    model_overrides: dict = {}
    if args.config:
        payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        file_overrides = payload.get("train", {})
        model_overrides = payload.get("model", {})
    train_config = preset(**file_overrides)
    # flags win over the config file
    for name in ("max_lr", "batch_size", "epochs", "seed"):
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            setattr(train_config, name, value)
    if args.preset == "toy":
        model_overrides.setdefault("feature_dim", 64)
        model_overrides.setdefault("head_hidden", 64)
    model_overrides["backbone_scale"] = args.preset
    if args.no_dfl:
        model_overrides["dfl_enabled"] = False
    if args.seed is not None:
        model_overrides["seed"] = args.seed
    model_config = ModelConfig(**model_overrides)
    return model_config, train_config


def cmd_train(args) -> int:
    from .training import train

    manifest = load_manifest(args.manifest)
    split = SplitSpec.load(args.split)
    model_config, train_config = _train_configs(args)
    _print_config("model config", asdict(model_config))
    _print_config("train config", asdict(train_config))
    loader = _disk_loader(manifest, args.image_root)
    result = train(
        manifest, split, model_config, train_config, args.out, image_loader=loader
    )
    print(
        f"trained {result.steps} steps; final checkpoint {result.final_checkpoint}; "
        f"loss curve {result.curve_path}"
    )
    return 0


def cmd_eval(args) -> int:
    from .evaluation import evaluate
    from .model import load_checkpoint
    from .training import TrainConfig

    manifest = load_manifest(args.manifest)
    split = SplitSpec.load(args.split)
    model, _ = load_checkpoint(args.checkpoint)
    cfg = TrainConfig.toy() if args.preset == "toy" else TrainConfig.full()
    loader = _disk_loader(manifest, args.image_root)
    report = evaluate(
        model,
        manifest,
        split,
        image_loader=loader,
        train_config=cfg,
        checkpoint_id=str(args.checkpoint),
    )
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(report.render())
    return 0


def cmd_bins(args) -> int:
    scores, mos = [], []
    with open(args.scores, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            scores.append(float(row["score"]))
            mos.append(float(row["mos"]))
    edges = [float(e) for e in args.edges.split(",")]
    report = binned_correlation(scores, mos, edges)
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(report.render())
    return 0


def cmd_consistency(args) -> int:
    manifest = load_manifest(args.manifest)
    idx = manifest._image_index()
    observations = [
        (idx[p.image_a].mos_norm, idx[p.image_b].mos_norm, p.preference)
        for p in manifest.fine_grained_pairs()
        if p.preference != "unlabeled"
    ]
    report = consistency_analysis(observations)
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(f"observations: {len(observations)}")
    print(f"overall inconsistency rate: {report.inconsistency_rate:.4f}")
    for i, rate in enumerate(report.decile_inconsistency):
        label = f"decile {i + 1}"
        print(f"{label:>10}: {'n/a' if rate is None else f'{rate:.4f}'}")
    return 0


def _load_campaign(args, manifest: DatasetManifest):
    from .annotation import (
        AnnotationCampaign,
        AnnotationStore,
        AnnotatorProfile,
        Assignment,
        CampaignConfig,
        assign_pairs,
    )

    profiles = [
        AnnotatorProfile(**entry)
        for entry in json.loads(Path(args.profiles).read_text(encoding="utf-8"))
    ]
    assignment_path = Path(args.assignment)
    fine = [p for p in manifest.fine_grained_pairs()]
    if assignment_path.exists():
        assignment = Assignment.from_json(
            assignment_path.read_text(encoding="utf-8")
        )
    else:
        assignment = assign_pairs(
            [p.pair_id for p in fine], profiles, seed=args.seed
        )
        assignment_path.write_text(assignment.to_json(), encoding="utf-8")
    store = AnnotationStore(args.log)
    config = CampaignConfig(
        revote_round=getattr(args, "revote_round", False),
        majority_mode=getattr(args, "majority_mode", False),
    )
    return AnnotationCampaign(store, assignment, profiles, fine, config)


def cmd_annotate_serve(args) -> int:
    import uvicorn

    from .server import create_app, file_image_provider

    manifest = load_manifest(args.manifest)
    campaign = _load_campaign(args, manifest)
    tokens = json.loads(Path(args.tokens).read_text(encoding="utf-8"))
    app = create_app(campaign, file_image_provider(manifest, args.image_root), tokens)
    print(f"serving annotation API on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_export(args) -> int:
    manifest = load_manifest(args.manifest)
    campaign = _load_campaign(args, manifest)
    updated, dump = campaign.export(manifest)
    save_manifest(updated, args.out_manifest or args.manifest)
    Path(args.dump).write_text(
        json.dumps(dump, indent=2, sort_keys=True), encoding="utf-8"
    )
    labeled = sum(1 for p in updated.pairs if p.preference != "unlabeled")
    print(
        f"export: {len(dump['preferences'])} preferences, "
        f"{len(dump['resolutions'])} resolutions, {labeled} labeled pairs"
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgresq",
        description="fine-grained image quality workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate (and optionally normalize) a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--validate", action="store_true", help="accepted for clarity")
    p.add_argument("--normalize", action="store_true", help="recompute mos_norm per scene")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("pairgen", help="generate candidate pairs per content group")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pairgen)

    p = sub.add_parser("calibrate-jnd", help="calibrate the indistinguishability threshold")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-root", default=".")
    p.add_argument("--sample", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-per-image", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate_jnd)

    p = sub.add_parser("filter", help="run the two-step pair filtration")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-root", default=".")
    p.add_argument("--calibration", required=True)
    p.add_argument(
        "--tau-d", type=float, default=0.1, dest="tau_d",
        help="fallback score-gap threshold for scenes that do not set tau_d",
    )
    p.add_argument("--channel-mode", choices=["luminance", "average"], default="luminance")
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("split", help="train/test split over fine-grained pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("synth", help="generate a synthetic toy dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--images-per-content", type=int, default=5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the quality model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--image-root", default=".")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=["toy", "full"], default="toy")
    p.add_argument("--config", help="JSON file with {'train': {...}, 'model': {...}}")
    p.add_argument("--no-dfl", action="store_true", help="disable the degradation branch")
    p.add_argument("--max-lr", type=float, dest="max_lr")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image-root", default=".")
    p.add_argument("--preset", choices=["toy", "full"], default="toy")
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bins", help="binned correlation report from a score CSV")
    p.add_argument("--scores", required=True, help="CSV with columns score,mos")
    p.add_argument("--edges", default="0,0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--report")
    p.set_defaults(func=cmd_bins)

    p = sub.add_parser("consistency", help="preference-vs-MOS consistency report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("annotate-serve", help="run the annotation HTTP service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-root", default=".")
    p.add_argument("--profiles", required=True, help="JSON list of annotator profiles")
    p.add_argument("--tokens", required=True, help="JSON map bearer token -> annotator_id")
    p.add_argument("--assignment", required=True, help="created if missing")
    p.add_argument("--log", required=True, help="append-only submission log")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--revote-round", action="store_true")
    p.add_argument("--majority-mode", action="store_true")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8731)
    p.set_defaults(func=cmd_annotate_serve)

    p = sub.add_parser("export", help="export annotations into the manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-manifest")
    p.add_argument("--dump", required=True)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FgresqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
