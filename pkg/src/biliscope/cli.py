"""Command-line interface: corpus generation, single runs, datasets, eval, serving."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import classify, denoise, evaluate, phantom, pipeline
from .errors import BiliscopeError
from .raster import write_pgm


def _config_from(args) -> pipeline.PipelineConfig:
    if getattr(args, "config", None):
        return pipeline.load_config(args.config)
    return pipeline.PipelineConfig()


def cmd_phantom(args) -> int:
    base = phantom.PhantomSpec(
        duct_width_px=8,
        size=args.size,
        branch_count=args.branch_count,
        branch_width_px=args.branch_width,
        fg_intensity=args.fg,
        bg_intensity=args.bg,
        noise_sigma=args.noise_sigma,
        haze_strength=args.haze_strength,
    )
    samples = phantom.generate_corpus(args.n, base, rng_seed=args.rng_seed)
    manifest = phantom.save_corpus(samples, args.out)
    print(f"wrote {len(samples)} phantoms; manifest at {manifest}")
    return 0


def cmd_run(args) -> int:
    cfg = _config_from(args)
    raw = Path(args.image).read_bytes()
    case = pipeline.run_case(cfg, raw, case_id=Path(args.image).stem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(pipeline.IMAGE_STAGES, start=1):
        if name in case.intermediates:
            write_pgm(out / f"{i:02d}-{name}.pgm", case.intermediates[name])
    if case.mask is not None:
        write_pgm(out / "09-mask.pgm", case.mask * 255)
    if case.error is not None:
        print(f"error: {case.error}", file=sys.stderr)
        return 1
    lines = [f"{name} = {value:.6f}" for name, value
             in zip(pipeline.FEATURE_NAMES, case.features.as_array())]
    (out / "features.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_dataset(args) -> int:
    cfg = _config_from(args)
    build = pipeline.build_dataset(cfg, args.manifest, csv_path=args.out)
    print(f"wrote {build.n_total} rows to {args.out} "
          f"({build.n_excluded} degenerate, {len(build.ids)} usable)")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from(args)
    build = pipeline.dataset_from_csv(cfg, args.features)
    reports = pipeline.evaluate_all(cfg, build)
    Path(args.out).write_text(evaluate.reports_to_json(reports) + "\n")
    for report in reports:
        print(f"{report.kind}: accuracy {report.metrics.accuracy:.4f} "
              f"auc {report.auc:.4f}")
    if args.models_out:
        models_dir = Path(args.models_out)
        models_dir.mkdir(parents=True, exist_ok=True)
        bundle = pipeline.build_bundle(cfg, build)
        for kind, model in bundle.models.items():
            classify.save_model(model, models_dir / f"{kind}.model")
        print(f"wrote {len(bundle.models)} trained models to {models_dir}")
    return 0


def cmd_train_denoiser(args) -> int:
    cfg = _config_from(args)
    base = phantom.PhantomSpec(duct_width_px=8, size=args.patch_source_size)
    samples = phantom.generate_corpus(args.patch_sources, base, rng_seed=cfg.rng_seed)
    train_cfg = denoise.TrainConfig(
        noise_sigma=args.sigma,
        patch_size=args.patch_size,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        rng_seed=cfg.rng_seed,
        depth=args.depth,
        channels=args.channels,
    )
    net = denoise.train(train_cfg, [s.image for s in samples])
    Path(args.out).write_bytes(denoise.save_weights(net))
    print(f"wrote depth-{net.depth} denoiser weights to {args.out}")
    return 0


def cmd_serve(args) -> int:
    from . import service
    cfg = _config_from(args)
    service.serve(cfg, host=args.host, port=args.port,
                  storage_dir=args.storage_dir, manifest=args.manifest,
                  worker_count=args.worker_count)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biliscope",
        description="Biliary-tree MRI screening pipeline on synthetic phantoms.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a labeled phantom corpus")
    p.add_argument("--n", type=int, default=50, help="samples per class")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--noise-sigma", type=float, default=10.0)
    p.add_argument("--haze-strength", type=float, default=0.3)
    p.add_argument("--branch-count", type=int, default=6)
    p.add_argument("--branch-width", type=int, default=3)
    p.add_argument("--fg", type=int, default=230)
    p.add_argument("--bg", type=int, default=160)
    p.add_argument("--rng-seed", type=int, default=0)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("run", help="run one image through the pipeline")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--image", required=True, help="P5/P6 input image")
    p.add_argument("--out", required=True, help="directory for intermediates")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("dataset", help="build the feature CSV for a corpus")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--manifest", required=True, help="corpus manifest.csv")
    p.add_argument("--out", required=True, help="output feature CSV")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("eval", help="cross-validate models over a feature CSV")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--models-out", help="also train on all rows and save model files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train-denoiser", help="train denoiser weights on phantom patches")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--out", required=True, help="output weight file")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--sigma", type=float, default=25.0)
    p.add_argument("--patch-size", type=int, default=40)
    p.add_argument("--depth", type=int, default=17)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=3e-4,
                   help="gradient step size; large patches need small steps")
    p.add_argument("--patch-sources", type=int, default=4,
                   help="clean phantoms per class to crop patches from")
    p.add_argument("--patch-source-size", type=int, default=160,
                   help="phantom size; must exceed 4x the widest duct")
    p.set_defaults(func=cmd_train_denoiser)

    p = sub.add_parser("serve", help="start the HTTP review service")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--storage-dir", default="biliscope-data",
                   help="directory for uploads, jobs, and reviews")
    p.add_argument("--worker-count", type=int, default=2,
                   help="maximum concurrently executing jobs")
    p.add_argument("--manifest", help="corpus manifest to train startup models from")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BiliscopeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
