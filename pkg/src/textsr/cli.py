"""Command-line entry point: the full pipeline as subcommands.

Exit codes: 0 success, 1 runtime failure (one machine-parsable error line on
stderr), 2 usage error (argparse). All randomness is seeded from the config,
so re-running a subcommand with the same config reproduces its outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import TrainConfig, apply_overrides, load_config
from .corpus import CorpusConfig, build_dataset, load_image, load_manifest, save_image
from .errors import TextsrError


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


def _build_config(args) -> TrainConfig:
    config = load_config(args.config) if args.config else TrainConfig()
    config = apply_overrides(config, args.set or [])
    config.validate()
    return config


def _load_manifest(config: TrainConfig):
    return load_manifest(config.data.root)


def _corpus_config(config: TrainConfig) -> CorpusConfig:
    return CorpusConfig(
        root=config.data.root,
        train=config.data.train,
        val=config.data.val,
        test=config.data.test,
        seed=config.data.seed,
        image_size=config.model.image_size,
    )


def cmd_gen_data(args) -> int:
    config = _build_config(args)
    manifest = build_dataset(_corpus_config(config))
    counts = {split: len(manifest.split(split)) for split in ("train", "val", "test")}
    _emit(args, {"root": str(manifest.root), "counts": counts},
          f"dataset at {manifest.root} " +
          " ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_pretrain(args) -> int:
    from .trainer import pretrain_encoders

    config = _build_config(args)
    path = pretrain_encoders(config, _load_manifest(config))
    _emit(args, {"checkpoint": str(path)}, f"encoders at {path}")
    return 0


def cmd_train(args) -> int:
    from .trainer import train_tgsr

    config = _build_config(args)
    encoders = Path(args.encoders) if args.encoders else config.work_dir / "encoders"
    path = train_tgsr(config, _load_manifest(config), encoders)
    _emit(args, {"checkpoint": str(path)}, f"model at {path}")
    return 0


def cmd_eval(args) -> int:
    from .evaluator import evaluate
    from .trainer import load_bundle

    config = _build_config(args)
    bundle = load_bundle(args.checkpoint)
    out_dir = Path(args.out) if args.out else config.work_dir / "eval"
    report = evaluate(bundle, _load_manifest(config), split=args.split,
                      limit=args.limit, out_dir=out_dir)
    _emit(args, {"out": str(out_dir), "aggregates": report.aggregates},
          " ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                   for k, v in sorted(report.aggregates.items())))
    return 0


def cmd_infer(args) -> int:
    from .trainer import load_bundle

    bundle = load_bundle(args.checkpoint)
    lr = load_image(args.image)
    result = bundle.super_resolve(lr, args.caption)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_image(result.coarse, out_dir / "coarse.png")
    save_image(result.fine, out_dir / "fine.png")
    written = ["coarse.png", "fine.png"]
    if result.attention is not None:
        for i, (word, grid) in enumerate(zip(result.words, result.attention)):
            lo, hi = float(grid.min()), float(grid.max())
            scaled = (grid - lo) / (hi - lo) if hi - lo > 1e-12 else np.zeros_like(grid)
            name = f"attn_{i:02d}_{word}.png"
            save_image(np.repeat(scaled[None], 3, axis=0), out_dir / name)
            written.append(name)
    _emit(args, {"out": str(out_dir), "files": written},
          f"wrote {', '.join(written)} to {out_dir}")
    return 0


def cmd_probe(args) -> int:
    from .evaluator import probe_suite
    from .trainer import load_bundle

    config = _build_config(args)
    bundle = load_bundle(args.checkpoint)
    outcome = probe_suite(bundle, _load_manifest(config), count=args.count,
                          seed=args.seed)
    _emit(args, {"rate": outcome["rate"], "count": outcome["count"]},
          f"flip rate {outcome['rate']:.2f} over {outcome['count']} probes")
    return 0


def cmd_serve(args) -> int:
    from .service import serve
    from .trainer import load_bundle

    bundle = load_bundle(args.checkpoint)
    serve(bundle, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textsr",
                                     description="text-guided super-resolution")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (dotted path)")
        p.add_argument("--json", action="store_true",
                       help="emit machine-readable output")
        return p

    common(sub.add_parser("gen-data", help="render the synthetic corpus"))
    common(sub.add_parser("pretrain", help="train the matching encoders"))

    p = common(sub.add_parser("train", help="train the SR model"))
    p.add_argument("--encoders", help="encoder checkpoint (default: work_dir/encoders)")

    p = common(sub.add_parser("eval", help="score a checkpoint over a split"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--limit", type=int)
    p.add_argument("--out", help="report directory (default: work_dir/eval)")

    p = common(sub.add_parser("infer", help="super-resolve one image"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--caption", required=True)
    p.add_argument("--out", default="out")

    p = common(sub.add_parser("probe", help="run caption-edit probes"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)

    p = common(sub.add_parser("serve", help="run the inference service"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "probe": cmd_probe,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except TextsrError as exc:
        print(json.dumps({"error_code": exc.code, "message": str(exc)}),
              file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error_code": "not_found", "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
