"""Command-line entry point: ``umle train | enhance | evaluate | ablate | params | fps``.

Exit codes: 0 success, 2 configuration / input error, 3 non-finite gradient.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from umle.config import ABLATIONS, TrainConfig, format_config, load_config
from umle.data import load_unpaired
from umle.errors import NonFiniteGradient, UMLEError
from umle.evaluation import condition_label, enhance_dir, score_dir, write_rows
from umle.filters import dump_kernel
from umle.metrics import PristineModel, default_pristine, measure_fps
from umle.networks import count_params, format_param_table, generator_param_count
from umle.training import build_model, load_generator, train

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _resolve(args) -> TrainConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else TrainConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    print("# resolved config")
    print(format_config(cfg))
    return cfg


def cmd_train(args) -> int:
    cfg = _resolve(args)
    if args.iterations is not None:
        cfg = cfg.with_overrides(iterations=args.iterations)
    data_root = args.data or cfg.data_root
    if not data_root:
        raise UMLEError("no dataset: set data_root in the config or pass --data")
    low, normal = load_unpaired(data_root, (cfg.resolution, cfg.resolution), cfg.workers)
    out = Path(args.output or cfg.output_dir)

    def progress(row):
        if row.iter % max(1, cfg.iterations // 20) == 0:
            print(f"iter {row.iter:6d}  total_g {row.total_g:.4f}  adv_d {row.adv_d:.4f}  {row.wall_ms:.0f} ms")

    train(cfg, low, normal, output_dir=out, resume_from=args.resume,
          allow_mismatch=args.allow_config_mismatch, progress=progress)
    print(f"wrote {out / 'final.npz'} and {out / 'loss_trace.csv'}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    if not Path(args.checkpoint).is_file():
        print(f"error: checkpoint {args.checkpoint} not found", file=sys.stderr)
        return EXIT_CONFIG
    model = load_generator(args.checkpoint)
    if args.seed is not None:
        print(f"# seed {args.seed} (enhancement is deterministic; seed unused)")
    written = enhance_dir(model, args.input_dir, args.output_dir)
    print(f"wrote {len(written)} images to {args.output_dir}")
    return EXIT_OK


def _pristine(path):
    return PristineModel.load(path) if path else default_pristine()


def cmd_evaluate(args) -> int:
    if args.seed is not None:
        print(f"# seed {args.seed} (scoring is deterministic; seed unused)")
    size = (args.resize, args.resize) if args.resize else None
    rows = score_dir(args.input_dir, _pristine(args.pristine), size)
    out = Path(args.output) if args.output else None
    if out:
        write_rows(rows, out, ["image", "niqe", "entropy"])
    print("image,niqe,entropy")
    for r in rows:
        print(f"{r['image']},{r['niqe']:.4f},{r['entropy']:.4f}")
    return EXIT_OK


def run_ablation(cfg: TrainConfig, data_root, output_dir, pristine=None) -> dict:
    """Train with ``cfg`` and score the enhanced low-light set; returns one table row."""
    low, normal = load_unpaired(data_root, (cfg.resolution, cfg.resolution), cfg.workers)
    out = Path(output_dir)
    train(cfg, low, normal, output_dir=out)
    model = load_generator(out / "final.npz")
    size = (cfg.eval_resolution, cfg.eval_resolution)
    enhance_dir(model, Path(data_root) / "low", out / "enhanced", size=size, report=None)
    mean = score_dir(out / "enhanced", pristine)[-1]
    return {"condition": condition_label(cfg.ablation), "niqe": mean["niqe"], "entropy": mean["entropy"]}


def cmd_ablate(args) -> int:
    names = [n.strip().upper() for n in args.ablation_name.split(",") if n.strip() and n.strip().lower() != "default"]
    cfg = load_config(args.config).with_overrides(ablation=frozenset(names))
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    if args.iterations is not None:
        cfg = cfg.with_overrides(iterations=args.iterations)
    print("# resolved config")
    print(format_config(cfg))
    data_root = args.data or cfg.data_root
    if not data_root:
        raise UMLEError("no dataset: set data_root in the config or pass --data")
    tag = "_".join(sorted(names)).lower() or "default"
    out = Path(args.output_dir or Path(cfg.output_dir) / f"ablate_{tag}")
    row = run_ablation(cfg, data_root, out, _pristine(args.pristine))
    print("condition,niqe,entropy")
    print(f"\"{row['condition']}\",{row['niqe']:.4f},{row['entropy']:.4f}")
    csv_path = Path(args.csv) if args.csv else out / "ablation.csv"
    write_rows([row], csv_path, ["condition", "niqe", "entropy"])
    return EXIT_OK


def cmd_params(args) -> int:
    cfg = _resolve(args)
    model = build_model(cfg)
    print(format_param_table(count_params(model)))
    for d in ("LN", "NL"):
        print(f"generator {d[0]}->{d[1]}: {generator_param_count(model, d):,}")
    return EXIT_OK


def cmd_fps(args) -> int:
    cfg = _resolve(args)
    model = load_generator(args.checkpoint) if args.checkpoint else build_model(cfg).eval()
    rep = measure_fps(model, args.n_images, args.resolution or cfg.resolution)
    print(f"fps {rep.mean:.2f} +/- {rep.std:.2f} (cv {rep.cv:.3f}) over {len(rep.repeats)} repeats")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="umle", description=__doc__.splitlines()[0])
    parser.add_argument("--dump-kernel", metavar="PATH", help="write the Gaussian low-pass kernel as CSV and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="flat key = value run config")
        p.add_argument("--seed", type=int, help="override the configured seed")

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data", help="dataset root containing low/ and normal/")
    p.add_argument("--output", help="output directory (default: output_dir from config)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--allow-config-mismatch", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="apply G_{L->N} to a directory of images")
    common(p, config=False)
    p.add_argument("checkpoint")
    p.add_argument("input_dir")
    p.add_argument("output_dir")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="NIQE and entropy per image")
    common(p, config=False)
    p.add_argument("input_dir")
    p.add_argument("--pristine", help="pristine model .npz (default: the bundled one)")
    p.add_argument("--output", help="CSV path")
    p.add_argument("--resize", type=int, help="bilinear resize to NxN before scoring (NIQE needs >= 96)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help=f"train with toggles ({', '.join(ABLATIONS)}) and evaluate")
    p.add_argument("config")
    p.add_argument("ablation_name", help="comma-separated toggles, or 'default'")
    p.add_argument("--seed", type=int)
    p.add_argument("--data")
    p.add_argument("--iterations", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--csv")
    p.add_argument("--pristine")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("params", help="parameter count table")
    common(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("fps", help="generator throughput")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--n-images", type=int, default=20)
    p.add_argument("--resolution", type=int)
    p.set_defaults(func=cmd_fps)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.dump_kernel:
        dump_kernel(args.dump_kernel)
        print(f"wrote kernel to {args.dump_kernel}")
        if args.command is None:
            return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except NonFiniteGradient as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except UMLEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
