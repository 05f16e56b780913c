"""Command-line entry point.

    ledf classify|ablate|fusion|attention|rewire|oversmooth|overhead|export

Every command writes a report directory of CSV tables, figures, and a
config.json whose hash is recomputable from the embedded config. Exit
code 0 means every sub-run finished; any failure exits 1 with the error
on stderr. LEDF_WORKERS caps parallel training runs, LEDF_DATA points
at the dataset root when --data is not given.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import experiments as ex
from .reports import write_bundle
from .rewire import REWIRE_MODES
from .training import MAX_EPOCHS, PATIENCE


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}")


def _sweep_arg(text: str) -> tuple[str, list[str]]:
    param, _, values = text.partition("=")
    if not values:
        raise argparse.ArgumentTypeError(
            "expected PARAM=v1,v2,... for --sweep")
    return param, [v for v in values.split(",") if v]


def _collect(items: list[str] | None) -> list[str]:
    """Flatten repeatable, comma-separated name options.

    SBM descriptors contain commas of their own, so an item starting
    with ``sbm`` stays whole; repeat the option to pass several.
    """
    out = []
    for item in items or []:
        if item.startswith("sbm"):
            out.append(item)
        else:
            out += [part for part in item.split(",") if part]
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ledf",
        description="Graph learning experiments: training, rewiring, "
                    "depth sweeps, and report generation.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dataset", action="append", metavar="NAME",
                        help="dataset directory name or sbm:... descriptor; "
                             "repeatable, comma separated")
    common.add_argument("--data", default=None, metavar="DIR",
                        help="dataset root (default: $LEDF_DATA or ./data)")
    common.add_argument("--out", default="reports", metavar="DIR",
                        help="report output root (default: reports)")
    common.add_argument("--seeds", type=_int_list, default=None,
                        metavar="a,b,c", help="seeds (default: 0,1,2,3,4)")
    common.add_argument("--workers", type=int, default=None,
                        help="parallel runs (default: $LEDF_WORKERS or 1)")
    common.add_argument("--max-epochs", type=int, default=MAX_EPOCHS)
    common.add_argument("--patience", type=int, default=PATIENCE)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common],
                       help="baseline vs full model accuracy table")
    p.add_argument("--backbone", action="append", choices=("mlp", "gcn"))
    p.add_argument("--sweep", type=_sweep_arg, default=None,
                   metavar="PARAM=v1,v2", help="vary one preset field "
                   "(Q, k, ...) instead of the plain table")

    p = sub.add_parser("ablate", parents=[common],
                       help="full model vs reduced variants")
    p.add_argument("--backbone", action="append", choices=("mlp", "gcn"))

    p = sub.add_parser("fusion", parents=[common],
                       help="layer fusion vs pooling baselines")
    p.add_argument("--backbone", action="append", choices=("mlp", "gcn"))

    p = sub.add_parser("attention", parents=[common],
                       help="per-layer fusion attention of each topology channel")
    p.add_argument("--backbone", choices=("mlp", "gcn"), default="mlp")
    p.add_argument("--topology", action="append",
                   choices=("original-only", "reconstructed-only"),
                   help="default: both")

    p = sub.add_parser("rewire", parents=[common],
                       help="topology reconstruction benchmark or one pass")
    p.add_argument("--k", type=int, default=None,
                   help="edges added per node (default: dataset preset)")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--metric", choices=("lsc", "cosine"), default=None,
                   help="with --mode: run one pass and save the graph")
    p.add_argument("--mode", choices=REWIRE_MODES, default=None)

    p = sub.add_parser("oversmooth", parents=[common],
                       help="accuracy vs propagation depth")
    p.add_argument("--l-max", type=int, default=10)

    p = sub.add_parser("overhead", parents=[common],
                       help="epoch-time ratio of full model vs backbone")
    p.add_argument("--backbone", choices=("mlp", "gcn"), default="gcn")
    p.add_argument("--epochs", type=int, default=50)

    p = sub.add_parser("export", parents=[common],
                       help="write final logits and labels per node")
    p.add_argument("--backbone", choices=("mlp", "gcn"), default="gcn")
    return parser


def _context(args) -> ex.RunContext:
    data = args.data or os.environ.get("LEDF_DATA") or "data"
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("LEDF_WORKERS", "1"))
    seeds = args.seeds if args.seeds else ex.DEFAULT_SEEDS
    return ex.RunContext(
        data_root=Path(data), seeds=seeds, workers=max(1, workers),
        max_epochs=args.max_epochs, patience=args.patience,
        log_root=Path(args.out) / args.command / "runs")


def _datasets(args) -> list[str]:
    names = _collect(args.dataset)
    if not names:
        raise ValueError("at least one --dataset is required")
    return names


def _backbones(args) -> list[str]:
    return _collect(args.backbone) or ["mlp", "gcn"]


def dispatch(args) -> "ex.ReportBundle":
    ctx = _context(args)
    if args.command == "classify":
        return ex.run_classify(ctx, _datasets(args), _backbones(args),
                               sweep=args.sweep)
    if args.command == "ablate":
        return ex.run_ablation(ctx, _datasets(args), _backbones(args))
    if args.command == "fusion":
        return ex.run_fusion(ctx, _datasets(args), _backbones(args))
    if args.command == "attention":
        topologies = _collect(args.topology) or ["original-only",
                                                 "reconstructed-only"]
        return ex.run_attention(ctx, _datasets(args), args.backbone,
                                topologies)
    if args.command == "rewire":
        if (args.metric is None) != (args.mode is None):
            raise ValueError("--metric and --mode must be given together")
        if args.metric is not None:
            names = _datasets(args)
            if len(names) != 1:
                raise ValueError("single-pass rewire takes one --dataset")
            return ex.run_rewire_single(ctx, names[0], args.metric,
                                        args.mode, args.k, args.gamma,
                                        args.out)
        return ex.run_rewire(ctx, _datasets(args), args.k, args.gamma)
    if args.command == "oversmooth":
        return ex.run_oversmooth(ctx, _datasets(args), args.l_max)
    if args.command == "overhead":
        return ex.run_overhead(ctx, _datasets(args), args.backbone,
                               args.epochs)
    if args.command == "export":
        names = _datasets(args)
        if len(names) != 1:
            raise ValueError("export takes one --dataset")
        return ex.run_export(ctx, names[0], args.backbone)
    raise ValueError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        bundle = dispatch(args)
        written = write_bundle(bundle, args.out)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name in sorted(written):
        print(f"wrote {written[name]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
