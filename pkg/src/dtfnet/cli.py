"""Command-line entry point: ``dtfnet {train,eval,verify,export-filters,bench}``.

Run settings come from an optional ``key = value`` config file and are
overridden by flags named after the same keys (``--base-lr 0.1``).
Exit status: 0 on success, 1 when verification or evaluation fails, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .errors import CheckpointCorrupt, ConfigError, DTFError, InvalidConfig, OutOfRange, VariantMismatch
from .training import RunConfig, bench, bench_csv, evaluate, read_config_file, train

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    for f in fields(RunConfig):
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", default=None, metavar="VALUE")


def _run_config(args) -> RunConfig:
    items = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        value = getattr(args, f"cfg_{f.name}")
        if value is not None:
            items[f.name] = value
    return RunConfig.from_items(items)


def _ints(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {raw!r}") from exc


def cmd_train(args) -> int:
    cfg = _run_config(args)
    result = train(cfg)
    print(f"val_top1={result.val_top1!r}")
    print(f"checkpoint={result.checkpoint}")
    print(f"metrics={result.metrics_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        top1 = evaluate(args.checkpoint, per_class=args.per_class, seed=args.seed)
    except CheckpointCorrupt as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"top1={top1!r}")
    if args.min_top1 is not None and top1 < args.min_top1:
        print(f"FAIL top1 {top1:.4f} below required {args.min_top1:.4f}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_verification

    results = run_verification(seed=args.seed, gradients=not args.skip_gradients)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_export(args) -> int:
    from .export import export_filters

    locations = None
    if args.loc:
        locations = []
        for raw in args.loc:
            yx = _ints(raw)
            if len(yx) != 2:
                raise ConfigError(f"--loc expects y,x, got {raw!r}")
            locations.append(yx)
    size = None
    if args.probe_size:
        size = _ints(args.probe_size)
        if len(size) != 2:
            raise ConfigError(f"--probe-size expects H,W, got {args.probe_size!r}")
    try:
        out = export_filters(args.checkpoint, args.probe_seed, locations, out_dir=args.out_dir,
                             probe_class=args.probe_class, probe_size=size)
    except CheckpointCorrupt as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for loc, path in out.paths.items():
        print(f"{loc[0]},{loc[1]} {path}")
    locs = list(out.filters)
    for i, a in enumerate(locs):
        for b in locs[i + 1:]:
            print(f"distance {a} {b} {out.distance(a, b)!r}")
    return EXIT_OK


def cmd_bench(args) -> int:
    base = _run_config(args)
    blocks = (None,) if args.sweep_blocks is None else _ints(args.sweep_blocks)
    rows = bench(base, variants=tuple(args.variants.split(",")), blocks=blocks,
                 lengths=_ints(args.lengths), seeds=_ints(args.seeds))
    text = bench_csv(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtfnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and write metrics.csv and model.ckpt")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="top-1 accuracy of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--per-class", type=int, default=None, help="fresh split size (default: the run's val split)")
    p.add_argument("--seed", type=int, default=None, help="seed of a fresh split")
    p.add_argument("--min-top1", type=float, default=None, help="exit 1 below this accuracy")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the property checks of every module")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-gradients", action="store_true", help="leave out the slower gradient checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export-filters", help="dump per-location dynamic filters for a probe clip")
    p.add_argument("checkpoint")
    p.add_argument("--probe-seed", type=int, default=0)
    p.add_argument("--probe-class", type=int, default=0)
    p.add_argument("--probe-size", default=None, metavar="H,W")
    p.add_argument("--loc", action="append", metavar="Y,X", help="location to export (repeatable)")
    p.add_argument("--out-dir", default="filters")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bench", help="variant / clip-length sweep, CSV variant,blocks,T,top1")
    _add_run_flags(p)
    p.add_argument("--variants", default="dtf_1d,dtf")
    p.add_argument("--lengths", default="8,16,32")
    p.add_argument("--sweep-blocks", default=None, help="comma-separated counts of leading stages with the variant")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", default=None, help="also write the CSV here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, InvalidConfig, VariantMismatch, OutOfRange) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DTFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
