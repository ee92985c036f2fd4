"""``dnc-im`` command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .contours import (
    DEFAULT_M,
    ContourKind,
    build_exp_closed_form_contour,
    build_large_n_contour,
    default_grid,
    profile_contour_anchored,
    valid_contour_anchored,
    valid_contour_importance,
)
from .exceptions import (
    ConfigError,
    DomainError,
    NonMonotoneQuantile,
    NotPositiveDefinite,
    OptimFailure,
    QuadratureFailure,
    SimulationBudgetExceeded,
    SingularInformation,
    UnsupportedModel,
)
from .experiments import (
    ExperimentConfig,
    ecdf_csvs,
    merge_csv,
    resolve_workers,
    run_coverage,
    run_merging_check,
    run_validity_ecdf,
    write_with_sidecar,
)
from .inference import level_set
from .models import make_model
from .rng import Purpose, substream
from .summaries import combine, partition, summarize_blocks

log = logging.getLogger("dncim")

NUMERICAL = (NonMonotoneQuantile, NotPositiveDefinite, OptimFailure, QuadratureFailure,
             SimulationBudgetExceeded, SingularInformation)
EXIT_CONFIG, EXIT_NUMERICAL = 2, 3


def _parse_options(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"model option {item!r} must look like key=value")
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out


def _model_from_args(args):
    if args.model:
        return make_model(args.model, **_parse_options(args.model_option))
    if args.config:
        return ExperimentConfig.from_toml(args.config).build_model()
    raise ConfigError("specify --model FAMILY or --config FILE")


def _output_dir(args) -> Path:
    out = Path(args.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError(f"'{args.command}' needs --config FILE")
    cfg = ExperimentConfig.from_toml(args.config)
    changes = {"master_seed": args.seed}
    if getattr(args, "n_reps", None):
        changes["n_reps"] = args.n_reps
    return cfg.replace(**changes)


# -- subcommands --------------------------------------------------------------

def cmd_summarize(args) -> None:
    model = _model_from_args(args)
    if not args.input:
        raise ConfigError("summarize needs --input FILE [FILE ...]")
    if len(args.input) == 1 and args.blocks > 1:
        y = io.read_dataset(args.input[0])
        blocks = partition(y, args.blocks, substream(args.seed or 0, 0, Purpose.PARTITION))
    else:
        blocks = [io.read_dataset(p) for p in args.input]
    summaries = summarize_blocks(model, blocks, workers=resolve_workers(args.workers))
    out = _output_dir(args)
    for b, s in enumerate(summaries):
        path = out / f"block_{b:03d}.json"
        io.write_block_summary(path, model, s)
        print(path)


def cmd_combine(args) -> None:
    if not args.input:
        raise ConfigError("combine needs --input SUMMARY.json [...]")
    pairs = [io.read_block_summary(p) for p in args.input]
    model = pairs[0][0]
    if any(m != model for m, _ in pairs):
        raise ConfigError("block summaries come from different models")
    agg = combine([s for _, s in pairs])
    path = _output_dir(args) / "aggregate.json"
    io.write_aggregate(path, model, agg)
    print(path)


def cmd_contour(args) -> None:
    if not args.input or len(args.input) != 1:
        raise ConfigError("contour needs exactly one --input aggregate.json")
    model, agg = io.read_aggregate(args.input[0])
    kind = ContourKind(args.kind)
    seed = args.seed if args.seed is not None else 0
    rng = substream(seed, 0, Purpose.REFERENCE)
    coord = None
    if args.coordinate is not None:
        if args.coordinate not in model.param_names:
            raise ConfigError(f"unknown coordinate {args.coordinate!r}; choose from {model.param_names}")
        coord = model.param_names.index(args.coordinate)
    M = args.M or DEFAULT_M
    grid = default_grid(agg, coord, model, n_points=args.grid_points) if args.grid_points else None
    if kind == ContourKind.LARGE_N:
        c = build_large_n_contour(agg, grid=grid, coordinate=coord, model=model)
    elif kind == ContourKind.VALID_ANCHORED:
        if coord is None:
            c = valid_contour_anchored(model, agg, grid=grid, M=M, rng=rng, seed=seed)
        else:
            c = profile_contour_anchored(model, agg, coord, grid_q=grid, M=M, rng=rng, seed=seed)
    elif kind == ContourKind.PROFILE_MARGINAL:
        if coord is None:
            raise ConfigError("profile_marginal needs --coordinate")
        c = profile_contour_anchored(model, agg, coord, grid_q=grid, M=M, rng=rng, seed=seed)
    elif kind == ContourKind.VALID_IMPORTANCE:
        c = valid_contour_importance(model, agg, grid=grid, M=M, rng=substream(seed, 0, Purpose.IMPORTANCE))
    elif kind == ContourKind.EXPONENTIAL_CLOSED_FORM:
        c = build_exp_closed_form_contour(agg, grid=grid, model=model)
    else:
        raise ConfigError(f"contour kind {kind.value!r} needs raw data; use the experiment commands")
    path = _output_dir(args) / f"contour_{kind.value}{'' if coord is None else '_' + args.coordinate}.csv"
    io.write_contour(path, c, model.param_names, extra={"model": model.spec()})
    print(path)


def cmd_ci(args) -> None:
    if not args.input or len(args.input) != 1:
        raise ConfigError("ci needs exactly one --input contour.csv")
    if not args.alpha:
        raise ConfigError("ci needs --alpha A [A ...]")
    contour = io.read_contour(args.input[0])
    names = contour.meta.get("param_names") or [f"theta{j}" for j in range(contour.dim)]
    regions = [level_set(contour, a) for a in args.alpha]
    rows = io.region_rows(regions, names)
    path = _output_dir(args) / "region.json"
    io.write_regions(path, rows)
    print(json.dumps(rows, indent=2))


def cmd_coverage(args) -> None:
    cfg = _load_config(args)
    table = run_coverage(cfg, workers=resolve_workers(args.workers))
    path = Path(args.output or cfg.output_dir) / f"{cfg.name}_coverage.csv"
    write_with_sidecar(path, table.to_csv(), cfg, "coverage", skipped_replicates=table.skipped_replicates,
                       skip_reasons=table.skip_reasons)
    print(path)


def cmd_ecdf(args) -> None:
    cfg = _load_config(args)
    results = run_validity_ecdf(cfg, workers=resolve_workers(args.workers))
    summary, values = ecdf_csvs(results)
    out = Path(args.output or cfg.output_dir)
    write_with_sidecar(out / f"{cfg.name}_ecdf_values.csv", values, cfg, "ecdf")
    path = write_with_sidecar(out / f"{cfg.name}_ecdf_summary.csv", summary, cfg, "ecdf")
    print(path)


def cmd_merge(args) -> None:
    cfg = _load_config(args)
    rows = run_merging_check(cfg, workers=resolve_workers(args.workers))
    path = write_with_sidecar(Path(args.output or cfg.output_dir) / f"{cfg.name}_merge.csv", merge_csv(rows),
                              cfg, "merge")
    print(path)


COMMANDS = {
    "summarize": cmd_summarize,
    "combine": cmd_combine,
    "contour": cmd_contour,
    "ci": cmd_ci,
    "coverage": cmd_coverage,
    "ecdf": cmd_ecdf,
    "merge": cmd_merge,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnc-im", description="Valid divide-and-conquer possibilistic inference.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="TOML experiment config")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes (default: $DNC_IM_WORKERS or 1)")
    p.add_argument("--output", help="output directory")
    p.add_argument("--input", nargs="+", help="input file(s)")
    p.add_argument("--model", help="model family: gaussian, exponential, gandk, stable")
    p.add_argument("--model-option", action="append", metavar="KEY=VALUE", help="model constructor option")
    p.add_argument("--blocks", type=int, default=1, help="split a single input file into this many blocks")
    p.add_argument("--kind", default=ContourKind.VALID_ANCHORED.value,
                   choices=[k.value for k in ContourKind], help="contour kind")
    p.add_argument("--coordinate", help="parameter name for a marginal contour")
    p.add_argument("--M", type=int, help="Monte Carlo size for validification")
    p.add_argument("--grid-points", type=int, help="grid points per coordinate")
    p.add_argument("--alpha", type=float, nargs="+", help="levels for 'ci'")
    p.add_argument("--n-reps", type=int, help="override the number of replicates")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except NUMERICAL as exc:
        print(f"dnc-im: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, DomainError, UnsupportedModel, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"dnc-im: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
