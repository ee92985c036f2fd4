"""Simulation harness: coverage tables, validity ECDFs and merging checks.

Replicate ``r`` draws all of its randomness from substreams keyed by
``(master_seed, r, purpose)``.  Replicates run in any order on any number
of workers and are merged by index, so outputs depend only on the config
and the seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .contours import (
    ContourKind,
    build_exp_closed_form_contour,
    build_large_n_contour,
    draw_reference,
    exp_full_contour,
    oracle_contour_mc,
    profile_contour_anchored,
    valid_contour_anchored,
    valid_contour_importance,
)
from .exceptions import (
    SUMMARY_FAILURES,
    ConfigError,
    DomainError,
    SimulationBudgetExceeded,
    SingularInformation,
    UnsupportedModel,
)
from .inference import level_set
from .io import git_describe, load_toml
from .models import Model, make_model, model_from_spec
from .rng import Purpose, substream
from .specfun import chisq_sf
from .summaries import combine, partition, summarize_block

KIND_NAMES = {k.value for k in ContourKind}
COVERAGE_COLUMNS = ("kind", "coordinate", "level", "coverage", "avg_length_x100", "n_used", "skipped")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of a simulation experiment."""

    name: str
    model: dict
    truth: tuple
    block_sizes: tuple
    M: int
    n_reps: int
    alphas: tuple
    contour_kinds: tuple
    master_seed: int
    output_dir: str = "results"
    n_schedule: tuple = ()
    block_weights: tuple = ()
    merge_half_width: float = 4.0
    grid_points: int = 201
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return int(sum(self.block_sizes))

    @property
    def B(self) -> int:
        return len(self.block_sizes)

    def build_model(self) -> Model:
        return model_from_spec(self.model)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("extra")
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig.from_dict(d)

    # -- construction --------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            model_spec = dict(d["model"])
            family = model_spec.pop("family")
            model = make_model(family, **model_spec)
            truth = tuple(float(v) for v in np.atleast_1d(d["truth"]))
            if "block_sizes" in d and d["block_sizes"]:
                sizes = tuple(int(s) for s in d["block_sizes"])
            else:
                n, B = int(d["n"]), int(d["B"])
                if not 1 <= B <= n:
                    raise ConfigError(f"need 1 <= B <= n, got B={B}, n={n}")
                base, extra = divmod(n, B)
                sizes = tuple([base] * (B - extra) + [base + 1] * extra)
            alphas = tuple(float(a) for a in d.get("alphas", [0.1 * i for i in range(1, 10)]))
            kinds = tuple(str(k) for k in d.get("contour_kinds", ["valid_anchored", "large_n"]))
            cfg = cls(
                name=str(d.get("name", "experiment")),
                model=model.spec(),
                truth=truth,
                block_sizes=sizes,
                M=int(d.get("M", 3000)),
                n_reps=int(d.get("n_reps", 1000)),
                alphas=tuple(round(a, 12) for a in alphas),
                contour_kinds=kinds,
                master_seed=int(d.get("master_seed", 0)),
                output_dir=str(d.get("output_dir", "results")),
                n_schedule=tuple(int(v) for v in d.get("n_schedule", ())),
                block_weights=tuple(int(v) for v in d.get("block_weights", ())),
                merge_half_width=float(d.get("merge_half_width", 4.0)),
                grid_points=int(d.get("grid_points", 201)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad config value: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        raw = load_toml(path)
        flat: dict = {}
        for key, value in raw.items():
            if key == "model":
                flat["model"] = value
            elif isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        return cls.from_dict(flat)

    def validate(self) -> None:
        model = self.build_model()
        try:
            model.check_theta(self.truth)
        except DomainError as exc:
            raise ConfigError(f"truth: {exc}") from None
        if any(s < 1 for s in self.block_sizes):
            raise ConfigError("block sizes must be positive")
        if self.M < 1 or self.n_reps < 1:
            raise ConfigError("M and n_reps must be positive")
        if not self.alphas or any(not 0 < a < 1 for a in self.alphas):
            raise ConfigError("alphas must lie in (0, 1)")
        if list(self.alphas) != sorted(self.alphas):
            raise ConfigError("alphas must be sorted ascending")
        if not self.contour_kinds:
            raise ConfigError("contour_kinds must be non-empty")
        bad = [k for k in self.contour_kinds if k not in KIND_NAMES]
        if bad:
            raise ConfigError(f"unknown contour kinds {bad}; choose from {sorted(KIND_NAMES)}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.block_weights and any(w < 1 for w in self.block_weights):
            raise ConfigError("block weights must be positive integers")


# ---------------------------------------------------------------------------
# per-replicate work
# ---------------------------------------------------------------------------

@dataclass
class ReplicateOutcome:
    index: int
    skipped: bool = False
    reason: str = ""
    values: dict = field(default_factory=dict)   # (kind, coordinate) -> contour at truth
    lengths: dict = field(default_factory=dict)  # (kind, coordinate) -> region length per alpha


def _record(out: ReplicateOutcome, key, contour, truth_point, alphas, with_length=True):
    out.values[key] = float(contour.evaluate(truth_point))
    if with_length:
        out.lengths[key] = [float(level_set(contour, a).lengths()[0]) for a in alphas]
    else:
        out.lengths[key] = [math.nan] * len(alphas)


def run_replicate(config: ExperimentConfig, r: int) -> ReplicateOutcome:
    """Simulate one dataset at the truth and evaluate every requested contour there."""
    model = config.build_model()
    truth = np.asarray(config.truth)
    seed = config.master_seed
    out = ReplicateOutcome(r)
    y = model.sample(truth, config.n, substream(seed, r, Purpose.DATA))
    blocks = partition(y, config.B, substream(seed, r, Purpose.PARTITION), sizes=config.block_sizes)
    try:
        agg = combine([summarize_block(model, b) for b in blocks])
    except SUMMARY_FAILURES + (SingularInformation,) as exc:
        out.skipped, out.reason = True, type(exc).__name__
        return out
    if not model.in_bounds(agg.theta_check):
        out.skipped, out.reason = True, "AnchorOutOfBounds"
        return out
    kinds = [ContourKind(k) for k in config.contour_kinds]
    names = model.param_names
    p = model.dim
    ref = None
    if ContourKind.VALID_ANCHORED in kinds or ContourKind.PROFILE_MARGINAL in kinds:
        try:
            ref = draw_reference(model, agg.sizes, agg.theta_check, config.M,
                                 substream(seed, r, Purpose.REFERENCE))
        except SUMMARY_FAILURES + (SimulationBudgetExceeded,) as exc:
            # an anchor the model cannot simulate from (an invalid g-and-k quantile)
            # or whose blocks almost never have a fit
            out.skipped, out.reason = True, "Anchor" + type(exc).__name__
            return out
    point = truth.reshape(1, -1) if p > 1 else truth
    joint_len = p == 1
    for kind in kinds:
        if kind == ContourKind.LARGE_N:
            c = build_large_n_contour(agg, grid=point, model=model)
            _record(out, (kind.value, "joint"), c, truth if p > 1 else truth[0], config.alphas, joint_len)
            if p > 1:
                for q in range(p):
                    cq = build_large_n_contour(agg, grid=truth[[q]], coordinate=q, model=model)
                    _record(out, (kind.value, names[q]), cq, truth[q], config.alphas)
        elif kind == ContourKind.VALID_ANCHORED:
            c = valid_contour_anchored(model, agg, grid=point, reference=ref)
            _record(out, (kind.value, "joint"), c, truth if p > 1 else truth[0], config.alphas, joint_len)
        elif kind == ContourKind.PROFILE_MARGINAL:
            for q in range(p):
                cq = profile_contour_anchored(model, agg, q, grid_q=truth[[q]], reference=ref)
                _record(out, (kind.value, names[q]), cq, truth[q], config.alphas)
        elif kind == ContourKind.VALID_IMPORTANCE:
            c = valid_contour_importance(model, agg, M=config.M, rng=substream(seed, r, Purpose.IMPORTANCE))
            _record(out, (kind.value, "joint"), c, truth if p > 1 else truth[0], config.alphas, joint_len)
        elif kind == ContourKind.EXPONENTIAL_CLOSED_FORM:
            if model.name != "exponential":
                raise UnsupportedModel("the closed-form contour exists only for the Exponential model")
            c = build_exp_closed_form_contour(agg, model=model)
            _record(out, (kind.value, "joint"), c, truth[0], config.alphas)
        elif kind == ContourKind.ORACLE_FULL_DATA:
            v = oracle_contour_mc(model, y, truth, config.M, substream(seed, r, Purpose.ORACLE))
            out.values[(kind.value, "joint")] = v
            out.lengths[(kind.value, "joint")] = [math.nan] * len(config.alphas)
    return out


def _replicate_task(args):
    config, r = args
    return run_replicate(config, r)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("DNC_IM_WORKERS")
        try:
            workers = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"DNC_IM_WORKERS must be an integer, got {env!r}") from None
    if workers < 1:
        raise ConfigError("workers must be at least 1")
    return workers


def _map_ordered(fn, items: Sequence, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def simulate_replicates(config: ExperimentConfig, workers: int | None = None) -> list[ReplicateOutcome]:
    workers = resolve_workers(workers)
    return _map_ordered(_replicate_task, [(config, r) for r in range(config.n_reps)], workers)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

@dataclass
class CoverageTable:
    """Empirical coverage (%) and mean region length x100 per (kind, coordinate, level)."""

    alphas: tuple
    rows: list                 # dicts with COVERAGE_COLUMNS
    skipped_replicates: int
    n_reps: int
    skip_reasons: dict = field(default_factory=dict)

    def cell(self, kind: str, coordinate: str, alpha: float) -> dict:
        level = _level_label(alpha)
        for row in self.rows:
            if row["kind"] == kind and row["coordinate"] == coordinate and row["level"] == level:
                return row
        raise KeyError((kind, coordinate, alpha))

    def coverage(self, kind: str, coordinate: str, alpha: float) -> float:
        return self.cell(kind, coordinate, alpha)["coverage"]

    def to_csv(self) -> str:
        lines = [",".join(COVERAGE_COLUMNS)]
        for row in self.rows:
            length = row["avg_length_x100"]
            lines.append(",".join([
                row["kind"], row["coordinate"], row["level"], f"{row['coverage']:.2f}",
                "" if math.isnan(length) else f"{length:.4f}", str(row["n_used"]), str(row["skipped"]),
            ]))
        return "\n".join(lines) + "\n"


def _level_label(alpha: float) -> str:
    return f"{100.0 * (1.0 - alpha):.6g}"


def _keys(outcomes):
    keys = []
    for o in outcomes:
        for k in o.values:
            if k not in keys:
                keys.append(k)
    return keys


def coverage_table(config: ExperimentConfig, outcomes: list[ReplicateOutcome]) -> CoverageTable:
    used = [o for o in outcomes if not o.skipped]
    skipped = len(outcomes) - len(used)
    reasons: dict = {}
    for o in outcomes:
        if o.skipped:
            reasons[o.reason] = reasons.get(o.reason, 0) + 1
    rows = []
    for key in _keys(used):
        vals = np.array([o.values[key] for o in used])
        lens = np.array([o.lengths[key] for o in used])
        for j, a in enumerate(config.alphas):
            col = lens[:, j]
            rows.append({
                "kind": key[0], "coordinate": key[1], "level": _level_label(a),
                "coverage": 100.0 * float(np.mean(vals > a)) if vals.size else math.nan,
                "avg_length_x100": 100.0 * float(np.mean(col)) if col.size and not np.all(np.isnan(col)) else math.nan,
                "n_used": len(used), "skipped": skipped,
            })
    return CoverageTable(config.alphas, rows, skipped, len(outcomes), reasons)


def run_coverage(config: ExperimentConfig, workers: int | None = None) -> CoverageTable:
    return coverage_table(config, simulate_replicates(config, workers))


def dkw_statistic(values) -> float:
    """``sup_a (ECDF(a) - a)`` over ``[0, 1]``, clipped at zero."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return math.nan
    i = np.arange(1, v.size + 1) / v.size
    return float(max(0.0, np.max(i - v)))


@dataclass
class ValidityResult:
    kind: str
    coordinate: str
    values: np.ndarray
    dkw: float

    @property
    def bound(self) -> float:
        return 1.36 / math.sqrt(self.values.size)


def validity_ecdf(outcomes: list[ReplicateOutcome]) -> list[ValidityResult]:
    used = [o for o in outcomes if not o.skipped]
    out = []
    for key in _keys(used):
        vals = np.sort([o.values[key] for o in used])
        out.append(ValidityResult(key[0], key[1], vals, dkw_statistic(vals)))
    return out


def run_validity_ecdf(config: ExperimentConfig, workers: int | None = None) -> list[ValidityResult]:
    return validity_ecdf(simulate_replicates(config, workers))


# ---------------------------------------------------------------------------
# merging of the large-n and valid contours
# ---------------------------------------------------------------------------

@dataclass
class MergeRow:
    n: int
    discrepancy_valid: float
    discrepancy_full: float
    n_used: int


def schedule_sizes(config: ExperimentConfig, n: int) -> tuple:
    weights = config.block_weights or (1,) * config.B
    total = sum(weights)
    if n % total:
        raise ConfigError(f"n={n} is not divisible by the block weight total {total}")
    return tuple(n // total * w for w in weights)


def full_data_mle(model: Model, agg) -> tuple[float, float]:
    """Full-data MLE and observed information rebuilt from block summaries."""
    ns = np.array(agg.sizes, dtype=float)
    hats = np.array([b.theta_hat[0] for b in agg.blocks])
    if model.name == "exponential":
        mle = ns.sum() / np.sum(ns / hats)
        return float(mle), float(ns.sum() / mle ** 2)
    # Gaussian with known variance: the combined estimator is the full-data mean
    return float(np.sum(ns * hats) / ns.sum()), float(agg.total_info[0, 0])


def _merge_task(args):
    config, i, n, r = args
    model = config.build_model()
    truth = np.asarray(config.truth)
    seed = config.master_seed
    sizes = schedule_sizes(config, n)
    y = model.sample(truth, n, substream(seed, i, r, Purpose.DATA))
    blocks = partition(y, len(sizes), substream(seed, i, r, Purpose.PARTITION), sizes=sizes)
    try:
        agg = combine([summarize_block(model, b) for b in blocks])
    except SUMMARY_FAILURES + (SingularInformation,):
        return None
    # local grid around the full-data MLE, which both models recover from the summaries
    center, info = full_data_mle(model, agg)
    half = config.merge_half_width / math.sqrt(info)
    lo, hi = model.bounds[0][0], model.bounds[0][1]
    grid = np.linspace(max(center - half, lo + 1e-9 * half), min(center + half, hi), config.grid_points)
    large = build_large_n_contour(agg, grid=grid, model=model).values
    valid = valid_contour_anchored(model, agg, grid=grid, M=config.M,
                                   rng=substream(seed, i, r, Purpose.REFERENCE)).values
    if model.name == "exponential":
        full = exp_full_contour([(b.n_b, float(b.theta_hat[0])) for b in agg.blocks], grid)
    else:
        full = chisq_sf(1, np.maximum(-2.0 * np.array([model.full_data_relative_loglik([g], y) for g in grid]), 0.0))
    return float(np.max(np.abs(large - valid))), float(np.max(np.abs(large - full)))


def run_merging_check(config: ExperimentConfig, workers: int | None = None) -> list[MergeRow]:
    """Average sup-distance on a local grid between the large-n contour and (a) the valid contour, (b) the exact full-data contour."""
    model = config.build_model()
    if model.name not in ("exponential", "gaussian"):
        raise UnsupportedModel("the merging check needs a model with an exact full-data contour")
    if not config.n_schedule:
        raise ConfigError("merging check needs n_schedule")
    workers = resolve_workers(workers)
    tasks = [(config, i, n, r) for i, n in enumerate(config.n_schedule) for r in range(config.n_reps)]
    results = _map_ordered(_merge_task, tasks, workers)
    rows = []
    for i, n in enumerate(config.n_schedule):
        res = [x for (c, j, _, _), x in zip(tasks, results) if j == i and x is not None]
        arr = np.array(res) if res else np.full((1, 2), math.nan)
        rows.append(MergeRow(n, float(arr[:, 0].mean()), float(arr[:, 1].mean()), len(res)))
    return rows


def merge_csv(rows: list[MergeRow]) -> str:
    lines = ["n,discrepancy_valid,discrepancy_full,n_used"]
    lines += [f"{r.n},{r.discrepancy_valid:.6f},{r.discrepancy_full:.6f},{r.n_used}" for r in rows]
    return "\n".join(lines) + "\n"


def ecdf_csvs(results: list[ValidityResult]) -> tuple[str, str]:
    summary = ["kind,coordinate,n_used,dkw_stat,dkw_bound"]
    values = ["kind,coordinate,rank,value"]
    for res in results:
        summary.append(f"{res.kind},{res.coordinate},{res.values.size},{res.dkw:.6f},{res.bound:.6f}")
        values += [f"{res.kind},{res.coordinate},{i + 1},{v:.10f}" for i, v in enumerate(res.values)]
    return "\n".join(summary) + "\n", "\n".join(values) + "\n"


def write_with_sidecar(path, text: str, config: ExperimentConfig, command: str, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    meta = {
        "command": command,
        "experiment": config.name,
        "config_sha256": config.digest(),
        "master_seed": config.master_seed,
        "git_describe": git_describe(),
        "config": config.to_dict(),
        **extra,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path
