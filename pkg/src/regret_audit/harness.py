"""Experiment orchestration: single audits, hyperparameter sweeps, workers.

Every method inside one audit sees the same valuation profiles (streams are
keyed by sample index only), so cross-method orderings hold per sample
without statistical noise. Samples are independent and may be fanned out to
a process pool; records are assembled in (sample, bidder, method) order, so
parallel and serial runs produce identical reports up to wall-clock fields.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Union

from concurrent.futures import ProcessPoolExecutor

from . import rng
from .errors import InvalidConfigError, MechanismLoadError
from .estimators import (
    DEFAULT_EVAL_BUDGET,
    METHOD_EXHAUSTIVE,
    METHOD_GUIDED,
    METHOD_ITEM_WISE,
    METHOD_LOWER_BOUND,
    METHOD_PGA,
    GridSpec,
    exhaustive_regret,
    item_wise_regret,
    lower_bound_regret,
)
from .mechanisms import (
    BUILTIN_MECHANISMS,
    AuctionSetting,
    Mechanism,
    NeuralMechanismSpec,
    load_neural_mechanism,
    read_neural_spec,
)
from .optimizer import PgaConfig, PortfolioConfig, guided_refinement, random_restart_pga
from .report import AuditRecord, AuditReport, compute_method_means, write_report
from .sampling import ValuationDistribution, sample_valuations

THREADS_ENV_VAR = "REGRET_AUDIT_THREADS"

#: methods run_audit can execute, in canonical record order
RUN_METHODS = (METHOD_EXHAUSTIVE, METHOD_LOWER_BOUND, METHOD_ITEM_WISE,
               METHOD_PGA, METHOD_GUIDED)

SWEEP_CSV_COLUMNS = ("L", "R", "mean_regret", "mech_evals", "gradient_steps", "wall_seconds")

MechanismSource = Union[str, NeuralMechanismSpec]


@dataclass
class AuditRunConfig:
    """Everything one audit needs; fully determines the report modulo timing."""

    setting: AuctionSetting
    mechanism: MechanismSource
    distribution: ValuationDistribution
    grid: GridSpec
    methods: tuple
    pga: PgaConfig
    portfolio: PortfolioConfig
    samples: int
    seed: int
    out: Optional[str] = None
    guided_grid: Optional[GridSpec] = None
    max_grid_evals: int = DEFAULT_EVAL_BUDGET

    def __post_init__(self):
        if self.samples < 1:
            raise InvalidConfigError(f"samples must be >= 1, got {self.samples}")
        if not self.methods:
            raise InvalidConfigError("methods must be nonempty")
        unknown = set(self.methods) - set(RUN_METHODS)
        if unknown:
            raise InvalidConfigError(
                f"unknown methods {sorted(unknown)}; expected a subset of {RUN_METHODS}"
            )
        # canonical order makes record layout independent of input order
        self.methods = tuple(m for m in RUN_METHODS if m in set(self.methods))


def resolve_mechanism(source: MechanismSource, setting: AuctionSetting) -> Mechanism:
    """Build the subject mechanism from a builtin name, spec file, or spec."""
    if isinstance(source, NeuralMechanismSpec):
        spec = source
    elif source in BUILTIN_MECHANISMS:
        return BUILTIN_MECHANISMS[source](setting)
    elif isinstance(source, str):
        spec = read_neural_spec(source)
    else:
        raise MechanismLoadError(f"cannot resolve mechanism from {source!r}")
    if spec.setting != setting:
        raise MechanismLoadError(
            f"mechanism setting {spec.setting.n}x{spec.setting.m} does not match "
            f"configured {setting.n}x{setting.m}"
        )
    return load_neural_mechanism(spec)


def config_echo(cfg: AuditRunConfig) -> dict:
    """JSON-able echo of the configuration for the report header."""
    mech = cfg.mechanism
    mech_desc = mech if isinstance(mech, str) else f"neural:{mech.setting.n}x{mech.setting.m}"
    dist = cfg.distribution
    echo = {
        "setting": {"n": cfg.setting.n, "m": cfg.setting.m},
        "mechanism": mech_desc,
        "distribution": {
            "kind": dist.kind,
            "x_contexts": list(dist.x_contexts) if dist.x_contexts else None,
            "y_contexts": list(dist.y_contexts) if dist.y_contexts else None,
            "std": dist.std,
        },
        "grid": {"q": cfg.grid.q, "style": cfg.grid.style},
        "guided_grid": None if cfg.guided_grid is None
        else {"q": cfg.guided_grid.q, "style": cfg.guided_grid.style},
        "methods": list(cfg.methods),
        "pga": {"gamma": cfg.pga.gamma, "L": cfg.pga.big_l, "R": cfg.pga.big_r},
        "portfolio": {
            "k": cfg.portfolio.k,
            "sigma_opt": cfg.portfolio.sigma_opt,
            "sigma_truth": cfg.portfolio.sigma_truth,
            "refine_gamma": cfg.portfolio.refine.gamma,
            "refine_R": cfg.portfolio.refine.big_r,
        },
        "samples": cfg.samples,
        "seed": cfg.seed,
        "max_grid_evals": cfg.max_grid_evals,
    }
    return echo


def _estimate_one(mech: Mechanism, cfg: AuditRunConfig, profile, sample: int,
                  bidder: int, method: str):
    if method == METHOD_EXHAUSTIVE:
        return exhaustive_regret(mech, profile, bidder, cfg.grid, max_evals=cfg.max_grid_evals)
    if method == METHOD_LOWER_BOUND:
        return lower_bound_regret(mech, profile, bidder, cfg.grid)
    if method == METHOD_ITEM_WISE:
        return item_wise_regret(mech, profile, bidder, cfg.grid)
    search_seed = rng.derive_seed(cfg.seed, rng.STREAM_SEARCH, sample, bidder)
    if method == METHOD_PGA:
        return random_restart_pga(mech, profile, bidder, cfg.pga, search_seed)
    grid = cfg.guided_grid if cfg.guided_grid is not None else cfg.grid
    return guided_refinement(mech, profile, bidder, grid, cfg.portfolio, search_seed)


def _sample_records(mech: Mechanism, cfg: AuditRunConfig, sample: int) -> List[AuditRecord]:
    profile = sample_valuations(cfg.distribution, cfg.setting, sample, cfg.seed)
    records = []
    for bidder in range(cfg.setting.n):
        for method in cfg.methods:
            est = _estimate_one(mech, cfg, profile, sample, bidder, method)
            records.append(AuditRecord(sample=sample, estimate=est))
    return records


_WORKER_STATE = {}


def _init_worker(cfg: AuditRunConfig) -> None:
    _WORKER_STATE["cfg"] = cfg
    _WORKER_STATE["mech"] = resolve_mechanism(cfg.mechanism, cfg.setting)


def _run_sample_task(sample: int) -> List[AuditRecord]:
    return _sample_records(_WORKER_STATE["mech"], _WORKER_STATE["cfg"], sample)


def resolve_workers(workers: Optional[int] = None) -> int:
    """Worker count: explicit argument, else the env var, else serial.

    A value of 0 (either way) means one worker per CPU.
    """
    if workers is None:
        raw = os.environ.get(THREADS_ENV_VAR, "").strip()
        if not raw:
            return 1
        try:
            workers = int(raw)
        except ValueError:
            raise InvalidConfigError(f"{THREADS_ENV_VAR}={raw!r} is not an integer")
    if workers < 0:
        raise InvalidConfigError(f"worker count must be >= 0, got {workers}")
    if workers == 0:
        return os.cpu_count() or 1
    return workers


def run_audit(cfg: AuditRunConfig, workers: Optional[int] = None) -> AuditReport:
    """Run every requested method on every bidder for each sampled profile.

    Deterministic given the config seed (wall-clock fields aside); the report
    is persisted to ``cfg.out`` when set.
    """
    t0 = time.perf_counter()
    workers = resolve_workers(workers)
    mech = resolve_mechanism(cfg.mechanism, cfg.setting)

    if workers <= 1 or cfg.samples == 1:
        per_sample = [_sample_records(mech, cfg, s) for s in range(cfg.samples)]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(cfg,)) as pool:
            per_sample = list(pool.map(_run_sample_task, range(cfg.samples)))

    records = [rec for sample_recs in per_sample for rec in sample_recs]
    means = compute_method_means(records, cfg.samples, cfg.methods)
    report = AuditReport(
        config=config_echo(cfg),
        samples=cfg.samples,
        methods=cfg.methods,
        records=records,
        method_means=means,
        total_mech_evals=sum(r.estimate.mech_evals for r in records),
        total_gradient_steps=sum(r.estimate.gradient_steps for r in records),
        wall_seconds=time.perf_counter() - t0,
    )
    if cfg.out is not None:
        write_report(report, cfg.out)
    return report


def run_sweep(cfg: AuditRunConfig, l_values: Sequence[int], r_values: Sequence[int],
              out: Optional[str] = None, workers: Optional[int] = None) -> List[dict]:
    """One pga audit per (L, R) pair over the same sample seeds.

    Sharing the run seed pairs the samples across cells, so regret is exactly
    nondecreasing in L for fixed R. Returns the sweep rows and optionally
    writes them as CSV.
    """
    if not l_values or not r_values:
        raise InvalidConfigError("l_values and r_values must be nonempty")
    rows = []
    for big_l in l_values:
        for big_r in r_values:
            cell = replace(cfg, methods=(METHOD_PGA,), out=None,
                           pga=replace(cfg.pga, big_l=int(big_l), big_r=int(big_r)))
            report = run_audit(cell, workers=workers)
            rows.append({
                "L": int(big_l),
                "R": int(big_r),
                "mean_regret": report.method_means[METHOD_PGA],
                "mech_evals": report.total_mech_evals,
                "gradient_steps": report.total_gradient_steps,
                "wall_seconds": report.wall_seconds,
            })
    if out is not None:
        write_sweep_csv(rows, out)
    return rows


def write_sweep_csv(rows: List[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
