"""Experiment orchestration: JSON configs, seeded trials, bootstrap
aggregation, and CSV curve output.

Reproducibility contract: every run/trial/bootstrap random stream is derived
from the experiment's master seed by named children, so re-running the same
config with the same seed produces byte-identical output files regardless of
worker scheduling.

CSV schema (one row per experiment-metric, algorithm, and round):
``experiment,algorithm,trial_agg,round,error_mean,ci_low,ci_high``
where ``trial_agg`` is the number of trials aggregated into the row.  The
primary error metric is emitted under the experiment id verbatim; additional
metrics (when a family defines them) are emitted under ``<id>.<metric>``.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields as dataclass_fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .algorithm import (
    NdbalConfig,
    RunRecord,
    run_ndbal,
    run_qbc_baseline,
    run_random_baseline,
)
from .core import (
    ConfigError,
    DistanceFn,
    Oracle,
    PosteriorHandle,
    RngStream,
    Structure,
    StructureSpace,
    WeightedEnsemble,
)
from .instances import (
    AngleDistance,
    ApproxBestItemDistance,
    BestItemDistance,
    IntervalPairDistance,
    IntervalProtectedDistance,
    LinearClassifierSpace,
    LogitChoiceSpace,
    build_separation_family,
    flip_oracle,
    logistic_oracle,
    logit_choice_oracle,
    massart_oracle,
    unit_sphere,
)
from .losses import LOGISTIC
from .samplers import ContinuousPosterior

__all__ = [
    "CSV_COLUMNS",
    "ALGORITHM_RUNNERS",
    "FAMILIES",
    "CurvePoint",
    "ExperimentConfig",
    "TrialSetup",
    "parse_config",
    "load_config",
    "build_trial",
    "run_trial",
    "run_experiment",
    "bootstrap_ci",
    "emit_curves",
    "read_curves",
]

CSV_COLUMNS = (
    "experiment",
    "algorithm",
    "trial_agg",
    "round",
    "error_mean",
    "ci_low",
    "ci_high",
)

ALGORITHM_RUNNERS = {
    "ndbal": run_ndbal,
    "qbc": run_qbc_baseline,
    "random": run_random_baseline,
}

BOOTSTRAP_LEVEL = 0.68
BOOTSTRAP_RESAMPLES = 1000


@dataclass(frozen=True)
class CurvePoint:
    experiment: str
    algorithm: str
    trial_agg: int
    round: int
    error_mean: float
    ci_low: float
    ci_high: float

    def __post_init__(self) -> None:
        if not self.ci_low <= self.error_mean <= self.ci_high:
            raise ConfigError("curve point must satisfy ci_low <= mean <= ci_high")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    family: str
    family_params: dict
    algorithms: tuple[str, ...]
    ndbal: NdbalConfig
    trials: int
    seed: int
    out: str


@dataclass
class TrialSetup:
    """One trial's fully-built instance.  ``make_prior`` returns a fresh
    posterior per run (sampled posteriors are stateful)."""

    space: StructureSpace
    oracle: Oracle
    d: DistanceFn
    g_star: Structure
    make_prior: Callable[[], PosteriorHandle]
    extra_metrics: dict[str, DistanceFn] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Config parsing (dotted-path error messages)
# ---------------------------------------------------------------------------


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _get_typed(data: dict, key: str, kinds, path: str, default=_check):
    if key not in data:
        if default is _check:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    value = data[key]
    if kinds is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    _check(
        isinstance(value, kinds) and not isinstance(value, bool),
        f"{path}.{key}",
        f"expected {getattr(kinds, '__name__', kinds)}, got {type(value).__name__}",
    )
    return value


def _parse_ndbal(data: dict, path: str = "ndbal") -> NdbalConfig:
    _check(isinstance(data, dict), path, "expected an object")
    allowed = {f.name: str(f.type) for f in dataclass_fields(NdbalConfig)}
    kwargs = {}
    for key, value in data.items():
        _check(key in allowed, f"{path}.{key}", "unknown parameter")
        hint = allowed[key]
        if value is None:
            ok = "None" in hint
        elif isinstance(value, bool):
            ok = False
        elif isinstance(value, int):
            ok = "int" in hint or "float" in hint
            if "float" in hint:
                value = float(value)
        elif isinstance(value, float):
            ok = "float" in hint
        else:
            ok = isinstance(value, str) and hint.startswith("str")
        _check(ok, f"{path}.{key}", f"expected {hint}, got {type(value).__name__}")
        kwargs[key] = value
    try:
        return NdbalConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_config(data: dict, path: str = "config") -> ExperimentConfig:
    _check(isinstance(data, dict), path, "expected a JSON object")
    known = {
        "experiment",
        "family",
        "family_params",
        "algorithms",
        "ndbal",
        "trials",
        "seed",
        "out",
    }
    for key in data:
        _check(key in known, f"{path}.{key}", "unknown field")
    experiment = _get_typed(data, "experiment", str, path)
    family = _get_typed(data, "family", str, path)
    _check(family in FAMILIES, f"{path}.family", f"unknown family {family!r}; "
           f"known: {sorted(FAMILIES)}")
    family_params = _get_typed(data, "family_params", dict, path, default={})
    algorithms = _get_typed(data, "algorithms", list, path, default=["ndbal"])
    _check(len(algorithms) >= 1, f"{path}.algorithms", "must be non-empty")
    for i, algo in enumerate(algorithms):
        _check(
            isinstance(algo, str) and algo in ALGORITHM_RUNNERS,
            f"{path}.algorithms[{i}]",
            f"must be one of {sorted(ALGORITHM_RUNNERS)}",
        )
    _check(
        len(set(algorithms)) == len(algorithms),
        f"{path}.algorithms",
        "duplicate algorithm",
    )
    ndbal_data = _get_typed(data, "ndbal", dict, path)
    ndbal = _parse_ndbal(ndbal_data, f"{path}.ndbal")
    trials = _get_typed(data, "trials", int, path, default=1)
    _check(trials >= 1, f"{path}.trials", "must be >= 1")
    seed = _get_typed(data, "seed", int, path, default=0)
    _check(seed >= 0, f"{path}.seed", "must be >= 0")
    out = _get_typed(data, "out", str, path, default="curves.csv")
    # fail fast on bad family parameters using a throwaway rng
    FAMILIES[family](dict(family_params), np.random.default_rng(0))
    return ExperimentConfig(
        experiment=experiment,
        family=family,
        family_params=dict(family_params),
        algorithms=tuple(algorithms),
        ndbal=ndbal,
        trials=trials,
        seed=seed,
        out=out,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config: file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_config(data)


# ---------------------------------------------------------------------------
# Instance families
# ---------------------------------------------------------------------------


def _params(params: dict, schema: dict, path: str = "family_params") -> dict:
    """Validate a flat parameter dict against {name: (kinds, default, check, why)}."""
    for key in params:
        _check(key in schema, f"{path}.{key}", "unknown parameter")
    out = {}
    for name, (kinds, default, check, why) in schema.items():
        value = _get_typed(params, name, kinds, path, default=default)
        if value is _check:
            raise ConfigError(f"{path}.{name}: required parameter is missing")
        if check is not None:
            _check(check(value), f"{path}.{name}", why)
        out[name] = value
    return out


def _family_linear_logistic(params: dict, rng: np.random.Generator) -> TrialSetup:
    p = _params(
        params,
        {
            "dim": (int, _check, lambda v: v >= 1, "must be >= 1"),
            "sigma": (float, _check, lambda v: v > 0, "must be positive"),
            "sigma_scale": (float, 1.0, lambda v: v > 0, "must be positive"),
            "burn_in": (int, 1000, lambda v: v >= 0, "must be >= 0"),
            "thinning": (int, 5, lambda v: v >= 1, "must be >= 1"),
            "reburn": (int, 100, lambda v: v >= 0, "must be >= 0"),
        },
    )
    space = LinearClassifierSpace(p["dim"])
    w_star = p["sigma"] * rng.standard_normal(p["dim"])
    oracle = logistic_oracle(w_star, space, p["sigma_scale"])

    def make_prior() -> ContinuousPosterior:
        return ContinuousPosterior(
            dim=p["dim"],
            sigma=p["sigma"],
            loss=LOGISTIC,
            burn_in=p["burn_in"],
            thinning=p["thinning"],
            reburn=p["reburn"],
        )

    return TrialSetup(
        space=space,
        oracle=oracle,
        d=AngleDistance(),
        g_star=space.structure(w_star),
        make_prior=make_prior,
    )


def _family_logit_choice(params: dict, rng: np.random.Generator) -> TrialSetup:
    p = _params(
        params,
        {
            "n_items": (int, _check, lambda v: v >= 2, "must be >= 2"),
            "dim": (int, _check, lambda v: v >= 1, "must be >= 1"),
            "sigma": (float, _check, lambda v: v > 0, "must be positive"),
            "burn_in": (int, 1000, lambda v: v >= 0, "must be >= 0"),
            "thinning": (int, 5, lambda v: v >= 1, "must be >= 1"),
            "reburn": (int, 100, lambda v: v >= 0, "must be >= 0"),
        },
    )
    items = unit_sphere(p["n_items"], p["dim"], rng)
    space = LogitChoiceSpace(items)
    w_star = p["sigma"] * rng.standard_normal(p["dim"])
    oracle = logit_choice_oracle(w_star, space)

    def make_prior() -> ContinuousPosterior:
        return ContinuousPosterior(
            dim=p["dim"],
            sigma=p["sigma"],
            loss=LOGISTIC,
            burn_in=p["burn_in"],
            thinning=p["thinning"],
            reburn=p["reburn"],
        )

    return TrialSetup(
        space=space,
        oracle=oracle,
        d=ApproxBestItemDistance(items, normalized=True),
        g_star=space.structure(w_star),
        make_prior=make_prior,
        extra_metrics={
            "best_item": BestItemDistance(items),
            "approx_best_raw": ApproxBestItemDistance(items, normalized=False),
        },
    )


def _family_interval_separation(params: dict, rng: np.random.Generator) -> TrialSetup:
    p = _params(
        params,
        {
            "k": (int, _check, lambda v: v >= 1, "must be >= 1"),
            "eps": (float, _check, lambda v: 0 < v < 1, "must be in (0, 1)"),
            "alpha": (float, 0.2, lambda v: 0 < v <= 0.5, "must be in (0, 1/2]"),
            "side": (str, "pairs", lambda v: v in ("pairs", "protected"),
                     "must be 'pairs' or 'protected'"),
        },
    )
    fam = build_separation_family(p["k"], (0.0, p["alpha"]))
    n_keep = min(p["k"], int(math.floor(1.0 / math.sqrt(8.0 * p["eps"]))))
    structures = [fam.base, *fam.variants[:n_keep]]
    g_star = structures[int(rng.integers(len(structures)))]
    if p["side"] == "protected":
        d: DistanceFn = IntervalProtectedDistance((0.0, p["alpha"]))
    else:
        d = IntervalPairDistance()
    prior = WeightedEnsemble.uniform(structures)
    return TrialSetup(
        space=fam.space,
        oracle=flip_oracle(g_star, 0.0, fam.space),
        d=d,
        g_star=g_star,
        make_prior=lambda: prior,
    )


def _family_finite_massart_linear(params: dict, rng: np.random.Generator) -> TrialSetup:
    p = _params(
        params,
        {
            "dim": (int, _check, lambda v: v >= 2, "must be >= 2"),
            "n_structures": (int, _check, lambda v: v >= 2, "must be >= 2"),
            "lambda_noise": (float, _check, lambda v: 0 < v <= 1, "must be in (0, 1]"),
        },
    )
    space = LinearClassifierSpace(p["dim"])
    structures = space.sample_structures(p["n_structures"], rng)
    g_star = structures[int(rng.integers(len(structures)))]
    oracle = massart_oracle(g_star, p["lambda_noise"], space)
    prior = WeightedEnsemble.uniform(structures)
    return TrialSetup(
        space=space,
        oracle=oracle,
        d=AngleDistance(),
        g_star=g_star,
        make_prior=lambda: prior,
    )


FAMILIES: dict[str, Callable[[dict, np.random.Generator], TrialSetup]] = {
    "linear_logistic": _family_linear_logistic,
    "logit_choice": _family_logit_choice,
    "interval_separation": _family_interval_separation,
    "finite_massart_linear": _family_finite_massart_linear,
}


# ---------------------------------------------------------------------------
# Trial execution and aggregation
# ---------------------------------------------------------------------------


def build_trial(cfg: ExperimentConfig, trial: int) -> TrialSetup:
    rng = RngStream(cfg.seed).child("setup", trial).generator()
    return FAMILIES[cfg.family](cfg.family_params, rng)


def run_trial(cfg: ExperimentConfig, trial: int, algo: str) -> RunRecord:
    """One (trial, algorithm) run with its derived seed."""
    setup = build_trial(cfg, trial)
    rng = RngStream(cfg.seed).child("trial", algo, trial).generator()
    runner = ALGORITHM_RUNNERS[algo]
    return runner(
        cfg.ndbal,
        setup.space,
        setup.oracle,
        setup.make_prior(),
        setup.d,
        setup.g_star,
        rng,
        extra_metrics=setup.extra_metrics,
    )


def _padded_curve(
    rec: RunRecord, budget: int, metric: str | None
) -> list[float]:
    """Per-round metric values on the common 0..budget grid, carrying the
    last observed value forward through stopped/no-query rounds."""
    vals: list[float | None] = [None] * (budget + 1)
    for r in rec.rounds:
        v = r.error if metric is None else r.extra.get(metric)
        if v is not None and r.t <= budget:
            vals[r.t] = v
    out: list[float] = []
    last: float | None = None
    for v in vals:
        if v is not None:
            last = v
        if last is None:
            raise ConfigError("runs must log an error at round 0 to build curves")
        out.append(last)
    return out


def bootstrap_ci(
    samples: Sequence[float],
    level: float = BOOTSTRAP_LEVEL,
    resamples: int = BOOTSTRAP_RESAMPLES,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ValueError("samples must be non-empty")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    idx = rng.integers(0, arr.size, size=(resamples, arr.size))
    means = arr[idx].mean(axis=1)
    lo = float(np.quantile(means, (1.0 - level) / 2.0))
    hi = float(np.quantile(means, (1.0 + level) / 2.0))
    return lo, hi


def aggregate_curves(
    cfg: ExperimentConfig, records: dict[str, list[RunRecord]]
) -> list[CurvePoint]:
    """Mean curves with bootstrap confidence intervals, in deterministic
    (metric, algorithm, round) order."""
    budget = cfg.ndbal.budget
    first = records[cfg.algorithms[0]][0]
    metric_names: list[str | None] = [None] + sorted(first.rounds[0].extra.keys())
    stream = RngStream(cfg.seed)
    points: list[CurvePoint] = []
    for metric in metric_names:
        exp_id = cfg.experiment if metric is None else f"{cfg.experiment}.{metric}"
        for algo in cfg.algorithms:
            curves = np.array(
                [_padded_curve(rec, budget, metric) for rec in records[algo]]
            )
            brng = stream.child("bootstrap", exp_id, algo).generator()
            for t in range(budget + 1):
                col = curves[:, t]
                mean = float(np.mean(col))
                lo, hi = bootstrap_ci(col, BOOTSTRAP_LEVEL, BOOTSTRAP_RESAMPLES, brng)
                points.append(
                    CurvePoint(
                        experiment=exp_id,
                        algorithm=algo,
                        trial_agg=int(col.size),
                        round=t,
                        error_mean=mean,
                        ci_low=min(lo, mean),
                        ci_high=max(hi, mean),
                    )
                )
    return points


def run_experiment(
    cfg: ExperimentConfig, jobs: int = 1
) -> tuple[dict[str, list[RunRecord]], list[CurvePoint]]:
    """Run trials x algorithms, aggregate, and write the curve file."""
    tasks = [(trial, algo) for algo in cfg.algorithms for trial in range(cfg.trials)]
    records: dict[str, list[RunRecord]] = {a: [None] * cfg.trials for a in cfg.algorithms}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(run_trial, cfg, trial, algo): (trial, algo)
                for trial, algo in tasks
            }
            for fut, (trial, algo) in futures.items():
                records[algo][trial] = fut.result()
    else:
        for trial, algo in tasks:
            records[algo][trial] = run_trial(cfg, trial, algo)
    points = aggregate_curves(cfg, records)
    emit_curves(points, cfg.out)
    return records, points


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def emit_curves(points: Sequence[CurvePoint], path: str | Path) -> Path:
    """Write curve points as UTF-8, LF-terminated CSV with the fixed header."""
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for pt in points:
            writer.writerow(
                [
                    pt.experiment,
                    pt.algorithm,
                    pt.trial_agg,
                    pt.round,
                    _fmt(pt.error_mean),
                    _fmt(pt.ci_low),
                    _fmt(pt.ci_high),
                ]
            )
    return p


def read_curves(path: str | Path) -> list[CurvePoint]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != CSV_COLUMNS:
            raise ConfigError(f"curves: unexpected header {header!r}")
        points = []
        for row in reader:
            points.append(
                CurvePoint(
                    experiment=row[0],
                    algorithm=row[1],
                    trial_agg=int(row[2]),
                    round=int(row[3]),
                    error_mean=float(row[4]),
                    ci_low=float(row[5]),
                    ci_high=float(row[6]),
                )
            )
    return points
