"""Command-line interface.

Verbs:

* ``ndbal run --config cfg.json [--seed N] [--out curves.csv] [--mode M] [--jobs J]``
  — run a configured experiment and write the aggregated curve CSV.
* ``ndbal verify [--seed N] [--out report.json]`` — exercise the analytic
  guarantees (mass-ratio bound, update potentials, query-selection
  certificate, splitting indices, sampler calibration) at a quick scale.
* ``ndbal report (--out curves.csv | --config cfg.json)`` — summarize a
  previously written curve file.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime error
(including a failed verification).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .algorithm import QUERY_MODES, NdbalConfig, apply_update
from .core import ConfigError, ResponseSet, RngStream, WeightedEnsemble
from .diameter import avg_diam_exact
from .harness import load_config, read_curves, run_experiment
from .instances import IndexedFamily, MatrixDistance, massart_oracle
from .losses import ZERO_ONE
from .samplers import ContinuousPosterior
from .select import exact_average_split, select
from .splitting import rho_star, verify_interval_index, verify_ranking_index

__all__ = ["main", "build_parser", "run_verification_suite"]


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------


def _random_finite_instance(rng: np.random.Generator):
    """A small random finite instance: response table, extrinsic distance
    matrix, and a fully-supported random ensemble."""
    n_structures = int(rng.integers(3, 9))
    n_items = int(rng.integers(3, 7))
    table = rng.integers(0, 2, size=(n_structures, n_items)).tolist()
    space = IndexedFamily(
        table, ResponseSet((0, 1)), weights=rng.dirichlet(np.ones(n_items))
    )
    m = rng.uniform(0.1, 1.0, size=(n_structures, n_structures))
    m = (m + m.T) / 2.0
    np.fill_diagonal(m, 0.0)
    d = MatrixDistance(m)
    probs = rng.dirichlet(np.ones(n_structures))
    e = WeightedEnsemble.from_probabilities(space.structures, probs)
    return space, d, e


def _check_mass_ratio(rng: np.random.Generator):
    """avg distance to any target <= avg diameter / target mass."""
    worst = -np.inf
    for _ in range(200):
        _space, d, e = _random_finite_instance(rng)
        diam = avg_diam_exact(e, d)
        w = e.probabilities
        to_g = d.matrix(e.structures) @ w
        worst = max(worst, float(np.max(to_g - diam / w)))
    return worst <= 1e-9, f"max bound violation {worst:.3e}"


def _check_update_potential(rng: np.random.Generator):
    """E_y[1/pi'(g*)^k] <= 1/pi(g*)^k for the soft update at beta = margin/k."""
    worst = -np.inf
    for _ in range(100):
        space, _d, e = _random_finite_instance(rng)
        gi = int(rng.integers(len(e)))
        lam = float(rng.uniform(0.3, 0.9))
        oracle = massart_oracle(e.structures[gi], lam, space)
        a = space.atoms[int(rng.integers(space.n_items))]
        law = oracle.law(a)
        for k in (1, 2):
            beta = lam / k
            before = 1.0 / e.probabilities[gi] ** k
            after = 0.0
            for yi, y in enumerate(oracle.response_set.labels):
                if law[yi] == 0.0:
                    continue
                e2 = apply_update(e, "soft01", a, y, beta, ZERO_ONE, space)
                after += law[yi] / e2.probabilities[gi] ** k
            worst = max(worst, after - before)
    return worst <= 1e-9, f"max potential increase {worst:.3e}"


def _check_split_drop(rng: np.random.Generator):
    """Querying an atom of split rho contracts E_y[diam/pi(g*)^2] by at
    least the factor 1 - rho*margin*beta/2 (small beta)."""
    worst = -np.inf
    for _ in range(100):
        space, d, e = _random_finite_instance(rng)
        gi = int(rng.integers(len(e)))
        lam = float(rng.uniform(0.3, 0.9))
        beta = lam / 10.0
        oracle = massart_oracle(e.structures[gi], lam, space)
        a = space.atoms[int(rng.integers(space.n_items))]
        law = oracle.law(a)
        rho = exact_average_split(e, a, d, space)
        phi = avg_diam_exact(e, d) / e.probabilities[gi] ** 2
        after = 0.0
        for yi, y in enumerate(oracle.response_set.labels):
            if law[yi] == 0.0:
                continue
            e2 = apply_update(e, "soft01", a, y, beta, ZERO_ONE, space)
            after += law[yi] * avg_diam_exact(e2, d) / e2.probabilities[gi] ** 2
        worst = max(worst, after - (1.0 - rho * lam * beta / 2.0) * phi)
    return worst <= 1e-9, f"max contraction shortfall {worst:.3e}"


def _select_demo_instance():
    """Four abstract unit-distance structures; atom 0 splits them in half,
    the other nine atoms draw full consensus."""
    table = [[1] + [1] * 9, [1] + [1] * 9, [0] + [1] * 9, [0] + [1] * 9]
    space = IndexedFamily(table, ResponseSet((0, 1)))
    d = MatrixDistance(1.0 - np.eye(4))
    e = WeightedEnsemble.uniform(space.structures)
    return space, d, e


def _check_select(rng: np.random.Generator):
    """The query-selection subroutine certifies the good atom on a planted
    instance (split 1/2; any certified atom must reach >= 5/12)."""
    space, d, e = _select_demo_instance()
    good = 0
    trials = 20
    for _ in range(trials):
        a = select(e, space.atoms, 0.5, 0.05, d, space, rng)
        if exact_average_split(e, a, d, space) >= 5.0 / 12.0 - 1e-9:
            good += 1
    return good >= trials - 4, f"good-atom certifications {good}/{trials}"


def _check_ranking_index(rng: np.random.Generator):
    rep = verify_ranking_index(2, 0.1, n_trials=8, rng=rng, n_atoms=48)
    ok = bool(rep.extras["positive_at_rho_star"])
    tau = rep.extras["tau_at_rho_star"]
    return ok, f"tau_hat({rho_star(0.1):.4g}) = {tau:.4g}, CI excludes 0: {ok}"


def _check_interval_index(rng: np.random.Generator):
    rep = verify_interval_index(4, (0.0, 0.2), 0.1, n_trials=8, rng=rng, n_atoms=48)
    ok = bool(rep.extras["positive_at_rho_star"]) and not bool(
        rep.extras["floor_violated"]
    )
    return ok, (
        f"tau_hat = {rep.extras['tau_at_rho_star']:.4g}, "
        f"floor {rep.extras['tau_floor']:.4g} violated: {rep.extras['floor_violated']}"
    )


def _check_sampler(rng: np.random.Generator):
    """The chain sampler reproduces the two-dimensional standard Gaussian
    prior and adapts into its target acceptance band."""
    post = ContinuousPosterior(dim=2, sigma=1.0)
    draws = post.draw_array(3000, rng)
    mean_err = float(np.max(np.abs(draws.mean(axis=0))))
    var_err = float(np.max(np.abs(draws.var(axis=0) - 1.0)))
    acc = post.acceptance_rate
    ok = mean_err <= 0.1 and var_err <= 0.2 and 0.45 <= acc <= 0.75
    return ok, f"mean err {mean_err:.3f}, var err {var_err:.3f}, acceptance {acc:.3f}"


_CHECKS = (
    ("mass-ratio bound", _check_mass_ratio),
    ("soft-update potential", _check_update_potential),
    ("split contraction", _check_split_drop),
    ("query-selection certificate", _check_select),
    ("ranking split index", _check_ranking_index),
    ("interval split index", _check_interval_index),
    ("sampler calibration", _check_sampler),
)


def run_verification_suite(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Run every quick verification; returns (name, passed, detail) rows."""
    stream = RngStream(seed)
    results = []
    for name, fn in _CHECKS:
        ok, detail = fn(stream.child("verify", name).generator())
        results.append((name, bool(ok), detail))
    return results


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    if args.mode is not None:
        cfg = replace(cfg, ndbal=replace(cfg.ndbal, mode=args.mode))
    _records, points = run_experiment(cfg, jobs=args.jobs)
    print(f"wrote {len(points)} rows to {cfg.out}")
    for pt in points:
        if pt.round == cfg.ndbal.budget and pt.experiment == cfg.experiment:
            print(
                f"  {pt.algorithm}: final error {pt.error_mean:.4g} "
                f"[{pt.ci_low:.4g}, {pt.ci_high:.4g}] over {pt.trial_agg} trials"
            )
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    results = run_verification_suite(seed)
    for name, ok, detail in results:
        print(f"{'ok  ' if ok else 'FAIL'} {name}: {detail}")
    if args.out is not None:
        payload = {
            "seed": seed,
            "results": [
                {"name": n, "passed": ok, "detail": det} for n, ok, det in results
            ],
        }
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", "utf-8")
        print(f"wrote report to {args.out}")
    if all(ok for _n, ok, _d in results):
        print(f"all {len(results)} verifications passed")
        return 0
    failed = sum(1 for _n, ok, _d in results if not ok)
    print(f"{failed} of {len(results)} verifications FAILED", file=sys.stderr)
    return 3


def _cmd_report(args: argparse.Namespace) -> int:
    if args.out is not None:
        path = args.out
    elif args.config is not None:
        path = load_config(args.config).out
    else:
        raise ConfigError("report needs --out CURVES.csv or --config CFG.json")
    try:
        points = read_curves(path)
    except FileNotFoundError:
        raise ConfigError(f"curve file not found: {path}") from None
    finals: dict[tuple[str, str], object] = {}
    for pt in points:
        key = (pt.experiment, pt.algorithm)
        if key not in finals or pt.round > finals[key].round:
            finals[key] = pt
    width = max([len("experiment")] + [len(e) for e, _a in finals])
    print(
        f"{'experiment':<{width}}  {'algorithm':<9}  {'trials':>6}  "
        f"{'rounds':>6}  {'final_error':>11}  ci"
    )
    for (exp, algo), pt in finals.items():
        print(
            f"{exp:<{width}}  {algo:<9}  {pt.trial_agg:>6}  {pt.round:>6}  "
            f"{pt.error_mean:>11.4g}  [{pt.ci_low:.4g}, {pt.ci_high:.4g}]"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ndbal",
        description="Diameter-based interactive structure discovery harness.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True, help="experiment config (JSON)")
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.add_argument("--out", default=None, help="override output CSV path")
    p_run.add_argument(
        "--mode", choices=QUERY_MODES, default=None, help="override query mode"
    )
    p_run.add_argument("--jobs", type=int, default=1, help="parallel trial workers")

    p_verify = sub.add_parser("verify", help="run the quick verification suite")
    p_verify.add_argument("--seed", type=int, default=None, help="suite seed")
    p_verify.add_argument("--out", default=None, help="write JSON report here")

    p_report = sub.add_parser("report", help="summarize a curve CSV")
    p_report.add_argument("--out", default=None, help="curve CSV to summarize")
    p_report.add_argument("--config", default=None, help="config whose output to read")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            return _cmd_run(args)
        if args.verb == "verify":
            return _cmd_verify(args)
        return _cmd_report(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to a distinct exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
