"""Experiment configs, trial builders, aggregation, and curve CSV I/O."""

import json
import math

import numpy as np
import pytest

from ndbal import ConfigError, WeightedEnsemble
from ndbal.algorithm import RoundLog, RunRecord
from ndbal.harness import (
    CSV_COLUMNS,
    FAMILIES,
    CurvePoint,
    aggregate_curves,
    bootstrap_ci,
    build_trial,
    emit_curves,
    load_config,
    parse_config,
    read_curves,
    run_experiment,
    run_trial,
)
from ndbal.harness import _padded_curve
from ndbal.instances import (
    AngleDistance,
    ApproxBestItemDistance,
    IntervalPairDistance,
    IntervalProtectedDistance,
)


def base_config(**overrides):
    data = {
        "experiment": "demo",
        "family": "finite_massart_linear",
        "family_params": {"dim": 2, "n_structures": 6, "lambda_noise": 0.6},
        "ndbal": {"beta": 0.8, "budget": 2, "m_atoms": 4, "update_rule": "soft01"},
        "trials": 2,
        "seed": 7,
        "out": "curves.csv",
    }
    data.update(overrides)
    return data


# ---------------------------------------------------------------------------
# Bootstrap intervals
# ---------------------------------------------------------------------------


class TestBootstrap:
    def test_constant_samples_degenerate(self):
        lo, hi = bootstrap_ci([0.4] * 30, rng=np.random.default_rng(0))
        assert lo == pytest.approx(0.4)
        assert hi == pytest.approx(0.4)

    def test_brackets_sample_mean(self):
        rng = np.random.default_rng(1)
        samples = rng.standard_normal(50)
        lo, hi = bootstrap_ci(samples, rng=np.random.default_rng(2))
        assert lo <= float(np.mean(samples)) <= hi

    def test_width_shrinks_like_root_n(self):
        rng = np.random.default_rng(3)
        widths = {}
        for n in (50, 200, 800):
            samples = rng.standard_normal(n)
            lo, hi = bootstrap_ci(samples, rng=np.random.default_rng(4))
            widths[n] = hi - lo
        assert 1.4 <= widths[50] / widths[200] <= 3.0
        assert 1.4 <= widths[200] / widths[800] <= 3.0

    def test_seeded_rng_reproducible(self):
        samples = np.random.default_rng(5).random(40)
        a = bootstrap_ci(samples, rng=np.random.default_rng(6))
        b = bootstrap_ci(samples, rng=np.random.default_rng(6))
        assert a == b

    def test_validation(self):
        with pytest.raises(ValueError):
            bootstrap_ci([])
        with pytest.raises(ValueError):
            bootstrap_ci([1.0], level=1.0)
        with pytest.raises(ValueError):
            bootstrap_ci([1.0], resamples=0)


# ---------------------------------------------------------------------------
# Curve points and CSV round trips
# ---------------------------------------------------------------------------


def point(**overrides):
    kwargs = dict(
        experiment="e", algorithm="ndbal", trial_agg=3, round=0,
        error_mean=0.5, ci_low=0.4, ci_high=0.6,
    )
    kwargs.update(overrides)
    return CurvePoint(**kwargs)


class TestCurveCsv:
    def test_point_ordering_enforced(self):
        with pytest.raises(ConfigError):
            point(ci_low=0.55)
        with pytest.raises(ConfigError):
            point(ci_high=0.45)

    def test_empty_emit_is_header_only(self, tmp_path):
        p = emit_curves([], tmp_path / "c.csv")
        text = p.read_text(encoding="utf-8")
        assert text == ",".join(CSV_COLUMNS) + "\n"

    def test_row_count_and_round_trip(self, tmp_path):
        # binary fractions survive the 10-significant-digit format exactly
        points = [
            point(algorithm=a, round=t, error_mean=0.5 - t / 8,
                  ci_low=0.375 - t / 8, ci_high=0.625 - t / 8)
            for a in ("ndbal", "random")
            for t in range(3)
        ]
        p = emit_curves(points, tmp_path / "c.csv")
        lines = p.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 7  # header + 2 algorithms x 3 rounds
        assert read_curves(p) == points

    def test_lf_only_bytes(self, tmp_path):
        p = emit_curves([point()], tmp_path / "c.csv")
        raw = p.read_bytes()
        assert b"\r" not in raw
        assert raw.endswith(b"\n")

    def test_reader_rejects_wrong_header(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_curves(bad)


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


class TestParseConfig:
    def test_minimal_config_defaults(self):
        cfg = parse_config(
            {
                "experiment": "e",
                "family": "finite_massart_linear",
                "family_params": {"dim": 2, "n_structures": 4, "lambda_noise": 0.5},
                "ndbal": {"beta": 1.0},
            }
        )
        assert cfg.trials == 1
        assert cfg.seed == 0
        assert cfg.out == "curves.csv"
        assert cfg.algorithms == ("ndbal",)

    @pytest.mark.parametrize(
        "mutation, needle",
        [
            ({"experiment": None}, "config.experiment"),
            ({"family": "mystery"}, "config.family"),
            ({"trials": "5"}, "config.trials"),
            ({"trials": True}, "config.trials"),
            ({"trials": 0}, "config.trials"),
            ({"seed": -1}, "config.seed"),
            ({"bogus": 1}, "config.bogus"),
            ({"algorithms": []}, "config.algorithms"),
            ({"algorithms": ["ndbal", "svm"]}, "config.algorithms[1]"),
            ({"algorithms": ["ndbal", "ndbal"]}, "config.algorithms"),
            ({"ndbal": {"beta": 1.0, "bogus": 2}}, "config.ndbal.bogus"),
            ({"ndbal": {"beta": 1.0, "budget": "x"}}, "config.ndbal.budget"),
            ({"ndbal": {"beta": -1.0}}, "config.ndbal"),
            ({"family_params": {"dim": 2, "n_structures": 4, "lambda_noise": 0.5,
                                "bogus": 1}}, "family_params.bogus"),
            ({"family_params": {"dim": 2, "n_structures": 4}},
             "family_params.lambda_noise"),
        ],
    )
    def test_dotted_path_errors(self, mutation, needle):
        data = base_config()
        removed = {k for k, v in mutation.items() if v is None}
        data = {k: v for k, v in data.items() if k not in removed}
        data.update({k: v for k, v in mutation.items() if v is not None})
        with pytest.raises(ConfigError) as exc:
            parse_config(data)
        assert needle in str(exc.value)

    def test_missing_required_fields(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({"family": "finite_massart_linear", "ndbal": {"beta": 1.0}})
        assert "config.experiment" in str(exc.value)
        with pytest.raises(ConfigError) as exc:
            parse_config({"experiment": "e", "family": "finite_massart_linear"})
        assert "config.ndbal" in str(exc.value)

    def test_load_config_file_paths(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        broken = tmp_path / "broken.json"
        broken.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(broken)
        good = tmp_path / "good.json"
        good.write_text(json.dumps(base_config()), encoding="utf-8")
        cfg = load_config(good)
        assert cfg.experiment == "demo"
        assert cfg.ndbal.budget == 2


# ---------------------------------------------------------------------------
# Instance families and trial building
# ---------------------------------------------------------------------------


class TestFamilies:
    def test_build_trial_deterministic(self):
        cfg = parse_config(base_config())
        a = build_trial(cfg, 0)
        b = build_trial(cfg, 0)
        np.testing.assert_allclose(a.g_star.params, b.g_star.params)
        assert a.oracle.massart_margin == pytest.approx(0.6)
        c = build_trial(cfg, 1)
        assert not np.allclose(a.g_star.params, c.g_star.params)

    def test_interval_separation_population_size(self):
        # the prior keeps 1 + min(k, floor(1/sqrt(8 eps))) structures
        setup = FAMILIES["interval_separation"](
            {"k": 4, "eps": 0.02}, np.random.default_rng(0)
        )
        assert len(setup.make_prior()) == 3
        assert isinstance(setup.d, IntervalPairDistance)
        setup32 = FAMILIES["interval_separation"](
            {"k": 32, "eps": 1.0 / 8192.0, "side": "protected"},
            np.random.default_rng(0),
        )
        assert len(setup32.make_prior()) == 33
        assert isinstance(setup32.d, IntervalProtectedDistance)

    def test_linear_logistic_setup(self):
        setup = FAMILIES["linear_logistic"](
            {"dim": 3, "sigma": 2.0}, np.random.default_rng(1)
        )
        assert isinstance(setup.d, AngleDistance)
        assert setup.oracle.massart_margin is None
        assert setup.make_prior() is not setup.make_prior()  # fresh chains

    def test_logit_choice_extra_metrics(self):
        setup = FAMILIES["logit_choice"](
            {"n_items": 5, "dim": 3, "sigma": 1.0}, np.random.default_rng(2)
        )
        assert set(setup.extra_metrics) == {"best_item", "approx_best_raw"}
        assert isinstance(setup.d, ApproxBestItemDistance)

    def test_run_trial_deterministic(self):
        cfg = parse_config(base_config())
        r1 = run_trial(cfg, 0, "ndbal")
        r2 = run_trial(cfg, 0, "ndbal")
        assert r1.errors() == r2.errors()
        assert [a.id for a in r1.queried_atoms()] == [a.id for a in r2.queried_atoms()]


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def fake_record(algorithm, errors, extras=None):
    rounds = []
    for t, e in enumerate(errors):
        extra = {} if extras is None else {"alt": extras[t]}
        rounds.append(
            RoundLog(t=t, atom=None, response=None, snapshot_id=t, error=e,
                     diam=None, extra=extra)
        )
    return RunRecord(algorithm=algorithm, rounds=rounds)


class TestAggregation:
    def test_padded_curve_carries_forward(self):
        rec = fake_record("ndbal", [0.5, 0.4])
        assert _padded_curve(rec, 3, None) == [0.5, 0.4, 0.4, 0.4]

    def test_padded_curve_needs_round_zero(self):
        rec = fake_record("ndbal", [0.5, 0.4])
        rec.rounds[0].error = None
        with pytest.raises(ConfigError):
            _padded_curve(rec, 2, None)

    def test_padded_curve_extra_metric(self):
        rec = fake_record("ndbal", [0.5, 0.4], extras=[0.9, 0.7])
        assert _padded_curve(rec, 2, "alt") == [0.9, 0.7, 0.7]

    def test_row_order_and_suffixed_ids(self):
        cfg = parse_config(base_config(algorithms=["ndbal", "random"], trials=3))
        records = {
            algo: [
                fake_record(algo, [0.5 + 0.01 * i, 0.4, 0.3],
                            extras=[0.9, 0.8, 0.7 - 0.01 * i])
                for i in range(3)
            ]
            for algo in ("ndbal", "random")
        }
        points = aggregate_curves(cfg, records)
        assert len(points) == 2 * 2 * 3  # metrics x algorithms x rounds
        expected_order = [
            (exp, algo, t)
            for exp in ("demo", "demo.alt")
            for algo in ("ndbal", "random")
            for t in range(3)
        ]
        assert [(p.experiment, p.algorithm, p.round) for p in points] == expected_order
        for p in points:
            assert p.trial_agg == 3
            assert p.ci_low <= p.error_mean <= p.ci_high

    def test_aggregate_is_deterministic(self):
        cfg = parse_config(base_config(trials=3))
        records = {
            "ndbal": [fake_record("ndbal", [0.5 + 0.1 * i, 0.2]) for i in range(3)]
        }
        a = aggregate_curves(cfg, records)
        b = aggregate_curves(cfg, records)
        assert a == b


# ---------------------------------------------------------------------------
# Full experiment runs
# ---------------------------------------------------------------------------


class TestRunExperiment:
    def test_end_to_end_writes_curves(self, tmp_path):
        out = tmp_path / "curves.csv"
        cfg = parse_config(
            base_config(algorithms=["ndbal", "random"], out=str(out))
        )
        records, points = run_experiment(cfg)
        assert out.exists()
        parsed = read_curves(out)
        assert len(parsed) == len(points)
        for got, want in zip(parsed, points):
            assert (got.experiment, got.algorithm, got.trial_agg, got.round) == (
                want.experiment, want.algorithm, want.trial_agg, want.round
            )
            assert got.error_mean == pytest.approx(want.error_mean, rel=1e-9)
            assert got.ci_low == pytest.approx(want.ci_low, rel=1e-9)
            assert got.ci_high == pytest.approx(want.ci_high, rel=1e-9)
        assert set(records) == {"ndbal", "random"}
        assert all(len(v) == cfg.trials for v in records.values())
        header = out.read_text(encoding="utf-8").splitlines()[0]
        assert header == "experiment,algorithm,trial_agg,round,error_mean,ci_low,ci_high"

    def test_rerun_is_byte_identical(self, tmp_path):
        out = tmp_path / "curves.csv"
        cfg = parse_config(base_config(out=str(out)))
        run_experiment(cfg)
        first = out.read_bytes()
        run_experiment(cfg)
        assert out.read_bytes() == first

    def test_parallel_matches_serial(self, tmp_path):
        out1 = tmp_path / "serial.csv"
        out2 = tmp_path / "parallel.csv"
        cfg1 = parse_config(base_config(out=str(out1)))
        cfg2 = parse_config(base_config(out=str(out2)))
        run_experiment(cfg1, jobs=1)
        run_experiment(cfg2, jobs=2)
        assert out1.read_bytes() == out2.read_bytes()

    def test_theory_mode_candidate_budget_invariant(self):
        cfg = parse_config(
            base_config(
                ndbal={
                    "beta": 0.05,
                    "budget": 3,
                    "mode": "theory",
                    "tau": 0.3,
                    "update_rule": "hard",
                    "select_k_max": 500,
                }
            )
        )
        rec = run_trial(cfg, 0, "ndbal")
        for r in rec.rounds:
            if r.t >= 1 and r.atoms_drawn:
                bound = math.ceil(
                    math.log(4.0 * r.t * (r.t + 1) / cfg.ndbal.delta) / cfg.ndbal.tau
                )
                assert 0 < r.atoms_drawn <= bound
