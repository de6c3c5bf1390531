import json
import math
import os

import numpy as np
import pytest

from sparsegnn import harness
from sparsegnn.harness import (
    ConfigError,
    ExperimentConfig,
    RunRecord,
    correlation,
    config_from_dict,
    emit_reports,
    is_winning,
    load_config,
    mean_relative_accuracy,
    records_from_csv,
    resolve_dataset,
    run_sweep,
    runs_csv_text,
    transition_probability,
    winning_probability,
)


def rec(dataset="d", seed=0, rho=0.5, tau_pre=1.0, tau_post=1.0, a_clean=1.0,
        a_post=1.0, wt=None, failed=False):
    if wt is None:
        wt = is_winning(a_clean, a_post, 0.05)
    return RunRecord(dataset=dataset, seed=seed, rho_nominal=rho, rho_realized=rho,
                     tau_pre=tau_pre, tau_post=tau_post, a_clean=a_clean, a_post=a_post,
                     winning_ticket=wt, failed=failed)


TINY = dict(datasets=("cycles-vs-paths",), rho_grid=(0.0, 0.5), seeds=2, epochs=5,
            hidden_width=4)


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.epochs == 250 and cfg.batch_size == 32 and cfg.lr == 0.01
        assert cfg.rho_grid == tuple(round(0.1 * i, 1) for i in range(1, 10))
        assert len(cfg.kappa_grid) == 12

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(variant="gat")
        with pytest.raises(ConfigError):
            ExperimentConfig(mp_layers=5)
        with pytest.raises(ConfigError):
            ExperimentConfig(rho_grid=(0.5, 1.0))
        with pytest.raises(ConfigError):
            ExperimentConfig(lr=0.0)
        with pytest.raises(ConfigError):
            ExperimentConfig(split_fractions=(0.5, 0.5, 0.5))

    def test_json_config(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"datasets": ["cycles-vs-paths"], "seeds": 3,
                                 "rho_grid": [0.1, 0.2], "lr": 0.02}))
        cfg = load_config(str(p))
        assert cfg.seeds == 3 and cfg.rho_grid == (0.1, 0.2) and cfg.lr == 0.02

    def test_flat_config(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("seeds = 4\nrho_grid = 0.1, 0.3  # two points\nvariant = gcn\n")
        cfg = load_config(str(p))
        assert cfg.seeds == 4 and cfg.rho_grid == (0.1, 0.3) and cfg.variant == "gcn"

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            config_from_dict({"bogus": 1})

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{ not json")
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_resolve_unknown_dataset(self):
        from sparsegnn.graphs import DataError
        with pytest.raises(DataError):
            resolve_dataset("no-such-dataset")


class TestWinningRule:
    def test_relative(self):
        assert is_winning(1.0, 0.96, 0.05)
        assert not is_winning(1.0, 0.94, 0.05)
        assert is_winning(0.8, 0.77, 0.05)   # 3.75% relative drop

    def test_absolute_mode(self):
        assert is_winning(0.8, 0.76, 0.05, absolute=True)
        assert not is_winning(0.8, 0.74, 0.05, absolute=True)

    def test_zero_clean(self):
        assert is_winning(0.0, 0.0, 0.05)
        assert is_winning(0.0, 0.5, 0.05)


class TestSweep:
    def test_rho_zero_equals_dense_twin(self):
        cfg = ExperimentConfig(**TINY)
        records = run_sweep(cfg)
        for r in records:
            if r.rho_nominal == 0.0:
                assert r.winning_ticket
                assert r.a_post == r.a_clean
                assert r.rho_realized == 0.0

    def test_byte_identical_reruns(self):
        cfg = ExperimentConfig(**TINY)
        a = runs_csv_text(run_sweep(cfg))
        b = runs_csv_text(run_sweep(cfg))
        assert a == b

    def test_failed_cell_recorded(self, monkeypatch):
        cfg = ExperimentConfig(**TINY)
        orig = harness._tau
        calls = []

        def flaky(config, ctx, model):
            calls.append(1)
            if len(calls) == 3:
                raise RuntimeError("injected")
            return orig(config, ctx, model)

        monkeypatch.setattr(harness, "_tau", flaky)
        records = run_sweep(cfg)
        assert len(records) == 4
        failed = [r for r in records if r.failed]
        assert len(failed) == 1
        assert "injected" in failed[0].error
        assert math.isnan(failed[0].tau_pre)

    def test_csv_round_trip(self, tmp_path):
        cfg = ExperimentConfig(**TINY)
        records = run_sweep(cfg)
        paths = emit_reports(records, str(tmp_path), cfg)
        back = records_from_csv(paths["runs.csv"])
        assert runs_csv_text(back) == runs_csv_text(records)


class TestWinningProbability:
    def test_all_winning(self):
        records = [rec(rho=0.5, tau_pre=0.95, wt=True) for _ in range(4)]
        rows = winning_probability(records, theta_grid=(0.9, 1.0), eps=0.05, rho_grid=(0.5,))
        probs = {theta: p for _, theta, p, _ in rows}
        assert probs[0.9] == 1.0 and probs[1.0] == 1.0

    def test_empty_bucket_nan(self):
        records = [rec(rho=0.5, tau_pre=0.2)]
        rows = winning_probability(records, theta_grid=(0.9,), eps=0.05, rho_grid=(0.5,))
        assert math.isnan(rows[0][2]) and rows[0][3] == 0

    def test_hand_fixture_with_normalization(self):
        # dataset A: 3 runs in bucket, 1 winning -> 1/3
        # dataset B: 1 run in bucket, winning -> 1
        # equal-weight average: 2/3
        records = [
            rec("A", tau_pre=0.5, wt=True), rec("A", tau_pre=0.5, wt=False),
            rec("A", tau_pre=0.5, wt=False), rec("B", tau_pre=0.5, wt=True),
            rec("A", tau_pre=0.9, wt=True), rec("B", tau_pre=0.1, wt=False),
        ]
        rows = winning_probability(records, theta_grid=(0.5,), eps=0.05, rho_grid=(0.5,))
        rho, theta, p, count = rows[0]
        assert p == pytest.approx(2.0 / 3.0)
        assert count == 4

    def test_failed_records_excluded(self):
        records = [rec(tau_pre=0.5, wt=True), rec(tau_pre=0.5, wt=False, failed=True)]
        rows = winning_probability(records, theta_grid=(0.5,), eps=0.05, rho_grid=(0.5,))
        assert rows[0][2] == 1.0


class TestTransitionProbability:
    def test_tau_preserved_gives_zero(self):
        records = [rec(tau_pre=t, tau_post=t) for t in (0.1, 0.4, 0.7)]
        for kappa, p, n in transition_probability(records, kappa_grid=(0.5, 0.8)):
            assert p == 0.0

    def test_empty_condition_nan(self):
        records = [rec(tau_pre=0.9, tau_post=0.9)]
        rows = transition_probability(records, kappa_grid=(0.5,))
        assert math.isnan(rows[0][1]) and rows[0][2] == 0

    def test_hand_fixture(self):
        # kappa=0.8: tau_pre < 0.8 in 4 records; tau_post >= 0.8 in 1 of them
        records = [
            rec(tau_pre=0.5, tau_post=0.9),
            rec(tau_pre=0.5, tau_post=0.5),
            rec(tau_pre=0.7, tau_post=0.3),
            rec(tau_pre=0.6, tau_post=0.6),
            rec(tau_pre=0.9, tau_post=0.9),
        ]
        rows = transition_probability(records, kappa_grid=(0.8,))
        kappa, p, n = rows[0]
        assert (p, n) == (0.25, 4)


class TestCorrelation:
    def test_four_point_fixture(self):
        records = [rec(rho=0.5, tau_pre=x, a_post=y)
                   for x, y in [(1, 1), (2, 2), (3, 2), (4, 3)]]
        out = correlation(records)
        r, p, n = out[0.5]
        assert r == pytest.approx(0.9487, abs=1e-3)
        assert n == 4

    def test_zero_variance_flagged(self):
        records = [rec(rho=0.3, tau_pre=1.0, a_post=y) for y in (0.1, 0.2, 0.3)]
        out = correlation(records)
        assert math.isnan(out[0.3][0])

    def test_pooled_range(self):
        records = ([rec(rho=0.3, tau_pre=x, a_post=x) for x in (0.1, 0.5, 0.9)]
                   + [rec(rho=0.9, tau_pre=x, a_post=-x) for x in (0.1, 0.5, 0.9)])
        out = correlation(records)
        r, p, n = out["pooled"]
        assert n == 3         # only rho=0.3 lies in [0.3, 0.7]
        assert r == 1.0


class TestMeanRelativeAccuracy:
    def test_no_change_is_zero(self):
        records = [rec(a_clean=0.8, a_post=0.8) for _ in range(3)]
        assert mean_relative_accuracy(records) == 0.0

    def test_single_record(self):
        records = [rec(a_clean=1.0, a_post=0.9)]
        assert mean_relative_accuracy(records) == pytest.approx(-0.1)

    def test_hand_fixture_bucketed(self):
        records = [
            rec(tau_pre=0.5, a_clean=1.0, a_post=0.8),   # -0.2
            rec(tau_pre=0.5, a_clean=0.5, a_post=0.6),   # +0.2
            rec(tau_pre=0.9, a_clean=1.0, a_post=0.0),   # outside bucket
        ]
        assert mean_relative_accuracy(records, theta=0.5, eps=0.05) == pytest.approx(0.0)

    def test_empty_bucket_nan(self):
        assert math.isnan(mean_relative_accuracy([], theta=0.5))


class TestReports:
    def test_headers_only_when_empty(self, tmp_path):
        paths = emit_reports([], str(tmp_path))
        runs = open(paths["runs.csv"]).read().splitlines()
        assert runs == [",".join(harness.RUNS_HEADER)]
        trans = open(paths["transition.csv"]).read().splitlines()
        assert trans[0] == "kappa,probability,count"
        assert len(trans) == 13  # header + 12 kappa rows (all NaN)

    def test_schema_and_determinism(self, tmp_path):
        records = [rec(seed=s, rho=r, tau_pre=0.5 + 0.1 * s, a_post=0.9)
                   for s in range(3) for r in (0.1, 0.5)]
        p1 = emit_reports(records, str(tmp_path / "a"))
        p2 = emit_reports(records, str(tmp_path / "b"))
        for name in p1:
            b1 = open(p1[name], "rb").read()
            b2 = open(p2[name], "rb").read()
            assert b1 == b2, name
        first = open(p1["winning_prob.csv"]).readline().strip()
        assert first == "rho,theta,probability,count"
        assert os.path.exists(p1["plot_reports.py"])

    def test_probabilities_in_range(self, tmp_path):
        records = [rec(seed=s, rho=0.5, tau_pre=s / 10, tau_post=s / 20, wt=s % 2 == 0)
                   for s in range(10)]
        for _, _, p, _ in winning_probability(records):
            assert math.isnan(p) or 0.0 <= p <= 1.0
        for _, p, _ in transition_probability(records):
            assert math.isnan(p) or 0.0 <= p <= 1.0
