import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from underband.cli import main
from underband.factorize import SolverConfig
from underband.harness import (ConfigError, ExperimentConfig, RankSummary, TrialError, TrialResult,
                               _trial, choose_rank, emit_report, load_report, rank_sweep, run_experiment,
                               run_trial, select_representative, thread_count, trial_seed)
from underband.signal_io import FaultSignalSpec, Signal, generate_fault_signal, save_signal
from underband.tfr import magnitude, stft

SHORT = FaultSignalSpec(duration_s=0.1)
FAST = SolverConfig(max_outer_iters=40)


def _cfg(**kw):
    base = dict(method="nmu", rank_min=2, rank_max=3, trials=2, solver=FAST, input=SHORT)
    base.update(kw)
    return ExperimentConfig(**base)


def _results(ks):
    return [TrialResult(2, i, i, 0, k, None, None, None) for i, k in enumerate(ks)]


class TestSelection:
    @pytest.mark.parametrize("ks, expected", [([10, 20, 30], 1), ([10, 30], 0), ([7.5], 0)])
    def test_representative(self, ks, expected):
        assert select_representative(_results(ks)) == expected

    def test_representative_empty(self):
        with pytest.raises(ValueError):
            select_representative([])

    def test_rank_tie_takes_lowest(self):
        s = [RankSummary(2, 5.0, 1.0, 0), RankSummary(3, 6.0, 1.0, 0), RankSummary(4, 6.0, 1.0, 0)]
        assert choose_rank(s).rank == 3

    def test_seed_schedule(self):
        assert trial_seed(7, 5, 3) == 7 + 5 * 10**6 + 3


class TestConfig:
    def test_sk_forces_single_trial(self):
        assert ExperimentConfig(method="sk", trials=50).trials == 1

    @pytest.mark.parametrize("kw", [dict(rank_min=1), dict(rank_min=5, rank_max=4), dict(trials=0),
                                    dict(method="pca")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            _cfg(**kw)

    def test_rank_above_dimensions(self):
        sig = generate_fault_signal(FaultSignalSpec(duration_s=0.004))
        with pytest.raises(ConfigError):
            rank_sweep(sig, _cfg(rank_max=6))

    def test_dict_round_trip(self):
        cfg = _cfg(base_seed=11)
        assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_thread_count(self, monkeypatch):
        monkeypatch.setenv("UNDERBAND_THREADS", "3")
        assert thread_count() == 3
        monkeypatch.setenv("UNDERBAND_THREADS", "zero")
        with pytest.raises(ConfigError):
            thread_count()


class TestTrial:
    def test_sk(self):
        spec = stft(generate_fault_signal(SHORT))
        r = run_trial(spec, "sk", None, 0)
        assert r.best_column == 0 and r.rank is None
        assert r == run_trial(spec, "sk", None, 0)

    @pytest.mark.parametrize("method", ["nmu", "nmf"])
    def test_deterministic(self, method):
        spec = stft(generate_fault_signal(SHORT))
        a = run_trial(spec, method, 2, 1, base_seed=3, solver=FAST)
        b = run_trial(spec, method, 2, 1, base_seed=3, solver=FAST)
        assert a == b
        assert a.seed == trial_seed(3, 2, 1)
        assert a.w_sparsity is not None and 0 <= a.w_sparsity <= 1
        assert (a.violation is None) == (method == "nmf")

    def test_two_band_mixture(self):
        # impulsive bursts near 5 kHz plus a stationary tone near 15 kHz
        fs = 50000.0
        n = 20000
        t = np.arange(n) / fs
        x = 0.1 * np.sin(2 * np.pi * 15000 * t)
        for start in range(0, n - 400, 1000):
            tau = t[: n - start]
            x[start:] += np.exp(-1000 * tau) * np.sin(2 * np.pi * 5000 * tau)
        spec = stft(Signal(x, fs))
        for trial in range(3):
            res, filters, _ = _trial(spec, magnitude(spec), "nmf", 2, trial, 0, SolverConfig())
            assert sorted(round(f.peak_freq_hz, -3) for f in filters) == [5000, 15000]
            best = next(f for f in filters if f.column == res.best_column)
            assert abs(best.peak_freq_hz - 5000) <= 500

    def test_failure_carries_context(self):
        spec = stft(Signal(np.zeros(2000), 50000.0))
        with pytest.raises(TrialError, match="rank 2 trial 0"):
            run_trial(spec, "nmf", 2, 0)


class TestSweep:
    def test_degenerate(self):
        rep = rank_sweep(generate_fault_signal(SHORT), _cfg(rank_max=2, trials=1), workers=1)
        assert len(rep.ranks) == 1 and len(rep.trials) == 1
        t = rep.trials[0]
        assert rep.ranks[0].mean_kurtosis == t.best_kurtosis == rep.chosen.kurtosis
        assert rep.ranks[0].representative_trial == 0
        assert rep.chosen.column == t.best_column

    def test_worker_count_does_not_matter(self):
        sig = generate_fault_signal(SHORT)
        assert rank_sweep(sig, _cfg(), workers=1) == rank_sweep(sig, _cfg(), workers=4)

    def test_sk(self):
        rep = rank_sweep(generate_fault_signal(SHORT), _cfg(method="sk"), workers=1)
        assert len(rep.trials) == 1 and rep.ranks[0].std_kurtosis is None
        assert rep.chosen.rank is None and rep.chosen.column == 0

    def test_chosen_matches_summary(self):
        rep = rank_sweep(generate_fault_signal(SHORT), _cfg(trials=3), workers=1)
        top = max(rep.ranks, key=lambda s: s.mean_kurtosis)
        assert rep.chosen.rank == top.rank and rep.chosen.trial == top.representative_trial
        picked = [t for t in rep.trials if t.rank == top.rank][top.representative_trial]
        assert rep.chosen.kurtosis == picked.best_kurtosis
        assert rep.chosen.filter.weights.max() == 1.0


class TestEmit:
    def test_round_trip(self, tmp_path):
        rep = run_experiment(_cfg(), tmp_path, workers=1)
        back = load_report(tmp_path)
        assert back == rep

    def test_sk_round_trip(self, tmp_path):
        rep = run_experiment(_cfg(method="sk"), tmp_path, workers=1)
        assert load_report(tmp_path) == rep

    def test_files(self, tmp_path):
        rep = run_experiment(_cfg(dump_factors=True), tmp_path, workers=1)
        for name in ("report.json", "summary.csv", "filter.csv", "filtered_signal.csv",
                     "envelope.csv", "factors_w.csv", "factors_v.csv"):
            assert (tmp_path / name).is_file()
        with open(tmp_path / "summary.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(rep.ranks) == 2
        assert float(rows[0]["mean_kurtosis"]) == rep.ranks[0].mean_kurtosis
        d = json.loads((tmp_path / "report.json").read_text())
        assert set(d["chosen"]) >= {"rank", "trial", "column", "kurtosis", "filter_csv",
                                    "filtered_signal", "envelope_csv", "envelope_peak_hz",
                                    "envelope_peak_amplitude"}
        assert {"config", "ranks", "chosen", "method", "versions"} <= set(d)
        filtered = np.loadtxt(tmp_path / "filtered_signal.csv")
        assert filtered.size == int(SHORT.duration_s * SHORT.sample_rate_hz)
        assert np.loadtxt(tmp_path / "factors_w.csv", delimiter=",", skiprows=1).shape == (257, 1 + rep.chosen.rank)

    def test_rerun_replaces(self, tmp_path):
        run_experiment(_cfg(), tmp_path, workers=1)
        (tmp_path / "report.json").write_text("stale")
        run_experiment(_cfg(), tmp_path, workers=1)
        json.loads((tmp_path / "report.json").read_text())
        assert not list(tmp_path.glob("*.tmp"))


class TestCli:
    def _spec_file(self, tmp_path):
        p = tmp_path / "spec.json"
        p.write_text(json.dumps(SHORT.to_dict()))
        return p

    def test_synthetic_ok(self, tmp_path, capsys):
        args = ["detect", "--synthetic", str(self._spec_file(tmp_path)), "--rank-min", "2",
                "--rank-max", "2", "--trials", "1", "--max-iters", "20", "--out", str(tmp_path / "o")]
        assert main(args) == 0
        assert "nmu: rank 2" in capsys.readouterr().out
        assert (tmp_path / "o" / "report.json").is_file()

    def test_csv_input_sk(self, tmp_path):
        sig = generate_fault_signal(SHORT)
        save_signal(sig, tmp_path / "x.csv")
        args = ["detect", "--input", str(tmp_path / "x.csv"), "--sample-rate", "50000",
                "--method", "sk", "--out", str(tmp_path / "o")]
        assert main(args) == 0

    @pytest.mark.parametrize("extra", [["--rank-min", "1"], ["--method", "ica"], ["--trials", "0"],
                                       ["--window", "128", "--overlap", "128"]])
    def test_config_errors(self, tmp_path, extra):
        args = ["detect", "--synthetic", str(self._spec_file(tmp_path)), "--out", str(tmp_path / "o")]
        assert main(args + extra) == 1

    def test_missing_source(self, tmp_path):
        assert main(["detect", "--out", str(tmp_path)]) == 1

    def test_csv_without_rate(self, tmp_path):
        save_signal(generate_fault_signal(SHORT), tmp_path / "x.csv")
        assert main(["detect", "--input", str(tmp_path / "x.csv"), "--out", str(tmp_path / "o")]) == 1

    def test_unreadable_input(self, tmp_path):
        (tmp_path / "bad.wav").write_bytes(b"nonsense")
        assert main(["detect", "--input", str(tmp_path / "bad.wav"), "--out", str(tmp_path / "o")]) == 2

    def test_module_entry(self, tmp_path):
        env = dict(os.environ, UNDERBAND_THREADS="1")
        proc = subprocess.run([sys.executable, "-m", "underband", "detect", "--synthetic",
                               str(self._spec_file(tmp_path)), "--method", "sk", "--out",
                               str(tmp_path / "o")], capture_output=True, text=True, env=env)
        assert proc.returncode == 0, proc.stderr
