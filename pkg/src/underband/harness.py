"""Rank sweep over seeded trials, representative-filter selection, reports."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .factorize import (FactorPair, SolverConfig, init_random, nmf_multiplicative, nmu_global,
                        reconstruction_error)
from .metrics import (EnvelopeSpectrum, dominant_cyclic_peak, envelope_spectrum, kurtosis,
                      save_envelope_csv, sparsity_fraction)
from .selectors import (FilterCharacteristic, filter_spectrogram, load_filter_csv,
                        save_filter_csv, selectors_from_w, spectral_kurtosis_selector)
from .signal_io import FaultSignalSpec, Signal, generate_fault_signal, load_csv, load_wav, save_signal
from .tfr import Spectrogram, StftParams, magnitude, save_matrix_csv, stft

log = logging.getLogger(__name__)

METHODS = ("nmu", "nmf", "sk")
SEED_STRIDE = 10**6

REPORT_FILE = "report.json"
SUMMARY_FILE = "summary.csv"
FILTER_FILE = "filter.csv"
FILTERED_FILE = "filtered_signal.csv"
ENVELOPE_FILE = "envelope.csv"
W_FILE = "factors_w.csv"
V_FILE = "factors_v.csv"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class TrialError(RuntimeError):
    """A single trial failed; the message carries its rank and index."""


def trial_seed(base_seed: int, rank: int, trial: int) -> int:
    return base_seed + rank * SEED_STRIDE + trial


def thread_count() -> int:
    raw = os.environ.get("UNDERBAND_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"UNDERBAND_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError("UNDERBAND_THREADS must be positive")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "nmu"
    rank_min: int = 2
    rank_max: int = 15
    trials: int = 100
    stft: StftParams = StftParams()
    solver: SolverConfig = SolverConfig()
    base_seed: int = 0
    # a path to a WAV/CSV file, or a synthetic signal description
    input: str | FaultSignalSpec = field(default_factory=FaultSignalSpec)
    sample_rate_hz: float | None = None
    channel: int = 0
    envelope_lo_hz: float | None = None
    envelope_hi_hz: float | None = None
    dump_factors: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if self.method == "sk" and self.trials != 1:
            # spectral kurtosis has no random start
            object.__setattr__(self, "trials", 1)
        if self.method != "sk" and not 2 <= self.rank_min <= self.rank_max:
            raise ConfigError(f"need 2 <= rank_min <= rank_max, got {self.rank_min}..{self.rank_max}")

    def check_against(self, shape: tuple[int, int]) -> None:
        if self.method != "sk" and self.rank_max >= min(shape):
            raise ConfigError(f"rank_max {self.rank_max} must be below min(I, K) = {min(shape)}")

    def ranks(self) -> list[int | None]:
        if self.method == "sk":
            return [None]
        return list(range(self.rank_min, self.rank_max + 1))

    def envelope_band(self) -> tuple[float, float]:
        lo, hi = self.envelope_lo_hz, self.envelope_hi_hz
        if isinstance(self.input, FaultSignalSpec):
            lo = 0.5 * self.input.fault_freq_hz if lo is None else lo
            hi = 1.5 * self.input.fault_freq_hz if hi is None else hi
        return (1.0 if lo is None else lo, 500.0 if hi is None else hi)

    def to_dict(self) -> dict:
        src = self.input
        return {
            "method": self.method,
            "rank_min": self.rank_min,
            "rank_max": self.rank_max,
            "trials": self.trials,
            "stft": asdict(self.stft),
            "solver": asdict(self.solver),
            "base_seed": self.base_seed,
            "input": src.to_dict() if isinstance(src, FaultSignalSpec) else str(src),
            "sample_rate_hz": self.sample_rate_hz,
            "channel": self.channel,
            "envelope_lo_hz": self.envelope_lo_hz,
            "envelope_hi_hz": self.envelope_hi_hz,
            "dump_factors": self.dump_factors,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        src = d.pop("input")
        d["input"] = FaultSignalSpec.from_dict(src) if isinstance(src, dict) else src
        d["stft"] = StftParams(**d["stft"])
        d["solver"] = SolverConfig(**d["solver"])
        return cls(**d)


def load_input(cfg: ExperimentConfig) -> Signal:
    src = cfg.input
    if isinstance(src, FaultSignalSpec):
        return generate_fault_signal(src)
    path = Path(src)
    if path.suffix.lower() == ".csv":
        if cfg.sample_rate_hz is None:
            raise ConfigError("CSV input needs a sample rate")
        return load_csv(path, cfg.sample_rate_hz)
    return load_wav(path, cfg.channel)


@dataclass(frozen=True)
class TrialResult:
    rank: int | None
    trial: int
    seed: int
    best_column: int
    best_kurtosis: float
    violation: float | None
    residual: float | None
    w_sparsity: float | None


@dataclass(frozen=True)
class RankSummary:
    rank: int | None
    mean_kurtosis: float
    std_kurtosis: float | None
    representative_trial: int


@dataclass(frozen=True)
class ChosenFilter:
    rank: int | None
    trial: int
    column: int
    kurtosis: float
    envelope_peak_hz: float
    envelope_peak_amplitude: float
    filter: FilterCharacteristic


@dataclass(eq=True)
class Report:
    config: dict
    method: str
    ranks: list[RankSummary]
    trials: list[TrialResult]
    chosen: ChosenFilter
    versions: dict
    raw_kurtosis: float
    filtered: Signal | None = field(default=None, compare=False, repr=False)
    envelope: EnvelopeSpectrum | None = field(default=None, compare=False, repr=False)
    factors: FactorPair | None = field(default=None, compare=False, repr=False)
    spectrogram: Spectrogram | None = field(default=None, compare=False, repr=False)

    def summary_for(self, rank: int | None) -> RankSummary:
        for s in self.ranks:
            if s.rank == rank:
                return s
        raise KeyError(rank)

    def to_dict(self) -> dict:
        c = self.chosen
        return {
            "config": self.config,
            "method": self.method,
            "raw_kurtosis": self.raw_kurtosis,
            "ranks": [asdict(s) for s in self.ranks],
            "trials": [asdict(t) for t in self.trials],
            "chosen": {
                "rank": c.rank,
                "trial": c.trial,
                "column": c.column,
                "kurtosis": c.kurtosis,
                "filter_csv": FILTER_FILE,
                "filtered_signal": FILTERED_FILE,
                "envelope_csv": ENVELOPE_FILE,
                "envelope_peak_hz": c.envelope_peak_hz,
                "envelope_peak_amplitude": c.envelope_peak_amplitude,
            },
            "versions": self.versions,
        }


def versions() -> dict:
    import scipy

    return {"underband": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _factorize(s_mag: np.ndarray, method: str, rank: int, seed: int,
               solver: SolverConfig) -> tuple[FactorPair, float | None]:
    init = init_random(s_mag.shape[0], s_mag.shape[1], rank, seed, solver.init_scale)
    if method == "nmf":
        return nmf_multiplicative(s_mag, init, solver), None
    state = nmu_global(s_mag, init, solver)
    return state.factors, state.violation(s_mag)


def _score(spec: Spectrogram, filters: list[FilterCharacteristic]) -> list[float]:
    return [kurtosis(filter_spectrogram(spec, f).samples) for f in filters]


def _trial(spec: Spectrogram, s_mag: np.ndarray, method: str, rank: int | None, trial: int,
           base_seed: int, solver: SolverConfig):
    if method == "sk":
        filt = spectral_kurtosis_selector(spec)
        k = _score(spec, [filt])[0]
        return TrialResult(None, 0, base_seed, 0, k, None, None, None), [filt], None
    seed = trial_seed(base_seed, rank, trial)
    try:
        pair, violation = _factorize(s_mag, method, rank, seed, solver)
        filters = selectors_from_w(pair.w, spec.bin_freqs, method, rank, trial)
        scores = _score(spec, filters)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise TrialError(f"{method} rank {rank} trial {trial} (seed {seed}) failed: {exc}") from exc
    best = int(np.argmax(scores))
    result = TrialResult(
        rank=rank,
        trial=trial,
        seed=seed,
        best_column=filters[best].column,
        best_kurtosis=scores[best],
        violation=violation,
        residual=reconstruction_error(s_mag, pair),
        w_sparsity=sparsity_fraction(pair.w, 1e-3),
    )
    return result, filters, pair


def run_trial(spec: Spectrogram, method: str, rank: int | None, trial: int, base_seed: int = 0,
              solver: SolverConfig = SolverConfig(), s_mag: np.ndarray | None = None) -> TrialResult:
    """Factorize (or compute spectral kurtosis), filter with every selector, keep the best.

    The trial's random start is seeded with ``base_seed + rank * 10**6 + trial``.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    s_mag = magnitude(spec) if s_mag is None else s_mag
    return _trial(spec, s_mag, method, rank, trial, base_seed, solver)[0]


def select_representative(results: list[TrialResult]) -> int:
    """Index of the trial whose best kurtosis is closest to the mean (lowest on ties)."""
    if not results:
        raise ValueError("no trials to choose from")
    ks = np.array([r.best_kurtosis for r in results])
    return int(np.argmin(np.abs(ks - ks.mean())))


def summarize(results: list[TrialResult]) -> RankSummary:
    ks = np.array([r.best_kurtosis for r in results])
    std = float(ks.std()) if len(results) > 1 else None
    return RankSummary(results[0].rank, float(ks.mean()), std, select_representative(results))


def choose_rank(summaries: list[RankSummary]) -> RankSummary:
    """Highest mean kurtosis; the first (lowest) rank wins ties."""
    best = summaries[0]
    for s in summaries[1:]:
        if s.mean_kurtosis > best.mean_kurtosis:
            best = s
    return best


def rank_sweep(signal: Signal, cfg: ExperimentConfig, workers: int | None = None) -> Report:
    """Run every (rank, trial) job and build the report around the chosen filter.

    Jobs run on a thread pool of ``workers`` threads (default: the
    ``UNDERBAND_THREADS`` cap).  Results are folded in (rank, trial) order,
    so the report does not depend on scheduling.
    """
    spec = stft(signal, cfg.stft)
    s_mag = magnitude(spec)
    cfg.check_against(s_mag.shape)
    jobs = [(r, t) for r in cfg.ranks() for t in range(cfg.trials)]
    if not jobs:
        raise ConfigError("empty rank range")
    workers = thread_count() if workers is None else workers

    def job(rt):
        return _trial(spec, s_mag, cfg.method, rt[0], rt[1], cfg.base_seed, cfg.solver)[0]

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, jobs))
    else:
        results = [job(rt) for rt in jobs]

    by_rank: dict[int | None, list[TrialResult]] = {}
    for res in results:
        by_rank.setdefault(res.rank, []).append(res)
    summaries = [summarize(by_rank[r]) for r in cfg.ranks()]
    top = choose_rank(summaries)

    # re-derive the representative trial; seeding makes this reproduce the sweep
    rep, filters, pair = _trial(spec, s_mag, cfg.method, top.rank, top.representative_trial,
                                cfg.base_seed, cfg.solver)
    filt = next(f for f in filters if f.column == rep.best_column)
    filtered = filter_spectrogram(spec, filt)
    env = envelope_spectrum(filtered)
    lo, hi = cfg.envelope_band()
    hi = min(hi, float(env.freqs_hz[-1]))
    peak_hz, peak_amp = dominant_cyclic_peak(env, lo, hi)

    chosen = ChosenFilter(top.rank, rep.trial, rep.best_column, rep.best_kurtosis,
                          peak_hz, peak_amp, filt)
    return Report(
        config=cfg.to_dict(),
        method=cfg.method,
        ranks=summaries,
        trials=results,
        chosen=chosen,
        versions=versions(),
        raw_kurtosis=kurtosis(signal.samples),
        filtered=filtered,
        envelope=env,
        factors=pair,
        spectrogram=spec,
    )


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _fmt(x) -> str:
    return "" if x is None else f"{x:.17g}"


def emit_report(report: Report, out_dir) -> dict[str, Path]:
    """Write report.json, the per-rank summary and the chosen-filter artifacts.

    Every file is written to a temporary sibling and renamed into place, so
    re-running over an existing directory replaces files atomically.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / REPORT_FILE,
        "summary": out / SUMMARY_FILE,
        "filter": out / FILTER_FILE,
        "envelope": out / ENVELOPE_FILE,
    }
    lines = ["method,rank,mean_kurtosis,std_kurtosis,representative_trial"]
    for s in report.ranks:
        rank = "" if s.rank is None else str(s.rank)
        lines.append(f"{report.method},{rank},{_fmt(s.mean_kurtosis)},{_fmt(s.std_kurtosis)},"
                     f"{s.representative_trial}")
    _write_text(paths["summary"], "\n".join(lines) + "\n")
    save_filter_csv(report.chosen.filter, paths["filter"])
    if report.filtered is not None:
        paths["filtered"] = out / FILTERED_FILE
        save_signal(report.filtered, paths["filtered"], "csv")
    if report.envelope is not None:
        save_envelope_csv(report.envelope, paths["envelope"])
    if report.config.get("dump_factors") and report.factors is not None and report.spectrogram is not None:
        spec = report.spectrogram
        cols = np.arange(report.factors.rank)
        paths["w"] = out / W_FILE
        paths["v"] = out / V_FILE
        save_matrix_csv(report.factors.w, spec.bin_freqs, cols, paths["w"], corner="frequency_hz")
        save_matrix_csv(report.factors.v, cols, spec.frame_times, paths["v"], corner="component")
    _write_text(paths["report"], json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return paths


def load_report(out_dir) -> Report:
    """Rebuild a :class:`Report` from an emitted directory."""
    out = Path(out_dir)
    d = json.loads((out / REPORT_FILE).read_text(encoding="utf-8"))
    c = d["chosen"]
    method = d["method"]
    filt = load_filter_csv(out / c["filter_csv"], method, c["rank"],
                           None if method == "sk" else c["trial"], c["column"])
    chosen = ChosenFilter(c["rank"], c["trial"], c["column"], c["kurtosis"],
                          c["envelope_peak_hz"], c["envelope_peak_amplitude"], filt)
    return Report(
        config=d["config"],
        method=method,
        ranks=[RankSummary(**s) for s in d["ranks"]],
        trials=[TrialResult(**t) for t in d["trials"]],
        chosen=chosen,
        versions=d["versions"],
        raw_kurtosis=d["raw_kurtosis"],
    )


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> Report:
    signal = load_input(cfg)
    report = rank_sweep(signal, cfg, workers)
    if out_dir is not None:
        emit_report(report, out_dir)
    return report


def with_method(cfg: ExperimentConfig, method: str) -> ExperimentConfig:
    return replace(cfg, method=method, trials=cfg.trials if method != "sk" else 1)

