"""Frequency-band filter characteristics and STFT-domain filtering."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signal_io import Signal
from .tfr import Spectrogram, StftParams, istft, stft

log = logging.getLogger(__name__)

SOURCES = ("nmu", "nmf", "sk", "custom")


@dataclass(frozen=True, eq=False)
class FilterCharacteristic:
    """Per-bin gains in [0, 1] with the peak gain equal to 1."""

    weights: np.ndarray
    bin_freqs_hz: np.ndarray
    source: str = "custom"
    rank: int | None = None
    trial: int | None = None
    column: int | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        f = np.asarray(self.bin_freqs_hz, dtype=float)
        if w.ndim != 1 or w.shape != f.shape:
            raise ValueError("weights and bin_freqs_hz must be equal-length vectors")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bin_freqs_hz", f)

    @property
    def peak_freq_hz(self) -> float:
        return float(self.bin_freqs_hz[np.argmax(self.weights)])

    def __eq__(self, other):
        if not isinstance(other, FilterCharacteristic):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights)
                and np.array_equal(self.bin_freqs_hz, other.bin_freqs_hz)
                and (self.source, self.rank, self.trial, self.column)
                == (other.source, other.rank, other.trial, other.column))


def _normalized(col: np.ndarray) -> np.ndarray:
    return col / col.max()


def selectors_from_w(w, bin_freqs, source: str = "custom", rank: int | None = None,
                     trial: int | None = None) -> list[FilterCharacteristic]:
    """Max-normalize every non-zero column of ``w`` into a filter.

    All-zero columns are skipped; each filter keeps its original column
    index in ``column``.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or np.any(w < 0):
        raise ValueError("w must be a non-negative matrix")
    out = []
    for j in range(w.shape[1]):
        col = w[:, j]
        if col.max() <= 0:
            continue
        out.append(FilterCharacteristic(_normalized(col), bin_freqs, source, rank, trial, j))
    if not out:
        raise ValueError("every column of w is zero")
    if len(out) < w.shape[1]:
        log.debug("dropped %d all-zero columns of %d", w.shape[1] - len(out), w.shape[1])
    return out


def spectral_kurtosis(spec: Spectrogram) -> np.ndarray:
    """Per-bin ``<|X|^4> / <|X|^2>^2 - 2`` over frames; 0 for silent bins."""
    if spec.frames.shape[1] < 4:
        raise ValueError("spectral kurtosis needs at least 4 frames")
    p2 = np.abs(spec.frames) ** 2
    m2 = p2.mean(axis=1)
    m4 = (p2 * p2).mean(axis=1)
    sk = np.zeros_like(m2)
    live = m2 > 0
    sk[live] = m4[live] / m2[live] ** 2 - 2.0
    return sk


def spectral_kurtosis_selector(spec: Spectrogram) -> FilterCharacteristic:
    """Filter whose gains follow the positive part of the spectral kurtosis."""
    sk = np.maximum(spectral_kurtosis(spec), 0.0)
    if sk.max() <= 0:
        raise ValueError("spectral kurtosis is non-positive in every bin")
    return FilterCharacteristic(_normalized(sk), spec.bin_freqs, "sk", column=0)


def filter_spectrogram(spec: Spectrogram, filt: FilterCharacteristic) -> Signal:
    """Scale every bin of every frame by the filter gain and invert."""
    if filt.weights.size != spec.frames.shape[0]:
        raise ValueError(
            f"filter has {filt.weights.size} bins, spectrogram has {spec.frames.shape[0]}"
        )
    if filt.weights.max() <= 0:
        raise ValueError("filter weights are all zero")
    return istft(spec.with_frames(spec.frames * filt.weights[:, None]))


def apply_selector(signal: Signal, filt: FilterCharacteristic,
                   params: StftParams = StftParams()) -> Signal:
    """Filter ``signal`` by masking its STFT and resynthesizing."""
    if filt.weights.size != params.n_bins:
        raise ValueError(f"filter has {filt.weights.size} bins, expected {params.n_bins}")
    return filter_spectrogram(stft(signal, params), filt)


def save_filter_csv(filt: FilterCharacteristic, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("frequency_hz,weight\n")
        fh.writelines(f"{f:.17g},{w:.17g}\n" for f, w in zip(filt.bin_freqs_hz, filt.weights))
    os.replace(tmp, path)


def load_filter_csv(path, source: str = "custom", rank: int | None = None,
                    trial: int | None = None, column: int | None = None) -> FilterCharacteristic:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return FilterCharacteristic(data[:, 1], data[:, 0], source, rank, trial, column)
