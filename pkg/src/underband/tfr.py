"""Short-time Fourier transform and its least-squares inverse."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .signal_io import Signal


@dataclass(frozen=True)
class StftParams:
    window_len: int = 128
    overlap: int = 100
    n_dft: int = 512

    def __post_init__(self):
        if self.window_len < 2:
            raise ValueError("window_len must be at least 2")
        if not 0 <= self.overlap < self.window_len:
            raise ValueError("overlap must satisfy 0 <= overlap < window_len")
        if self.n_dft < self.window_len:
            raise ValueError("n_dft must be >= window_len")

    @property
    def hop(self) -> int:
        return self.window_len - self.overlap

    @property
    def n_bins(self) -> int:
        return self.n_dft // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.window_len) // self.hop + 1


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """One-sided STFT frames, bins along rows and time frames along columns."""

    frames: np.ndarray
    params: StftParams
    sample_rate_hz: float
    original_len: int

    def __post_init__(self):
        p = self.params
        if self.frames.ndim != 2:
            raise ValueError("frames must be a 2-D matrix")
        if self.original_len < p.window_len:
            raise ValueError("original_len shorter than one window")
        expected = (p.n_bins, p.n_frames(self.original_len))
        if self.frames.shape != expected:
            raise ValueError(f"frames shape {self.frames.shape}, expected {expected}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape

    @property
    def bin_freqs(self) -> np.ndarray:
        return np.arange(self.params.n_bins) * self.sample_rate_hz / self.params.n_dft

    @property
    def frame_times(self) -> np.ndarray:
        """Centre time of every frame in seconds."""
        p = self.params
        k = np.arange(self.frames.shape[1])
        return (k * p.hop + p.window_len / 2) / self.sample_rate_hz

    def with_frames(self, frames: np.ndarray) -> "Spectrogram":
        return Spectrogram(frames, self.params, self.sample_rate_hz, self.original_len)


def hamming_window(n: int) -> np.ndarray:
    """Periodic Hamming window ``0.54 - 0.46 cos(2 pi k / n)``."""
    if n < 2:
        raise ValueError("window length must be at least 2")
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2 * np.pi * k / n)


def stft(signal: Signal, params: StftParams = StftParams()) -> Spectrogram:
    """Windowed, zero-padded DFT of every full frame; partial tail dropped."""
    x = signal.samples
    if x.size < params.window_len:
        raise ValueError(f"signal of {x.size} samples is shorter than one window ({params.window_len})")
    w = hamming_window(params.window_len)
    segs = sliding_window_view(x, params.window_len)[:: params.hop]
    frames = np.fft.rfft(segs * w, n=params.n_dft, axis=1).T
    return Spectrogram(np.ascontiguousarray(frames), params, signal.sample_rate_hz, x.size)


def istft(spec: Spectrogram) -> Signal:
    """Least-squares inverse (normalized weighted overlap-add).

    Each frame is inverse transformed, multiplied by the analysis window and
    overlap-added; the sum is divided by the overlap-added squared window.
    Samples not covered by any frame come out as zero.
    """
    p = spec.params
    n_bins, n_frames = spec.frames.shape
    if n_bins != p.n_bins or n_frames != p.n_frames(spec.original_len):
        raise ValueError("spectrogram dimensions inconsistent with its parameters")
    w = hamming_window(p.window_len)
    segs = np.fft.irfft(spec.frames.T, n=p.n_dft, axis=1)[:, : p.window_len] * w
    out = np.zeros(spec.original_len)
    env = np.zeros(spec.original_len)
    w2 = w * w
    for k in range(n_frames):
        start = k * p.hop
        out[start : start + p.window_len] += segs[k]
        env[start : start + p.window_len] += w2
    ok = env > 1e-12 * env.max()
    out[ok] /= env[ok]
    out[~ok] = 0.0
    return Signal(out, spec.sample_rate_hz)


def magnitude(spec: Spectrogram) -> np.ndarray:
    """Entrywise modulus of the STFT frames, the non-negative matrix S."""
    return np.abs(spec.frames)


def save_matrix_csv(m: np.ndarray, bin_freqs: np.ndarray, col_labels: np.ndarray, path,
                    corner: str = "frequency_hz") -> None:
    """CSV with a header row of column labels and a leading frequency column."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(",".join([corner] + [f"{c:.17g}" for c in col_labels]) + "\n")
        for f, row in zip(bin_freqs, m):
            fh.write(",".join([f"{f:.17g}"] + [f"{v:.17g}" for v in row]) + "\n")
    os.replace(tmp, path)


def save_magnitude_csv(spec: Spectrogram, path) -> None:
    save_matrix_csv(magnitude(spec), spec.bin_freqs, spec.frame_times, path)
