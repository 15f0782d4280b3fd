"""Scalar diagnostics: kurtosis, sparsity and the envelope spectrum."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import hilbert

from .signal_io import Signal


@dataclass(frozen=True, eq=False)
class EnvelopeSpectrum:
    freqs_hz: np.ndarray
    amplitudes: np.ndarray
    resolution_hz: float


def kurtosis(x) -> float:
    """Raw kurtosis ``m4 / m2**2`` with population central moments.

    A Gaussian sequence scores about 3; impulsive signals score higher.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 4:
        raise ValueError("kurtosis needs at least 4 samples")
    d = x - x.mean()
    d2 = d * d
    m2 = d2.mean()
    if m2 <= 0:
        raise ValueError("kurtosis undefined for constant input")
    return float((d2 * d2).mean() / (m2 * m2))


def sparsity_fraction(m, rel_threshold: float = 1e-3) -> float:
    """Fraction of entries with magnitude below ``rel_threshold * max|m|``."""
    a = np.abs(np.asarray(m, dtype=float))
    if a.size == 0:
        raise ValueError("empty matrix")
    top = a.max()
    if top == 0:
        return 1.0
    return float(np.count_nonzero(a < rel_threshold * top) / a.size)


def envelope_spectrum(x: Signal) -> EnvelopeSpectrum:
    """Spectrum of the mean-removed Hilbert envelope.

    ``scipy.signal.hilbert`` builds the analytic signal in the frequency
    domain (negative frequencies zeroed, positive ones doubled).
    Amplitudes are ``|DFT| / N`` on the one-sided grid up to Nyquist.
    """
    n = len(x)
    if n < 16:
        raise ValueError("envelope spectrum needs at least 16 samples")
    env = np.abs(hilbert(x.samples))
    env -= env.mean()
    amps = np.abs(np.fft.rfft(env)) / n
    freqs = np.fft.rfftfreq(n, d=1.0 / x.sample_rate_hz)
    return EnvelopeSpectrum(freqs, amps, x.sample_rate_hz / n)


def dominant_cyclic_peak(es: EnvelopeSpectrum, search_lo_hz: float, search_hi_hz: float) -> tuple[float, float]:
    """Largest envelope-spectrum line in ``[lo, hi]``, ignoring the DC bin."""
    if not 0 < search_lo_hz < search_hi_hz <= es.freqs_hz[-1]:
        raise ValueError("need 0 < lo < hi <= highest frequency")
    band = np.flatnonzero((es.freqs_hz >= search_lo_hz) & (es.freqs_hz <= search_hi_hz))
    band = band[band > 0]
    if band.size == 0:
        raise ValueError(f"no spectral line in [{search_lo_hz}, {search_hi_hz}] Hz")
    i = band[np.argmax(es.amplitudes[band])]
    return float(es.freqs_hz[i]), float(es.amplitudes[i])


def save_envelope_csv(es: EnvelopeSpectrum, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("frequency_hz,amplitude\n")
        fh.writelines(f"{f:.17g},{a:.17g}\n" for f, a in zip(es.freqs_hz, es.amplitudes))
    os.replace(tmp, path)
