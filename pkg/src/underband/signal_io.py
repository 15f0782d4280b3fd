"""Loading, saving and synthesizing time-domain signals."""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.io.wavfile
from scipy.signal import lfilter


class SignalFormatError(ValueError):
    """Raised when a signal file cannot be read or holds unusable data."""


@dataclass(frozen=True, eq=False)
class Signal:
    """Real-valued samples with their sampling rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate_hz


@dataclass(frozen=True)
class FaultSignalSpec:
    """Parameters of the synthetic faulty-bearing signal.

    The defaults mimic a vibration test case: 91.5 Hz fault rate, a
    resonance near 20 kHz, 50 kHz sampling and AR(1) noise at about
    -5 dB SNR.
    """

    duration_s: float = 1.0
    sample_rate_hz: float = 50_000.0
    fault_freq_hz: float = 91.5
    carrier_freq_hz: float = 20_000.0
    decay_rate: float = 2_000.0
    impulse_amplitude: float = 1.0
    # noise_std_for_snr(spec, -5.0) for the other defaults is 0.19065
    noise_std: float = 0.19065
    noise_color_pole: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("duration_s", "sample_rate_hz", "fault_freq_hz", "carrier_freq_hz",
                     "decay_rate", "impulse_amplitude"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if not 0 <= self.noise_color_pole < 1:
            raise ValueError("noise_color_pole must lie in [0, 1)")
        if self.carrier_freq_hz >= self.sample_rate_hz / 2:
            raise ValueError("carrier_freq_hz must be below the Nyquist frequency")
        if self.fault_freq_hz >= self.carrier_freq_hz:
            raise ValueError("fault_freq_hz must be below carrier_freq_hz")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FaultSignalSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown FaultSignalSpec fields: {sorted(unknown)}")
        return cls(**d)


def load_wav(path, channel: int = 0) -> Signal:
    """Read a PCM (16/24/32-bit) or IEEE-float WAV file.

    Integer samples are scaled to [-1, 1) by the full-scale value of their
    container, so 32767 in a 16-bit file becomes 32767/32768.  24-bit files
    are read into left-justified 32-bit integers and share the 32-bit scale.
    """
    try:
        rate, data = scipy.io.wavfile.read(os.fspath(path))
    except FileNotFoundError:
        raise
    except (ValueError, EOFError, OSError) as exc:
        raise SignalFormatError(f"unreadable file {path}: {exc}") from exc

    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        x = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(float)
    else:
        raise SignalFormatError(f"unsupported encoding {data.dtype} in {path}")

    if x.ndim == 2:
        if not 0 <= channel < x.shape[1]:
            raise SignalFormatError(f"channel {channel} not present ({x.shape[1]} channels)")
        x = x[:, channel]
    elif channel != 0:
        raise SignalFormatError(f"channel {channel} requested from a mono file")
    if x.size == 0:
        raise SignalFormatError(f"zero-length audio in {path}")
    return Signal(x, float(rate))


def load_csv(path, sample_rate_hz: float) -> Signal:
    """Read one numeric value per line; a single header line is skipped."""
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                if lineno == 1:
                    continue
                raise SignalFormatError(f"{path}: non-numeric value at line {lineno}: {text!r}")
    if not values:
        raise SignalFormatError(f"{path}: no samples")
    return Signal(np.array(values), sample_rate_hz)


def save_signal(signal: Signal, path, format: str | None = None, wav_dtype: str = "float32") -> None:
    """Write ``signal`` as CSV (17 significant digits) or IEEE-float WAV.

    ``format`` defaults to the file suffix.  The file is written to a
    temporary sibling and renamed into place.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    tmp = path.with_name(path.name + ".tmp")
    if fmt == "csv":
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.writelines(f"{v:.17g}\n" for v in signal.samples)
    elif fmt == "wav":
        if wav_dtype not in ("float32", "float64"):
            raise ValueError("wav_dtype must be float32 or float64")
        rate = signal.sample_rate_hz
        if rate != int(rate):
            raise ValueError("WAV needs an integer sample rate")
        scipy.io.wavfile.write(tmp, int(rate), signal.samples.astype(wav_dtype))
    else:
        raise ValueError(f"unknown signal format {fmt!r}")
    os.replace(tmp, path)


def generate_colored_noise(n: int, std: float, pole: float, seed: int) -> np.ndarray:
    """AR(1) Gaussian noise ``y[n] = pole * y[n-1] + g[n]``.

    The output is rescaled so its empirical (population) standard deviation
    equals ``std``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if std < 0 or not 0 <= pole < 1:
        raise ValueError("need std >= 0 and 0 <= pole < 1")
    if std == 0:
        return np.zeros(n)
    g = np.random.default_rng(seed).standard_normal(n)
    y = lfilter([1.0], [1.0, -pole], g)
    if n > 1:
        y *= std / y.std()
    return y


def impulse_times(spec: FaultSignalSpec) -> np.ndarray:
    n = round(spec.duration_s * spec.sample_rate_hz)
    t_end = n / spec.sample_rate_hz
    count = math.floor(t_end * spec.fault_freq_hz) + 1
    t = np.arange(count) / spec.fault_freq_hz
    return t[t < t_end]


def generate_fault_signal(spec: FaultSignalSpec) -> Signal:
    """Cyclic decaying-sinusoid impulses at the carrier plus AR(1) noise."""
    fs = spec.sample_rate_hz
    n = round(spec.duration_s * fs)
    t = np.arange(n) / fs
    x = np.zeros(n)
    # exp(-40) ~ 4e-18: the response is negligible beyond this many seconds
    span = int(math.ceil(40.0 / spec.decay_rate * fs)) + 1
    for tk in impulse_times(spec):
        start = int(math.ceil(tk * fs - 1e-9))
        stop = min(n, start + span)
        tau = t[start:stop] - tk
        x[start:stop] += (spec.impulse_amplitude * np.exp(-spec.decay_rate * tau)
                          * np.sin(2 * np.pi * spec.carrier_freq_hz * tau))
    x += generate_colored_noise(n, spec.noise_std, spec.noise_color_pole, spec.rng_seed)
    return Signal(x, fs)


def impulse_power(spec: FaultSignalSpec) -> float:
    """Mean power of the noise-free impulse train."""
    clean = generate_fault_signal(FaultSignalSpec(**{**spec.to_dict(), "noise_std": 0.0}))
    return float(np.mean(clean.samples ** 2))


def noise_std_for_snr(spec: FaultSignalSpec, snr_db: float) -> float:
    """Noise standard deviation giving ``snr_db`` against the impulse train."""
    return math.sqrt(impulse_power(spec) / 10 ** (snr_db / 10))
