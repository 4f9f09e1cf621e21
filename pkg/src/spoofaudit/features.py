"""Short-time spectra, constant-Q transform and CQCC features.

The constant-Q transform correlates the signal with one Hann-windowed complex
exponential per geometrically spaced bin.  All hop positions of a bin are
evaluated at once in the frequency domain: the product spectrum is folded
modulo the number of output frames, which is the exact DFT identity for
sampling the correlation every ``hop`` samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np
from scipy.fft import dct, idct

from .audio import AudioSignal, ms_to_samples


@dataclass(frozen=True, eq=False)
class Spectrogram:
    values: np.ndarray           # frames x bins
    frame_hop_ms: float
    bin_frequencies: np.ndarray
    scale: str = "power"         # "power" or "log_power"

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CqccConfig:
    f_min: float = 15.625
    bins_per_octave: int = 24
    n_uniform_bins: int = 128
    n_ceps: int = 20
    delta_window: int = 2
    frame_hop_ms: float = 10.0
    log_floor: float = 1e-10
    # kernels longer than this are cut to it; longer than twice it is an error
    frame_ms: float = 1200.0
    # relative magnitude below which kernel spectrum lines are dropped
    kernel_sparsity: float = 1e-6
    # what analysis windows see beyond the signal ends: "reflect" or "zeros"
    pad_mode: str = "reflect"

    def validate(self, sample_rate: int) -> None:
        if self.f_min <= 0:
            raise ValueError("f_min must be positive")
        if self.f_min >= sample_rate / 2:
            raise ValueError("f_min must lie below Nyquist")
        if self.n_ceps > self.n_uniform_bins:
            raise ValueError("n_ceps cannot exceed n_uniform_bins")
        if self.bins_per_octave < 1 or self.delta_window < 1:
            raise ValueError("bins_per_octave and delta_window must be >= 1")
        if self.pad_mode not in ("reflect", "zeros"):
            raise ValueError(f"unknown pad_mode {self.pad_mode!r}")

    @property
    def dims(self) -> int:
        return 3 * self.n_ceps

    def fingerprint(self) -> str:
        items = sorted(asdict(self).items())
        return ";".join(f"{k}={v!r}" for k, v in items)


class KernelTooLongError(ValueError):
    pass


# ---------------------------------------------------------------------------
# STFT power spectrogram

def frame_count(n_samples: int, win: int, hop: int) -> int:
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def power_spectrogram(signal: AudioSignal, n_fft: int, win_ms: float,
                      hop_ms: float) -> Spectrogram:
    fs = signal.sample_rate
    win = ms_to_samples(win_ms, fs)
    hop = ms_to_samples(hop_ms, fs)
    if win > n_fft:
        raise ValueError(f"window of {win} samples exceeds n_fft={n_fft}")
    n = frame_count(len(signal), win, hop)
    if n == 0:
        raise ValueError("signal shorter than one analysis window")
    frames = np.lib.stride_tricks.sliding_window_view(signal.samples, win)[::hop][:n]
    spec = np.fft.rfft(frames * np.hanning(win), n=n_fft, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    freqs = np.arange(n_fft // 2 + 1) * fs / n_fft
    return Spectrogram(power, hop_ms, freqs, "power")


def log_power(spec: Spectrogram, floor: float = 1e-10) -> Spectrogram:
    if spec.scale == "log_power":
        return spec
    return Spectrogram(np.log(spec.values + floor), spec.frame_hop_ms,
                       spec.bin_frequencies, "log_power")


# ---------------------------------------------------------------------------
# constant-Q transform

def cqt_frequencies(config: CqccConfig, sample_rate: int) -> np.ndarray:
    nyquist = sample_rate / 2
    n_bins = int(math.floor(config.bins_per_octave * math.log2(nyquist / config.f_min) + 1e-9)) + 1
    return config.f_min * 2.0 ** (np.arange(n_bins) / config.bins_per_octave)


def quality_factor(bins_per_octave: int) -> float:
    return 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)


@lru_cache(maxsize=4)
def cqt_kernels(config: CqccConfig, sample_rate: int) -> tuple[tuple[np.ndarray, int], ...]:
    """Return (complex kernel, centre index) per bin, unit energy each."""
    freqs = cqt_frequencies(config, sample_rate)
    q = quality_factor(config.bins_per_octave)
    frame = ms_to_samples(config.frame_ms, sample_rate)
    kernels = []
    for f in freqs:
        length = int(math.ceil(q * sample_rate / f))
        if length > 2 * frame:
            raise KernelTooLongError(
                f"bin at {f:.3f} Hz needs a {length}-sample kernel, more than twice "
                f"the {frame}-sample frame; raise f_min or frame_ms")
        centre = length // 2
        window = np.hanning(length)
        phase = 2j * np.pi * f * (np.arange(length) - centre) / sample_rate
        kernel = window * np.exp(phase)
        if length > frame:
            lo = centre - frame // 2
            kernel = kernel[lo:lo + frame]
            centre -= lo
        kernel = kernel / np.sqrt(np.sum(np.abs(kernel) ** 2))
        kernels.append((kernel, centre))
    return tuple(kernels)


@lru_cache(maxsize=12)
def _kernel_spectra(config: CqccConfig, sample_rate: int, fft_len: int):
    """Conjugate kernel spectra for circular correlation of length fft_len.

    Bins whose spectrum is broad (cut kernels) are kept as a dense matrix;
    the rest keep only lines above ``kernel_sparsity`` of their peak.
    """
    dense_bins, dense_rows = [], []
    lines, values, owners = [], [], []
    for b, (kernel, centre) in enumerate(cqt_kernels(config, sample_rate)):
        placed = np.zeros(fft_len, dtype=complex)
        placed[(np.arange(kernel.size) - centre) % fft_len] = kernel
        spec = np.conj(np.fft.fft(placed))
        mag = np.abs(spec)
        keep = np.flatnonzero(mag >= config.kernel_sparsity * mag.max())
        if keep.size > fft_len // 8:
            dense_bins.append(b)
            dense_rows.append(spec)
        else:
            lines.append(keep)
            values.append(spec[keep])
            owners.append(np.full(keep.size, b))
    dense = np.array(dense_rows) if dense_rows else np.zeros((0, fft_len), complex)
    return (np.array(dense_bins, dtype=int), dense,
            np.concatenate(lines), np.concatenate(values), np.concatenate(owners))


def _fft_length(n_samples: int, max_kernel: int, hop: int) -> int:
    frames = -(-(n_samples + max_kernel) // hop)
    frames = -(-frames // 64) * 64  # coarse grid keeps the kernel cache small
    return frames * hop


def cqt_spectrogram(signal: AudioSignal, config: CqccConfig = CqccConfig()) -> Spectrogram:
    fs = signal.sample_rate
    config.validate(fs)
    hop = ms_to_samples(config.frame_hop_ms, fs)
    n = len(signal)
    if n == 0:
        raise ValueError("empty signal")
    freqs = cqt_frequencies(config, fs)
    kernels = cqt_kernels(config, fs)
    max_kernel = max(k.size for k, _ in kernels)
    fft_len = _fft_length(n, max_kernel, hop)
    n_out = fft_len // hop
    n_frames = 1 + (n - 1) // hop

    dense_bins, dense, lines, conj_k, owners = _kernel_spectra(config, fs, fft_len)
    x = np.zeros(fft_len)
    x[:n] = signal.samples
    if config.pad_mode == "reflect":
        # the correlation is circular: samples before t=0 live at the buffer end
        left = max(c for _, c in kernels)
        right = max(k.size - c for k, c in kernels)
        padded = np.pad(signal.samples, (left, right), mode="reflect")
        x[n:n + right] = padded[left + n:]
        x[fft_len - left:] = padded[:left]
    spectrum = np.fft.fft(x)
    prod = spectrum[lines] * conj_k
    slot = owners * n_out + lines % n_out
    size = len(freqs) * n_out
    folded = (np.bincount(slot, prod.real, size)
              + 1j * np.bincount(slot, prod.imag, size)).reshape(len(freqs), n_out)
    if dense_bins.size:
        full = (dense * spectrum).reshape(dense_bins.size, hop, n_out)
        folded[dense_bins] = full.sum(axis=1)
    corr = np.fft.ifft(folded, axis=1)[:, :n_frames] / hop
    power = corr.real ** 2 + corr.imag ** 2
    return Spectrogram(power.T, config.frame_hop_ms, freqs, "power")


# ---------------------------------------------------------------------------
# cepstra

def uniform_resampling_matrix(bin_freqs: np.ndarray, n_uniform: int) -> np.ndarray:
    """Linear interpolation weights mapping geometric bins onto a uniform grid."""
    grid = np.linspace(bin_freqs[0], bin_freqs[-1], n_uniform)
    weights = np.zeros((bin_freqs.size, n_uniform))
    hi = np.clip(np.searchsorted(bin_freqs, grid, side="right"), 1, bin_freqs.size - 1)
    lo = hi - 1
    frac = (grid - bin_freqs[lo]) / (bin_freqs[hi] - bin_freqs[lo])
    frac = np.clip(frac, 0.0, 1.0)
    cols = np.arange(n_uniform)
    weights[lo, cols] += 1.0 - frac
    weights[hi, cols] += frac
    return weights


def cepstra_from_log_power(log_pow: np.ndarray, bin_freqs: np.ndarray,
                           config: CqccConfig) -> np.ndarray:
    """Uniform resampling, orthonormal DCT-II and truncation to n_ceps."""
    resampled = log_pow @ uniform_resampling_matrix(bin_freqs, config.n_uniform_bins)
    return dct(resampled, type=2, norm="ortho", axis=1)[:, :config.n_ceps]


def cqcc(signal: AudioSignal, config: CqccConfig = CqccConfig()) -> np.ndarray:
    """Static cepstra plus deltas and double deltas, frames x 3*n_ceps."""
    spec = cqt_spectrogram(signal, config)
    static = cepstra_from_log_power(np.log(spec.values + config.log_floor),
                                    spec.bin_frequencies, config)
    return append_deltas(static, config.delta_window)


def dct_ortho(x: np.ndarray) -> np.ndarray:
    return dct(x, type=2, norm="ortho", axis=-1)


def idct_ortho(x: np.ndarray) -> np.ndarray:
    return idct(x, type=2, norm="ortho", axis=-1)


def deltas(features: np.ndarray, window: int) -> np.ndarray:
    """Regression deltas with edge replication."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError("deltas need a frames x dims matrix with at least one frame")
    if window < 1:
        raise ValueError("delta window must be >= 1")
    t = features.shape[0]
    padded = np.concatenate([np.repeat(features[:1], window, axis=0), features,
                             np.repeat(features[-1:], window, axis=0)])
    out = np.zeros_like(features)
    for k in range(1, window + 1):
        out += k * (padded[window + k:window + k + t] - padded[window - k:window - k + t])
    return out / (2 * sum(k * k for k in range(1, window + 1)))


def append_deltas(features: np.ndarray, window: int) -> np.ndarray:
    d1 = deltas(features, window)
    d2 = deltas(d1, window)
    return np.hstack([features, d1, d2])


# ---------------------------------------------------------------------------
# normalisation and cache files

def fit_normalizer(features: np.ndarray, std_floor: float = 1e-8):
    mean = features.mean(axis=0)
    std = np.maximum(features.std(axis=0), std_floor)
    return mean, std


def mean_variance_normalize(features: np.ndarray, mean, std, std_floor: float = 1e-8) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    mean = np.asarray(mean, dtype=float)
    std = np.maximum(np.asarray(std, dtype=float), std_floor)
    if features.shape[-1] != mean.shape[-1] or mean.shape != std.shape:
        raise ValueError(f"dimension mismatch: features {features.shape[-1]}, "
                         f"stats {mean.shape}/{std.shape}")
    return (features - mean) / std


def denormalize(features: np.ndarray, mean, std, std_floor: float = 1e-8) -> np.ndarray:
    return np.asarray(features) * np.maximum(np.asarray(std), std_floor) + np.asarray(mean)


def write_feature_cache(path, features: np.ndarray, hop_ms: float) -> None:
    with open(path, "w") as fh:
        fh.write(f"{features.shape[1]} {hop_ms!r}\n")
        for row in features:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_feature_cache(path) -> tuple[np.ndarray, float]:
    with open(path) as fh:
        dims_s, hop_s = fh.readline().split()
        dims = int(dims_s)
        rows = [np.array(line.split(), dtype=float) for line in fh if line.strip()]
    values = np.vstack(rows) if rows else np.zeros((0, dims))
    if values.shape[1] != dims:
        raise ValueError(f"{path}: header says {dims} dims, rows have {values.shape[1]}")
    return values, float(hop_s)
