"""Powerline notch filtering, IQR-based clipping/normalization and windowing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .record_io import AnnotationTrack, ChannelId, FS, PsgRecord

WINDOW_SECONDS = 5
WINDOW = WINDOW_SECONDS * FS
NOTCH_FREQS = (60.0, 80.0)
NOTCH_BANDWIDTH = 2.0
IQR_FACTOR = 8.0

# channels exempt from clipping/normalization
UNSCALED = (ChannelId.SAO2, ChannelId.ECG)


def triangular_taper(length: int = WINDOW) -> np.ndarray:
    k = np.arange(length)
    return 1.0 - np.abs(2.0 * k / (length - 1) - 1.0)


TAPER = triangular_taper()
TAPER.setflags(write=False)


@dataclass(frozen=True)
class WindowedChannel:
    windows: np.ndarray
    weight_profile: np.ndarray
    source: ChannelId | None = None

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]


def _notch_coefficients(f0: float, fs: float, bandwidth: float):
    # Single-pass width chosen so the forward-backward cascade (|H|^4) has
    # its -3 dB points at f0 +- bandwidth/2.
    half = bandwidth / 2.0
    single = 2.0 * half * np.sqrt(1.0 / np.sqrt(0.5) - 1.0)
    return sps.iirnotch(f0, f0 / single, fs)


def _edge_extension(x: np.ndarray, f0: float, fs: float, pad: int, fit: int) -> np.ndarray:
    """Outward continuation of ``x[0], x[1], ...`` past its first sample.

    The f0 component (least squares over ``fit`` samples) is continued as a
    sinusoid and the residual is odd-reflected.  Both steps are linear in x,
    and a tone at f0 continues exactly so no filter transient reaches the data.
    """
    om = 2.0 * np.pi * f0 / fs
    k = np.arange(max(fit, pad + 1))
    basis = np.column_stack([np.cos(om * k), np.sin(om * k)])
    coef, *_ = np.linalg.lstsq(basis[:fit], x[:fit], rcond=None)
    kk = -np.arange(1, pad + 1)
    outward = np.column_stack([np.cos(om * kk), np.sin(om * kk)]) @ coef
    resid = x[: pad + 1] - basis[: pad + 1] @ coef
    return outward + (2.0 * resid[0] - resid[1 : pad + 1])


def notch_filter(signal, f0: float, fs: float = FS, bandwidth: float = NOTCH_BANDWIDTH) -> np.ndarray:
    """Zero-phase IIR notch at ``f0`` Hz (forward-backward application)."""
    x = np.asarray(signal, dtype=float)
    if not 0.0 < f0 < fs / 2.0:
        raise ValueError(f"notch frequency {f0} outside (0, {fs / 2})")
    if x.size < 64:
        raise ValueError("signal too short for notch filtering")
    b, a = _notch_coefficients(f0, fs, bandwidth)
    pad = min(3 * int(fs), x.size - 1)
    fit = min(2 * int(fs), x.size)
    left = _edge_extension(x, f0, fs, pad, fit)[::-1]
    right = _edge_extension(x[::-1], f0, fs, pad, fit)
    y = sps.filtfilt(b, a, np.concatenate([left, x, right]), padlen=0)
    return y[pad : pad + x.size]


def interquartile_range(x: np.ndarray) -> float:
    q75, q25 = np.percentile(x, [75.0, 25.0])
    return float(q75 - q25)


def clip_and_normalize(signal) -> np.ndarray:
    """Zero samples above 8 x IQR in magnitude, then divide by 8 x IQR."""
    x = np.asarray(signal, dtype=float)
    if x.size == 0:
        raise ValueError("empty signal")
    scale = IQR_FACTOR * interquartile_range(x)
    if scale < IQR_FACTOR * 1e-12:
        return np.zeros_like(x)
    y = np.where(np.abs(x) > scale, 0.0, x)
    return y / scale


def preprocess_record(record: PsgRecord) -> PsgRecord:
    out = np.empty(record.data.shape, dtype=float)
    for ch in ChannelId:
        x = record.channel(ch).astype(float)
        for f0 in NOTCH_FREQS:
            x = notch_filter(x, f0, record.fs)
        if ch not in UNSCALED:
            x = clip_and_normalize(x)
        out[ch - 1] = x
    return record.replace_data(out)


def segment(signal, source: ChannelId | None = None) -> WindowedChannel:
    """Non-overlapping 1000-sample windows weighted by the triangular taper.

    Samples after the last complete window are dropped.
    """
    x = np.asarray(signal, dtype=float)
    if x.size < WINDOW:
        raise ValueError("record too short")
    m = x.size // WINDOW
    windows = x[: m * WINDOW].reshape(m, WINDOW) * TAPER
    return WindowedChannel(windows, TAPER, source)


def segment_record(record: PsgRecord) -> dict[ChannelId, WindowedChannel]:
    return {ch: segment(record.channel(ch), ch) for ch in ChannelId}


_TIE_ORDER = (1, -1, 0)


def window_labels(track: AnnotationTrack | np.ndarray) -> np.ndarray:
    """Majority label per 5-s window; ties resolved as 1 > -1 > 0."""
    labels = track.labels if isinstance(track, AnnotationTrack) else np.asarray(track)
    if labels.size < WINDOW:
        raise ValueError("record too short")
    m = labels.size // WINDOW
    blocks = labels[: m * WINDOW].reshape(m, WINDOW)
    counts = np.stack([(blocks == v).sum(axis=1) for v in _TIE_ORDER], axis=1)
    # argmax returns the first maximum, i.e. the highest-priority label
    return np.asarray(_TIE_ORDER, dtype=np.int8)[np.argmax(counts, axis=1)]
