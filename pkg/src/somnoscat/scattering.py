"""Two-layer Gabor wavelet scattering of 5-second windows.

Filters are Gaussians in the frequency domain supported on positive
frequencies (analytic).  The first ``J`` wavelets of a bank are dilations of
the mother wavelet by ``2**(1/Q)``; ``P`` extra filters with the bandwidth of
the last dilation cover the low-frequency gap at linear spacing.  Each bank
is scaled so that ``|phi|^2 + sum_j |psi_j|^2 <= 1`` on the FFT grid.

Coefficients are averaged over the window, so every channel-window yields a
single vector ``[S0, S1 (14), S2 (frequency-decreasing paths)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np

from .preprocess import WINDOW, WindowedChannel
from .record_io import ChannelId, FS

SCATTER_CHANNELS = (
    ChannelId.EOG_L, ChannelId.ABDOMINAL, ChannelId.CHEST,
    ChannelId.AIRFLOW, ChannelId.SAO2, ChannelId.ECG,
)
N_FFT = 2048
AVERAGING_SCALE = 5.0
DECIMATE = 4
TARGET_DIM = 65

# Gaussian half-width at half maximum, in standard deviations
_HALF_MAX = np.sqrt(2.0 * np.log(2.0))


def mother_center(q: int, fs: float = FS) -> float:
    return (1.0 + 2.0 ** (-1.0 / q)) / 2.0 * fs / 2.0


def phi_hat(freqs: np.ndarray, averaging_scale: float = AVERAGING_SCALE) -> np.ndarray:
    """Gaussian low-pass whose time-domain std is a quarter of the scale."""
    sigma_t = averaging_scale / 4.0
    return np.exp(-0.5 * (2.0 * np.pi * freqs * sigma_t) ** 2)


@dataclass(frozen=True)
class FilterBank:
    q: int
    j: int
    p: int
    fs: float
    mother_center: float
    centers: np.ndarray
    sigmas: np.ndarray
    scale: float
    n_fft: int
    wavelets: np.ndarray = field(repr=False)  # (J + P, n_fft) on the FFT grid
    phi: np.ndarray = field(repr=False)

    def __len__(self):
        return self.centers.size

    def response(self, freqs) -> np.ndarray:
        """Magnitude of every filter at arbitrary frequencies (Hz)."""
        f = np.asarray(freqs, dtype=float)
        g = np.exp(-0.5 * ((f[None, :] - self.centers[:, None]) / self.sigmas[:, None]) ** 2)
        return self.scale * np.where(f[None, :] > 0, g, 0.0)

    def littlewood_paley(self) -> np.ndarray:
        return np.abs(self.phi) ** 2 + np.sum(np.abs(self.wavelets) ** 2, axis=0)


def fft_freqs(n_fft: int = N_FFT, fs: float = FS) -> np.ndarray:
    """Signed FFT bin frequencies with the Nyquist bin taken as positive."""
    f = np.fft.fftfreq(n_fft, 1.0 / fs)
    if n_fft % 2 == 0:
        f[n_fft // 2] = fs / 2.0
    return f


def build_bank(
    q: int,
    j: int,
    p: int,
    fs: float = FS,
    n_fft: int = N_FFT,
    averaging_scale: float = AVERAGING_SCALE,
) -> FilterBank:
    if q < 1 or j < 1 or p < 0:
        raise ValueError(f"invalid filter bank parameters Q={q}, J={j}, P={p}")
    r = 2.0 ** (-1.0 / q)
    xi0 = mother_center(q, fs)
    log_centers = xi0 * r ** np.arange(j)
    # adjacent dilations cross at half maximum
    log_sigmas = log_centers * (1.0 - r) / (_HALF_MAX * (1.0 + r))
    last = log_centers[-1]
    lin_centers = last * np.arange(p, 0, -1) / (p + 1)
    centers = np.concatenate([log_centers, lin_centers])
    sigmas = np.concatenate([log_sigmas, np.full(p, log_sigmas[-1])])

    freqs = fft_freqs(n_fft, fs)
    phi = phi_hat(np.abs(freqs), averaging_scale)
    raw = np.exp(-0.5 * ((freqs[None, :] - centers[:, None]) / sigmas[:, None]) ** 2)
    raw[:, freqs <= 0] = 0.0
    lp_psi = np.sum(raw**2, axis=0)
    live = lp_psi > 0
    scale2 = min(1.0, float(np.min((1.0 - phi[live] ** 2) / lp_psi[live])))
    scale = np.sqrt(max(scale2, 0.0))
    return FilterBank(
        q=q, j=j, p=p, fs=fs,
        mother_center=xi0,
        centers=centers,
        sigmas=sigmas,
        scale=scale,
        n_fft=n_fft,
        wavelets=scale * raw,
        phi=phi,
    )


@dataclass(frozen=True)
class ScatteringNet:
    bank1: FilterBank
    bank2: FilterBank
    window_length: int
    paths: tuple[tuple[int, int], ...]
    average_kernel: np.ndarray = field(repr=False)

    @property
    def n_coefficients(self) -> int:
        return 1 + len(self.bank1) + len(self.paths)

    @property
    def phi(self) -> np.ndarray:
        return self.bank1.phi


def frequency_decreasing_paths(bank1: FilterBank, bank2: FilterBank) -> tuple[tuple[int, int], ...]:
    return tuple(
        (j1, j2)
        for j1, c1 in enumerate(bank1.centers)
        for j2, c2 in enumerate(bank2.centers)
        if c2 < c1
    )


def build_net(
    fs: float = FS,
    window_length: int = WINDOW,
    n_fft: int = N_FFT,
    averaging_scale: float = AVERAGING_SCALE,
) -> ScatteringNet:
    if n_fft < window_length:
        raise ValueError("transform length shorter than the window")
    bank1 = build_bank(2, 13, 1, fs, n_fft, averaging_scale)
    bank2 = build_bank(1, 8, 0, fs, n_fft, averaging_scale)
    inside = np.zeros(n_fft)
    inside[:window_length] = 1.0
    # mean over the window of (u * phi) equals dot(u, kernel)
    kernel = np.real(np.fft.ifft(np.fft.fft(inside) * bank1.phi)) / window_length
    kernel.setflags(write=False)
    return ScatteringNet(bank1, bank2, window_length, frequency_decreasing_paths(bank1, bank2), kernel)


@lru_cache(maxsize=4)
def default_net() -> ScatteringNet:
    return build_net()


@dataclass(frozen=True)
class ScatterCoefficients:
    s0: np.ndarray  # (M,)
    s1: np.ndarray  # (M, J1 + P1)
    s2: np.ndarray  # (M, n_paths), ordered as net.paths
    u1_energy: np.ndarray  # (M, J1 + P1): squared L2 norm of U1 over the padded length

    def vector(self) -> np.ndarray:
        return np.concatenate([self.s0[:, None], self.s1, self.s2], axis=1)


def scatter_windows(windows, net: ScatteringNet | None = None) -> ScatterCoefficients:
    """Scattering coefficients of a batch of windows, shape ``(M, L)``."""
    net = net or default_net()
    x = np.atleast_2d(np.asarray(windows, dtype=float))
    m, length = x.shape
    if length > net.window_length:
        raise ValueError(f"window of {length} samples exceeds {net.window_length}")
    n_fft = net.bank1.n_fft
    padded = np.zeros((m, n_fft))
    padded[:, :length] = x
    kernel = net.average_kernel

    x_hat = np.fft.fft(padded, axis=1)
    u1 = np.abs(np.fft.ifft(x_hat[:, None, :] * net.bank1.wavelets[None], axis=2))
    s0 = padded @ kernel
    s1 = u1 @ kernel
    u1_hat = np.fft.fft(u1, axis=2)

    s2 = np.empty((m, len(net.paths)))
    col = 0
    for j1 in range(len(net.bank1)):
        j2s = [b for a, b in net.paths if a == j1]
        if not j2s:
            continue
        u2 = np.abs(np.fft.ifft(u1_hat[:, j1, None, :] * net.bank2.wavelets[j2s][None], axis=2))
        s2[:, col : col + len(j2s)] = u2 @ kernel
        col += len(j2s)
    return ScatterCoefficients(s0, s1, s2, np.sum(u1**2, axis=2))


def scatter_window(window, net: ScatteringNet | None = None) -> ScatterCoefficients:
    return scatter_windows(np.asarray(window, dtype=float)[None, :], net)


def reduce_coefficients(vectors: np.ndarray, decimate: int = DECIMATE, target_dim: int = TARGET_DIM) -> np.ndarray:
    """Keep every ``decimate``-th coefficient, then truncate or zero-pad."""
    if decimate < 1 or target_dim < 1:
        raise ValueError("decimate and target_dim must be positive")
    kept = vectors[:, ::decimate][:, :target_dim]
    out = np.zeros((vectors.shape[0], target_dim))
    out[:, : kept.shape[1]] = kept
    return out


def scattering_features(
    windowed: Mapping[ChannelId, WindowedChannel],
    channels=SCATTER_CHANNELS,
    decimate: int = DECIMATE,
    target_dim: int = TARGET_DIM,
    net: ScatteringNet | None = None,
) -> np.ndarray:
    """Per-window scattering features, ``target_dim`` per channel."""
    net = net or default_net()
    blocks = [
        reduce_coefficients(scatter_windows(windowed[ch].windows, net).vector(), decimate, target_dim)
        for ch in channels
    ]
    return np.concatenate(blocks, axis=1)


def scattering_feature_names(channels=SCATTER_CHANNELS, target_dim: int = TARGET_DIM) -> tuple[str, ...]:
    short = {
        ChannelId.EOG_L: "eog", ChannelId.ABDOMINAL: "abd", ChannelId.CHEST: "chest",
        ChannelId.AIRFLOW: "airflow", ChannelId.SAO2: "sao2", ChannelId.ECG: "ecg",
    }
    return tuple(f"scat_{short.get(ch, ch.label)}_{i:02d}" for ch in channels for i in range(target_dim))
