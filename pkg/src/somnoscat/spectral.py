"""Numerical kernels shared by the feature extractors.

Burg AR estimation and the AR power spectral density, band powers,
moments, Pearson correlation with a t-test p-value and SVD summaries of a
3-channel window.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

PSD_GRID_SIZE = 512
RATIO_EPS = 1e-15
# reflection coefficients are kept strictly inside the unit interval so an
# exactly predictable input (a pure tone, a constant) keeps a positive
# residual power instead of collapsing the spectrum to zero
MAX_REFLECTION = 1.0 - 1e-10
# stop the lattice once the prediction error is down to float64 rounding of
# the signal power; later stages would only fit rounding noise
ERROR_FLOOR = 1e-16


@dataclass(frozen=True)
class ArModel:
    """AR model ``x_n = -sum_k a_k x_{n-k} + v_n`` with ``var(v) = noise_var``."""

    coeffs: np.ndarray
    noise_var: float
    reflection: np.ndarray

    @property
    def order(self) -> int:
        return self.coeffs.size


@dataclass(frozen=True)
class PsdEstimate:
    freqs: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class SvdFeatures:
    sigma: np.ndarray
    arith_mean: float
    geom_mean: float
    std: float
    ratio: float

    def as_array(self) -> np.ndarray:
        return np.array([*self.sigma, self.arith_mean, self.geom_mean, self.std, self.ratio])


def burg(signal, order: int) -> ArModel:
    """Fit an AR(order) model with Burg's lattice recursion.

    The signal is used as is (no mean removal).  A zero-energy signal gives
    the all-zero model with zero noise variance.  If the prediction errors
    fall to rounding level before ``order`` stages the remaining reflection
    coefficients are zero and the residual power reached so far is kept.
    """
    x = np.asarray(signal, dtype=float)
    if order < 1:
        raise ValueError("AR order must be >= 1")
    if x.ndim != 1 or x.size <= 2 * order:
        raise ValueError(f"signal of length {x.size} too short for AR({order})")

    a = np.zeros(0)
    refl = np.zeros(order)
    energy = float(np.dot(x, x)) / x.size
    if energy == 0.0:
        return ArModel(np.zeros(order), 0.0, refl)
    floor = ERROR_FLOOR * energy * x.size

    f = x[1:].copy()
    b = x[:-1].copy()
    for m in range(order):
        den = np.dot(f, f) + np.dot(b, b)
        if den <= floor:
            a = np.concatenate([a, np.zeros(order - m)])
            break
        k = float(np.clip(-2.0 * np.dot(f, b) / den, -MAX_REFLECTION, MAX_REFLECTION))
        refl[m] = k
        a = np.concatenate([a + k * a[::-1], [k]])
        energy *= 1.0 - k * k
        f, b = f + k * b, b + k * f
        f, b = f[1:], b[:-1]
    return ArModel(a, float(energy), refl)


@lru_cache(maxsize=32)
def _steering(order: int, grid_size: int, fs: float) -> tuple[np.ndarray, np.ndarray]:
    freqs = np.linspace(0.0, fs / 2.0, grid_size)
    k = np.arange(1, order + 1)
    basis = np.exp(-2j * np.pi * np.outer(freqs, k) / fs)
    basis.setflags(write=False)
    freqs.setflags(write=False)
    return freqs, basis


def ar_psd(model: ArModel, fs: float = 200.0, grid_size: int = PSD_GRID_SIZE) -> PsdEstimate:
    """One-sided AR power spectral density on a uniform grid over [0, fs/2]."""
    freqs, basis = _steering(model.order, grid_size, float(fs))
    if model.noise_var <= 0.0:
        return PsdEstimate(freqs, np.zeros(grid_size))
    denom = np.abs(1.0 + basis @ model.coeffs) ** 2
    values = model.noise_var / (fs * denom)
    values[1:-1] *= 2.0
    return PsdEstimate(freqs, values)


def burg_psd(signal, order: int = 30, fs: float = 200.0, grid_size: int = PSD_GRID_SIZE) -> PsdEstimate:
    return ar_psd(burg(signal, order), fs, grid_size)


def band_power(psd: PsdEstimate, f1: float, f2: float) -> float:
    """Trapezoidal area under the PSD between ``f1`` and ``f2`` Hz."""
    freqs, values = psd.freqs, psd.values
    if not (0.0 <= f1 < f2 <= freqs[-1] + 1e-9):
        raise ValueError(f"invalid band ({f1}, {f2}) for grid up to {freqs[-1]} Hz")
    inner = (freqs > f1) & (freqs < f2)
    xs = np.concatenate([[f1], freqs[inner], [f2]])
    ys = np.concatenate([[np.interp(f1, freqs, values)], values[inner], [np.interp(f2, freqs, values)]])
    return float(np.trapezoid(ys, xs))


def mean_frequency(psd: PsdEstimate) -> float:
    total = np.trapezoid(psd.values, psd.freqs)
    if total < RATIO_EPS:
        return 0.0
    return float(np.trapezoid(psd.freqs * psd.values, psd.freqs) / total)


def safe_ratio(num: float, den: float) -> float:
    return float(num / den) if abs(den) >= RATIO_EPS else 0.0


def moments(signal) -> dict[str, float]:
    """Population mean, std, rms, skewness and (non-excess) kurtosis."""
    x = np.asarray(signal, dtype=float)
    if x.size < 4:
        raise ValueError("need at least 4 samples")
    mu = x.mean()
    d = x - mu
    var = np.mean(d * d)
    std = np.sqrt(var)
    if std < 1e-12:
        skew = kurt = 0.0
    else:
        skew = np.mean(d**3) / std**3
        kurt = np.mean(d**4) / var**2
    return {
        "mean": float(mu),
        "std": float(std),
        "rms": float(np.sqrt(np.mean(x * x))),
        "skewness": float(skew),
        "kurtosis": float(kurt),
    }


def diffs(signal) -> tuple[np.ndarray, np.ndarray]:
    """First and second forward differences."""
    x = np.asarray(signal, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    return x[1:] - x[:-1], x[2:] - 2.0 * x[1:-1] + x[:-2]


def pearson(x, y) -> tuple[float, float]:
    """Sample correlation and its two-tailed Student-t p-value.

    A constant argument gives ``(0.0, 1.0)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("length mismatch")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if np.sqrt(sxx / n) < 1e-12 or np.sqrt(syy / n) < 1e-12:
        return 0.0, 1.0
    r = float(np.clip(np.dot(dx, dy) / np.sqrt(sxx * syy), -1.0, 1.0))
    return r, correlation_pvalue(r, n)


def correlation_pvalue(r: float, n: int) -> float:
    df = n - 2
    one_minus = 1.0 - r * r
    if one_minus <= 0.0:
        return 0.0
    t2 = r * r * df / one_minus
    # P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
    return float(special.betainc(0.5 * df, 0.5, df / (df + t2)))


def svd_features(X) -> SvdFeatures:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != 3 or X.shape[1] < 3:
        raise ValueError("expected a 3 x N matrix with N >= 3")
    s = np.linalg.svd(X, compute_uv=False)
    s = np.maximum(s, 0.0)
    ratio = 0.0 if s[0] == 0.0 else s[0] / max(s[2], 1e-12)
    return SvdFeatures(
        sigma=s,
        arith_mean=float(s.mean()),
        geom_mean=float(np.cbrt(np.prod(s))),
        std=float(s.std()),
        ratio=float(ratio),
    )
