"""The 75 physiology-informed features of one 5-second window.

Column order is frozen in :data:`PHYSIO_FEATURE_NAMES` (layout version
:data:`LAYOUT_VERSION`); downstream models and stored feature matrices
depend on it.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .preprocess import WindowedChannel
from .record_io import ChannelId
from .spectral import band_power, burg, burg_psd, diffs, mean_frequency, moments, pearson, safe_ratio, svd_features

LAYOUT_VERSION = 1
AR_ORDER = 10
PSD_ORDER = 30

FRONTAL = (ChannelId.F3_M2, ChannelId.F4_M1, ChannelId.EOG_L)
CENTRAL_OCCIPITAL = (ChannelId.C3_M2, ChannelId.C4_M1, ChannelId.O1_M2, ChannelId.O2_M1)

_SHORT = {
    ChannelId.F3_M2: "f3m2",
    ChannelId.F4_M1: "f4m1",
    ChannelId.C3_M2: "c3m2",
    ChannelId.C4_M1: "c4m1",
    ChannelId.O1_M2: "o1m2",
    ChannelId.O2_M1: "o2m1",
    ChannelId.EOG_L: "eog",
}

CROSS_NAMES = (
    "cross_r_abd_chest", "cross_p_abd_chest",
    "cross_r_abd_airflow", "cross_p_abd_airflow",
    "cross_r_chest_airflow", "cross_p_chest_airflow",
    "cross_sv1", "cross_sv2", "cross_sv3",
    "cross_sv_mean", "cross_sv_gmean", "cross_sv_std", "cross_sv1_over_sv3",
)
ABDOMINAL_NAMES = (
    "abd_std", "abd_rms", "abd_ar10_a9",
    "abd_P0.01-0.4", "abd_P0.4-0.75", "abd_P0.75-1.2_over_P1.2-1.6",
)
CHEST_NAMES = ("chest_rms", "chest_std", "chest_skew", "chest_P0.01-0.4", "chest_P0.75-1.2_over_P1.2-1.6")
AIRFLOW_NAMES = (
    "airflow_rms", "airflow_skew",
    "airflow_P0.01-0.4", "airflow_P0.4-0.75", "airflow_P0.75-1.2", "airflow_P1.2-1.6", "airflow_P1.6-3",
    "airflow_P0.4-0.75_x_P1.2-1.6", "airflow_P0.75-1.2_x_P1.2-1.6",
    "airflow_P0.75-1.2_over_P1.2-1.6", "airflow_P0.01-0.4_over_P0.75-1.2+P1.6-3",
    "airflow_std_d2_x_std_d1_over_std",
)
SAO2_NAMES = ("sao2_mean", "sao2_std", "sao2_rms", "sao2_mean_freq", "sao2_std_d1")
CHIN_NAMES = ("chin_rms", "chin_kurt", "chin_P0.1-15_over_P30-45+P70-100")
ECG_NAMES = ("ecg_P7.5-12_over_P12-16", "ecg_P12-16_over_P7.5-12+P16-25")


def _frontal_names(ch: ChannelId) -> tuple[str, ...]:
    s = _SHORT[ch]
    return (f"{s}_rms", f"{s}_std", f"{s}_skew", f"{s}_kurt", f"{s}_ar10_a3", f"{s}_ar10_a5", f"{s}_P0.1-4")


def _co_names(ch: ChannelId) -> tuple[str, ...]:
    s = _SHORT[ch]
    return (f"{s}_rms", f"{s}_ar10_a3")


PHYSIO_GROUPS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("cross_channel", CROSS_NAMES),
    ("abdominal", ABDOMINAL_NAMES),
    ("chest", CHEST_NAMES),
    ("airflow", AIRFLOW_NAMES),
    ("sao2", SAO2_NAMES),
    *((f"eeg_{_SHORT[ch]}" if ch != ChannelId.EOG_L else "eog", _frontal_names(ch)) for ch in FRONTAL),
    *((f"eeg_{_SHORT[ch]}", _co_names(ch)) for ch in CENTRAL_OCCIPITAL),
    ("chin_emg", CHIN_NAMES),
    ("ecg", ECG_NAMES),
)
PHYSIO_FEATURE_NAMES: tuple[str, ...] = tuple(n for _, names in PHYSIO_GROUPS for n in names)
N_PHYSIO = len(PHYSIO_FEATURE_NAMES)
assert N_PHYSIO == 75


def _ar10(x: np.ndarray) -> np.ndarray:
    return burg(x, AR_ORDER).coeffs


def cross_channel(abd, chest, airflow) -> np.ndarray:
    sig = [np.asarray(v, dtype=float) for v in (abd, chest, airflow)]
    out = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        out.extend(pearson(sig[i], sig[j]))
    out.extend(svd_features(np.vstack(sig)).as_array())
    return np.array(out)


def abdominal_features(window) -> np.ndarray:
    x = np.asarray(window, dtype=float)
    m = moments(x)
    psd = burg_psd(x, PSD_ORDER)
    return np.array([
        m["std"],
        m["rms"],
        _ar10(x)[8],
        band_power(psd, 0.01, 0.4),
        band_power(psd, 0.4, 0.75),
        safe_ratio(band_power(psd, 0.75, 1.2), band_power(psd, 1.2, 1.6)),
    ])


def chest_features(window) -> np.ndarray:
    x = np.asarray(window, dtype=float)
    m = moments(x)
    psd = burg_psd(x, PSD_ORDER)
    return np.array([
        m["rms"],
        m["std"],
        m["skewness"],
        band_power(psd, 0.01, 0.4),
        safe_ratio(band_power(psd, 0.75, 1.2), band_power(psd, 1.2, 1.6)),
    ])


def airflow_features(window) -> np.ndarray:
    x = np.asarray(window, dtype=float)
    m = moments(x)
    psd = burg_psd(x, PSD_ORDER)
    p1, p2, p3, p4, p5 = (
        band_power(psd, lo, hi) for lo, hi in ((0.01, 0.4), (0.4, 0.75), (0.75, 1.2), (1.2, 1.6), (1.6, 3.0))
    )
    d1, d2 = diffs(x)
    return np.array([
        m["rms"],
        m["skewness"],
        p1, p2, p3, p4, p5,
        p2 * p4,
        p3 * p4,
        safe_ratio(p3, p4),
        safe_ratio(p1, p3 + p5),
        safe_ratio(d2.std() * d1.std(), m["std"]),
    ])


def sao2_features(window) -> np.ndarray:
    x = np.asarray(window, dtype=float)
    m = moments(x)
    d1, _ = diffs(x)
    return np.array([m["mean"], m["std"], m["rms"], mean_frequency(burg_psd(x, PSD_ORDER)), d1.std()])


def eeg_frontal_eog_features(window) -> np.ndarray:
    x = np.asarray(window, dtype=float)
    m = moments(x)
    a = _ar10(x)
    return np.array([
        m["rms"], m["std"], m["skewness"], m["kurtosis"],
        a[2], a[4],
        band_power(burg_psd(x, PSD_ORDER), 0.1, 4.0),
    ])


def eeg_co_features(window) -> np.ndarray:
    x = np.asarray(window, dtype=float)
    return np.array([moments(x)["rms"], _ar10(x)[2]])


def chin_emg_features(window) -> np.ndarray:
    x = np.asarray(window, dtype=float)
    m = moments(x)
    psd = burg_psd(x, PSD_ORDER)
    ratio = safe_ratio(band_power(psd, 0.1, 15.0), band_power(psd, 30.0, 45.0) + band_power(psd, 70.0, 100.0))
    return np.array([m["rms"], m["kurtosis"], ratio])


def ecg_features(window) -> np.ndarray:
    psd = burg_psd(np.asarray(window, dtype=float), PSD_ORDER)
    alpha = band_power(psd, 7.5, 12.0)
    sigma = band_power(psd, 12.0, 16.0)
    beta = band_power(psd, 16.0, 25.0)
    return np.array([safe_ratio(alpha, sigma), safe_ratio(sigma, alpha + beta)])


def physio_window(win: Mapping[ChannelId, np.ndarray]) -> np.ndarray:
    """75 features from one window given per-channel 1000-sample vectors."""
    parts = [
        cross_channel(win[ChannelId.ABDOMINAL], win[ChannelId.CHEST], win[ChannelId.AIRFLOW]),
        abdominal_features(win[ChannelId.ABDOMINAL]),
        chest_features(win[ChannelId.CHEST]),
        airflow_features(win[ChannelId.AIRFLOW]),
        sao2_features(win[ChannelId.SAO2]),
        *(eeg_frontal_eog_features(win[ch]) for ch in FRONTAL),
        *(eeg_co_features(win[ch]) for ch in CENTRAL_OCCIPITAL),
        chin_emg_features(win[ChannelId.CHIN_EMG]),
        ecg_features(win[ChannelId.ECG]),
    ]
    return np.concatenate(parts)


def extract_physio(windowed: Mapping[ChannelId, WindowedChannel], m: int) -> np.ndarray:
    counts = {wc.n_windows for wc in windowed.values()}
    if len(counts) != 1:
        raise ValueError(f"inconsistent window counts across channels: {sorted(counts)}")
    if missing := set(ChannelId) - set(windowed):
        raise ValueError(f"missing channels: {sorted(c.label for c in missing)}")
    return physio_window({ch: wc.windows[m] for ch, wc in windowed.items()})


def physio_matrix(windowed: Mapping[ChannelId, WindowedChannel]) -> np.ndarray:
    n = next(iter(windowed.values())).n_windows
    if n == 0:
        return np.zeros((0, N_PHYSIO))
    return np.vstack([extract_physio(windowed, m) for m in range(n)])
