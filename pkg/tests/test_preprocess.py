import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import signal as sps

from somnoscat.preprocess import (
    TAPER,
    WINDOW,
    _notch_coefficients,
    clip_and_normalize,
    notch_filter,
    preprocess_record,
    segment,
    window_labels,
)
from somnoscat.record_io import ChannelId, PsgRecord

FS = 200.0
T10 = np.arange(2000) / FS


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def sorted_quartile_iqr(x):
    """Interquartile range by linear interpolation between order statistics."""
    s = sorted(float(v) for v in x)

    def q(p):
        pos = (len(s) - 1) * p
        lo = int(np.floor(pos))
        hi = min(lo + 1, len(s) - 1)
        return s[lo] + (pos - lo) * (s[hi] - s[lo])

    return q(0.75) - q(0.25)


@pytest.mark.parametrize("f0", [60.0, 80.0])
def test_notch_removes_tone(f0):
    x = np.sin(2 * np.pi * f0 * T10 + 0.3)
    assert rms(notch_filter(x, f0)) <= 0.01 * rms(x)


def test_notch_zero_signal():
    assert np.array_equal(notch_filter(np.zeros(500), 60.0), np.zeros(500))


@pytest.mark.parametrize("f", [10.0, 25.0, 45.0, 56.0, 64.0, 90.0])
def test_notch_passes_tone(f):
    x = np.sin(2 * np.pi * f * T10)
    y = notch_filter(x, 60.0)
    assert abs(20 * np.log10(rms(y) / rms(x))) <= 0.5


def test_notch_composite_response_bounds():
    b, a = _notch_coefficients(60.0, FS, 2.0)
    freqs = np.linspace(0.0, 100.0, 2001)
    _, h = sps.freqz(b, a, worN=freqs, fs=FS)
    gain_db = 20 * np.log10(np.abs(h) ** 2 + 1e-300)  # forward-backward squares |H|
    outside = np.abs(freqs - 60.0) >= 3.0
    assert np.max(np.abs(gain_db[outside])) <= 0.5
    assert gain_db[np.argmin(np.abs(freqs - 60.0))] <= -40.0


def test_notch_is_zero_phase():
    x = np.sin(2 * np.pi * 10.0 * T10)
    y = notch_filter(x, 60.0)
    lag = np.argmax(np.correlate(y[500:1500], x[500:1500], "full")) - 999
    assert lag == 0


def test_notch_rejects_bad_frequency():
    with pytest.raises(ValueError):
        notch_filter(np.zeros(500), 120.0)
    with pytest.raises(ValueError):
        notch_filter(np.zeros(500), 0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_notch_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 700))
    lhs = notch_filter(a * x + b * y, 60.0)
    rhs = a * notch_filter(x, 60.0) + b * notch_filter(y, 60.0)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(rhs)))


def test_clip_alternating_signal():
    x = np.tile([-1.0, 1.0], 500)
    q = sorted_quartile_iqr(x)
    assert q == pytest.approx(2.0)
    assert np.allclose(clip_and_normalize(x), x / (8 * q), rtol=0, atol=1e-15)


def test_clip_constant_signal_is_zero():
    assert np.array_equal(clip_and_normalize(np.full(100, 3.0)), np.zeros(100))


def test_clip_matches_oracle_on_spiky_signal():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(2001)
    x[[10, 500, 1500]] = [40.0, -55.0, 70.0]
    scale = 8 * sorted_quartile_iqr(x)
    expected = np.where(np.abs(x) > scale, 0.0, x) / scale
    assert np.allclose(clip_and_normalize(x), expected, rtol=1e-12, atol=0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 300), elements=st.floats(-1e6, 1e6)))
def test_clip_output_bounded(x):
    assert np.max(np.abs(clip_and_normalize(x))) <= 1.0


def _flat_record(n=4000):
    rng = np.random.default_rng(0)
    return rng.standard_normal((13, n))


def test_preprocess_exempts_sao2_and_clips_airflow():
    data = _flat_record()
    data[ChannelId.SAO2 - 1] = 0.95
    data[ChannelId.SAO2 - 1, 2000] = 500.0
    airflow = data[ChannelId.AIRFLOW - 1]
    iqr = sorted_quartile_iqr(airflow)
    airflow[2000] = 20 * iqr
    out = preprocess_record(PsgRecord("p", data))
    assert out.channel(ChannelId.SAO2)[2000] > 100.0
    assert out.channel(ChannelId.AIRFLOW)[2000] == 0.0
    assert np.max(np.abs(out.data[:11])) <= 1.0


def test_taper_shape():
    assert TAPER.shape == (WINDOW,)
    assert TAPER[0] == 0.0 and TAPER[-1] == 0.0
    assert np.allclose(TAPER, TAPER[::-1])
    # even length: the two centre samples sit half a step from the apex
    assert TAPER[499] == pytest.approx(1.0 - 1.0 / 999, abs=1e-15)
    assert TAPER[500] == pytest.approx(1.0 - 1.0 / 999, abs=1e-15)
    assert TAPER.max() == pytest.approx(1.0 - 1.0 / 999, abs=1e-15)


def test_segment_counts():
    assert segment(np.zeros(420000)).n_windows == 420
    w = segment(np.zeros(1500))
    assert w.n_windows == 1 and w.windows.shape == (1, 1000)
    with pytest.raises(ValueError, match="record too short"):
        segment(np.zeros(999))


def test_segment_constant_is_taper():
    w = segment(np.ones(3000))
    assert np.array_equal(w.windows, np.tile(TAPER, (3, 1)))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_segment_of_concatenation_is_blockwise(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 1000))
    joint = segment(np.concatenate([a, b])).windows
    assert np.array_equal(joint[0], segment(a).windows[0])
    assert np.array_equal(joint[1], segment(b).windows[0])


def test_window_labels_examples():
    assert window_labels(np.ones(1000, dtype=np.int8)).tolist() == [1]
    assert window_labels(np.r_[np.full(600, -1), np.zeros(400)]).tolist() == [-1]
    assert window_labels(np.r_[np.ones(500), np.zeros(500)]).tolist() == [1]
    assert window_labels(np.r_[np.full(500, -1), np.zeros(500)]).tolist() == [-1]
    assert window_labels(np.zeros(2500)).tolist() == [0, 0]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_window_labels_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    labels = rng.choice([-1, 0, 1], size=1000, p=rng.dirichlet([1, 1, 1]))
    assert window_labels(labels).tolist() == window_labels(rng.permutation(labels)).tolist()
