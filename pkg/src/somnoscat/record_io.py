"""PSG record storage and deterministic synthetic recordings.

A record lives in its own directory::

    header.txt      key=value lines (id, fs, n_samples, channels)
    ch01.f32 ...    one little-endian float32 blob per channel
    ch13.f32
    arousal.i8      optional per-sample labels (-1, 0, 1)
    pred.f32        optional per-sample target-arousal probability
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FS = 200
HEADER_NAME = "header.txt"
ANNOTATION_NAME = "arousal.i8"
PREDICTION_NAME = "pred.f32"


class ChannelId(enum.IntEnum):
    """The 13 PSG channels, numbered as in the challenge montage."""

    F3_M2 = 1
    F4_M1 = 2
    C3_M2 = 3
    C4_M1 = 4
    O1_M2 = 5
    O2_M1 = 6
    EOG_L = 7
    CHIN_EMG = 8
    ABDOMINAL = 9
    CHEST = 10
    AIRFLOW = 11
    SAO2 = 12
    ECG = 13

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "ChannelId":
        try:
            return _BY_LABEL[label]
        except KeyError:
            raise ValueError(f"unknown channel label {label!r}") from None


_LABELS = {
    ChannelId.F3_M2: "F3-M2",
    ChannelId.F4_M1: "F4-M1",
    ChannelId.C3_M2: "C3-M2",
    ChannelId.C4_M1: "C4-M1",
    ChannelId.O1_M2: "O1-M2",
    ChannelId.O2_M1: "O2-M1",
    ChannelId.EOG_L: "EOG-L",
    ChannelId.CHIN_EMG: "ChinEMG",
    ChannelId.ABDOMINAL: "Abdominal",
    ChannelId.CHEST: "Chest",
    ChannelId.AIRFLOW: "Airflow",
    ChannelId.SAO2: "SaO2",
    ChannelId.ECG: "ECG",
}
_BY_LABEL = {v: k for k, v in _LABELS.items()}
CHANNEL_LABELS = tuple(_LABELS[c] for c in ChannelId)
N_CHANNELS = len(ChannelId)


class RecordFormatError(ValueError):
    """Base class for malformed records and tracks."""


class MissingChannelError(RecordFormatError):
    pass


class LengthMismatchError(RecordFormatError):
    pass


class SamplingRateError(RecordFormatError):
    pass


class NonFiniteError(RecordFormatError):
    pass


class LabelRangeError(RecordFormatError):
    pass


class EmptyTrackError(RecordFormatError):
    pass


@dataclass(frozen=True)
class PsgRecord:
    """13 equal-length channels sampled at 200 Hz.

    ``data`` has shape ``(13, n_samples)`` with rows in :class:`ChannelId`
    order.  The dtype is kept as given; records written to disk are float32.
    """

    id: str
    data: np.ndarray
    fs: int = FS

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise MissingChannelError(f"expected a 2-D channel array, got shape {data.shape}")
        if data.shape[0] != N_CHANNELS:
            raise MissingChannelError(f"expected {N_CHANNELS} channels, got {data.shape[0]}")
        if self.fs != FS:
            raise SamplingRateError(f"expected fs={FS} Hz, got {self.fs}")
        if data.shape[1] == 0:
            raise LengthMismatchError("record has no samples")
        if not np.all(np.isfinite(data)):
            bad = int(np.argwhere(~np.isfinite(data))[0, 0]) + 1
            raise NonFiniteError(f"non-finite sample in channel {ChannelId(bad).label}")
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def channel(self, ch: ChannelId | int) -> np.ndarray:
        return self.data[int(ch) - 1]

    @property
    def channels(self) -> dict[ChannelId, np.ndarray]:
        return {c: self.data[c - 1] for c in ChannelId}

    def replace_data(self, data: np.ndarray) -> "PsgRecord":
        return PsgRecord(self.id, data, self.fs)


@dataclass(frozen=True)
class AnnotationTrack:
    """Per-sample labels: 1 target arousal, 0 non-arousal, -1 non-target."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise EmptyTrackError("empty track")
        if not np.all(np.isin(labels, (-1, 0, 1))):
            raise LabelRangeError("labels must be in {-1, 0, 1}")
        object.__setattr__(self, "labels", labels.astype(np.int8))

    def __len__(self):
        return self.labels.size


@dataclass(frozen=True)
class PredictionTrack:
    """Per-sample probability of target arousal."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs)
        if probs.ndim != 1 or probs.size == 0:
            raise EmptyTrackError("empty track")
        if not np.all(np.isfinite(probs)) or probs.min() < 0.0 or probs.max() > 1.0:
            raise LabelRangeError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "probs", probs.astype(np.float32))

    def __len__(self):
        return self.probs.size


# ---------------------------------------------------------------- disk format


def _channel_file(index: int) -> str:
    return f"ch{index:02d}.f32"


def _read_header(path: Path) -> dict[str, str]:
    header = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise RecordFormatError(f"malformed header line {line!r}")
        header[key.strip()] = value.strip()
    for key in ("id", "fs", "n_samples", "channels"):
        if key not in header:
            raise RecordFormatError(f"header missing field {key!r}")
    return header


def store_record(record: PsgRecord, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = [
        f"id={record.id}",
        f"fs={record.fs}",
        f"n_samples={record.n_samples}",
        "channels=" + ",".join(CHANNEL_LABELS),
    ]
    (path / HEADER_NAME).write_text("\n".join(lines) + "\n")
    for ch in ChannelId:
        record.channel(ch).astype("<f4").tofile(path / _channel_file(ch))


def load_record(path: str | Path) -> PsgRecord:
    """Read and validate a record directory.

    Raises
    ------
    MissingChannelError, LengthMismatchError, SamplingRateError, NonFiniteError
        Each invariant violation has its own exception type.
    """
    path = Path(path)
    header = _read_header(path / HEADER_NAME)
    labels = [s for s in header["channels"].split(",") if s]
    if len(labels) != N_CHANNELS:
        raise MissingChannelError(f"expected {N_CHANNELS} channels, got {len(labels)}")
    if tuple(labels) != CHANNEL_LABELS:
        raise MissingChannelError(f"channel order must be {','.join(CHANNEL_LABELS)}")
    fs = float(header["fs"])
    if fs != FS:
        raise SamplingRateError(f"expected fs={FS} Hz, got {header['fs']}")
    n = int(header["n_samples"])
    data = np.empty((N_CHANNELS, n), dtype=np.float32)
    for ch in ChannelId:
        blob = path / _channel_file(ch)
        if not blob.exists():
            raise MissingChannelError(f"missing payload for channel {ch.label}")
        values = np.fromfile(blob, dtype="<f4")
        if values.size != n:
            raise LengthMismatchError(
                f"channel {ch.label}: header declares {n} samples, payload has {values.size}"
            )
        data[ch - 1] = values
    return PsgRecord(header["id"], data, FS)


def _track_path(path: str | Path, default_name: str) -> Path:
    path = Path(path)
    return path / default_name if path.is_dir() else path


def store_annotations(track: AnnotationTrack, path: str | Path) -> None:
    track.labels.astype("i1").tofile(_track_path(path, ANNOTATION_NAME))


def load_annotations(path: str | Path) -> AnnotationTrack:
    return AnnotationTrack(np.fromfile(_track_path(path, ANNOTATION_NAME), dtype="i1"))


def store_predictions(track: PredictionTrack, path: str | Path) -> None:
    track.probs.astype("<f4").tofile(_track_path(path, PREDICTION_NAME))


def load_predictions(path: str | Path) -> PredictionTrack:
    return PredictionTrack(np.fromfile(_track_path(path, PREDICTION_NAME), dtype="<f4"))


def list_records(root: str | Path) -> list[Path]:
    """Record directories under ``root``, sorted by name."""
    root = Path(root)
    return sorted(p for p in root.iterdir() if (p / HEADER_NAME).is_file())


# ---------------------------------------------------------- synthetic records

EEG_CHANNELS = (
    ChannelId.F3_M2, ChannelId.F4_M1, ChannelId.C3_M2,
    ChannelId.C4_M1, ChannelId.O1_M2, ChannelId.O2_M1,
)
RESP_CHANNELS = (ChannelId.ABDOMINAL, ChannelId.CHEST, ChannelId.AIRFLOW)

TARGET_RESP_GAIN = 2.5
NON_TARGET_RESP_GAIN = 0.3
DELTA_BURST_GAIN = 3.0


def _band_noise(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    """Unit-variance Gaussian noise with spectrum confined to [lo, hi] Hz."""
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / FS)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    x = np.fft.irfft(spec, n)
    sd = x.std()
    return x / sd if sd > 0 else x


def _check_windows(duration_s: float, windows: Sequence[tuple[float, float, str]]) -> list:
    out = []
    for start, end, kind in windows:
        if kind not in ("target", "non_target"):
            raise ValueError(f"unknown arousal kind {kind!r}")
        if not 0 <= start < end <= duration_s:
            raise ValueError(f"window ({start}, {end}) outside [0, {duration_s}]")
        out.append((float(start), float(end), kind))
    out.sort()
    for (s0, e0, _), (s1, e1, _) in zip(out, out[1:]):
        if s1 < e0:
            raise ValueError(f"overlapping windows ({s0}, {e0}) and ({s1}, {e1})")
    return out


def generate_synthetic(
    seed: int,
    duration_s: float,
    arousal_windows: Iterable[tuple[float, float, str]] = (),
    record_id: str | None = None,
) -> tuple[PsgRecord, AnnotationTrack]:
    """Deterministic synthetic PSG record with labelled arousal windows.

    Baseline channels are band-limited noise per channel class.  Target
    windows raise the respiratory amplitude and add an EEG delta burst;
    non-target windows damp breathing and dip SaO2.
    """
    if duration_s <= 0 or abs(duration_s / 5 - round(duration_s / 5)) > 1e-9:
        raise ValueError("duration_s must be a positive multiple of 5")
    windows = _check_windows(duration_s, list(arousal_windows))
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * FS))
    t = np.arange(n) / FS

    labels = np.zeros(n, dtype=np.int8)
    resp_gain = np.ones(n)
    delta_gain = np.zeros(n)
    sao2_dip = np.zeros(n)
    for start, end, kind in windows:
        sl = slice(int(round(start * FS)), int(round(end * FS)))
        if kind == "target":
            labels[sl] = 1
            resp_gain[sl] = TARGET_RESP_GAIN
            delta_gain[sl] = DELTA_BURST_GAIN
        else:
            labels[sl] = -1
            resp_gain[sl] = NON_TARGET_RESP_GAIN
            sao2_dip[sl] = 0.03

    data = np.empty((N_CHANNELS, n))
    hum = 0.2 * np.sin(2 * np.pi * 60.0 * t + rng.uniform(0, 2 * np.pi))
    for ch in EEG_CHANNELS:
        burst = delta_gain * _band_noise(rng, n, 0.5, 3.0)
        data[ch - 1] = _band_noise(rng, n, 0.5, 25.0) + burst + hum
    data[ChannelId.EOG_L - 1] = _band_noise(rng, n, 0.3, 10.0) + 0.5 * delta_gain * _band_noise(rng, n, 0.5, 3.0)
    data[ChannelId.CHIN_EMG - 1] = 0.5 * _band_noise(rng, n, 10.0, 90.0)

    f_resp = rng.uniform(0.22, 0.33)
    phase = 2 * np.pi * f_resp * t + 0.3 * _band_noise(rng, n, 0.0, 0.05)
    for k, ch in enumerate(RESP_CHANNELS):
        wave = np.sin(phase + 0.4 * k) + 0.15 * _band_noise(rng, n, 0.2, 0.5)
        data[ch - 1] = resp_gain * wave + 0.05 * _band_noise(rng, n, 0.5, 5.0)

    data[ChannelId.SAO2 - 1] = 0.96 + 0.004 * _band_noise(rng, n, 0.0, 0.05) - sao2_dip

    beats = np.zeros(n)
    beat_times = np.arange(rng.uniform(0, 0.8), duration_s, 0.85)
    beats[np.minimum((beat_times * FS).astype(int), n - 1)] = 1.0
    qrs = np.exp(-0.5 * (np.arange(-20, 21) / 3.0) ** 2)
    data[ChannelId.ECG - 1] = np.convolve(beats, qrs, mode="same") + 0.05 * _band_noise(rng, n, 0.5, 40.0)

    rid = record_id if record_id is not None else f"synth{seed:05d}"
    return PsgRecord(rid, data.astype(np.float32)), AnnotationTrack(labels)


def random_arousal_windows(
    rng: np.random.Generator, duration_s: float, n_target: int, n_non_target: int = 0
) -> list[tuple[float, float, str]]:
    """Non-overlapping arousal windows aligned to the 5-s analysis grid."""
    slots = int(duration_s // 5)
    kinds = ["target"] * n_target + ["non_target"] * n_non_target
    rng.shuffle(kinds)
    taken = np.zeros(slots, dtype=bool)
    out = []
    for kind in kinds:
        for _ in range(100):
            length = int(rng.integers(2, 5))  # 10-20 s
            if length >= slots:
                break
            start = int(rng.integers(0, slots - length + 1))
            lo, hi = max(start - 1, 0), min(start + length + 1, slots)
            if not taken[lo:hi].any():
                taken[start:start + length] = True
                out.append((5.0 * start, 5.0 * (start + length), kind))
                break
    return sorted(out)
