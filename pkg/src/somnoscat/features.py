"""Per-record feature matrices (75 physiology, 390 scattering or all 465).

Matrix file layout: ``key=value`` header lines, a ``---`` line, then the
row-major little-endian float32 matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features_physio import PHYSIO_FEATURE_NAMES, physio_matrix
from .preprocess import preprocess_record, segment_record
from .record_io import PsgRecord
from .scattering import DECIMATE, TARGET_DIM, scattering_feature_names, scattering_features

MAGIC = "SOMNOSCAT-FEATURES 1"


class FeatureSet(str, enum.Enum):
    PHYSIO75 = "physio75"
    SCATTER390 = "scatter390"
    ALL465 = "all465"


def feature_names(feature_set: FeatureSet | str, target_dim: int = TARGET_DIM) -> tuple[str, ...]:
    fs = FeatureSet(feature_set)
    names: tuple[str, ...] = ()
    if fs in (FeatureSet.PHYSIO75, FeatureSet.ALL465):
        names += PHYSIO_FEATURE_NAMES
    if fs in (FeatureSet.SCATTER390, FeatureSet.ALL465):
        names += scattering_feature_names(target_dim=target_dim)
    return names


def extract_features(
    record: PsgRecord,
    feature_set: FeatureSet | str = FeatureSet.ALL465,
    decimate: int = DECIMATE,
    target_dim: int = TARGET_DIM,
    preprocessed: bool = False,
) -> np.ndarray:
    """Preprocess, window and compute the selected feature set, shape ``(M, D)``."""
    fs = FeatureSet(feature_set)
    clean = record if preprocessed else preprocess_record(record)
    windowed = segment_record(clean)
    blocks = []
    if fs in (FeatureSet.PHYSIO75, FeatureSet.ALL465):
        blocks.append(physio_matrix(windowed))
    if fs in (FeatureSet.SCATTER390, FeatureSet.ALL465):
        blocks.append(scattering_features(windowed, decimate=decimate, target_dim=target_dim))
    return np.concatenate(blocks, axis=1)


@dataclass
class FeatureMatrix:
    record_id: str
    values: np.ndarray
    names: tuple[str, ...]


def store_features(path: str | Path, record_id: str, values: np.ndarray, names) -> None:
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[1] != len(names):
        raise ValueError("column names do not match the matrix")
    header = [
        MAGIC,
        f"id={record_id}",
        f"rows={values.shape[0]}",
        f"cols={values.shape[1]}",
        "columns=" + ",".join(names),
        "---",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode())
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def load_features(path: str | Path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        if fh.readline().decode().strip() != MAGIC:
            raise ValueError(f"{path}: not a feature matrix file")
        header = {}
        for raw in fh:
            line = raw.decode().rstrip("\n")
            if line == "---":
                break
            key, _, value = line.partition("=")
            header[key] = value
        blob = fh.read()
    rows, cols = int(header["rows"]), int(header["cols"])
    names = tuple(header["columns"].split(",")) if cols else ()
    values = np.frombuffer(blob, dtype="<f4")
    if values.size != rows * cols:
        raise ValueError(f"{path}: payload has {values.size} values, header declares {rows}x{cols}")
    return FeatureMatrix(header["id"], values.reshape(rows, cols).astype(np.float32), names)
