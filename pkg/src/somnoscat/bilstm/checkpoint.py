"""Model checkpoints: a JSON header line followed by little-endian float64 tensors.

Layout::

    SOMNOSCAT-MODEL 1\\n
    {"config": ..., "input_dim": ..., "tensors": [[name, shape], ...], ...}\\n
    <tensor bytes in header order>
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .network import BilstmModel, NetworkConfig

MAGIC = b"SOMNOSCAT-MODEL"
VERSION = 1


def save_model(model: BilstmModel, path: str | Path) -> None:
    tensors = dict(model.params)
    if model.input_mean is not None:
        tensors["input.mean"] = model.input_mean
        tensors["input.scale"] = model.input_scale
    if model.columns is not None:
        tensors["input.columns"] = model.columns.astype(float)
    header = {
        "config": model.config.__dict__,
        "input_dim": model.input_dim,
        "metadata": model.metadata,
        "tensors": [[name, list(np.shape(t))] for name, t in tensors.items()],
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC + b" %d\n" % VERSION)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for t in tensors.values():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_model(path: str | Path) -> BilstmModel:
    with open(path, "rb") as fh:
        first = fh.readline().split()
        if len(first) != 2 or first[0] != MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        if int(first[1]) != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {first[1].decode()}")
        header = json.loads(fh.readline())
        blob = fh.read()
    tensors = {}
    offset = 0
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
        tensors[name] = arr
        offset += 8 * count
    if offset != len(blob):
        raise ValueError(f"{path}: checkpoint size does not match its header")
    mean = tensors.pop("input.mean", None)
    scale = tensors.pop("input.scale", None)
    columns = tensors.pop("input.columns", None)
    return BilstmModel(
        NetworkConfig(**header["config"]),
        header["input_dim"],
        tensors,
        mean,
        scale,
        None if columns is None else columns.astype(np.int64),
        header.get("metadata", {}),
    )


def write_loss_trace(trace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, value in enumerate(trace, start=1):
            writer.writerow([epoch, repr(float(value))])
