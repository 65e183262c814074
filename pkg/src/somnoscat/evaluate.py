"""Sample-level AUPRC/AUROC, prediction expansion and k-fold cross-validation."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bilstm import BilstmModel, NetworkConfig, TrainConfig, drop_non_target, predict, train_with_restarts
from .preprocess import WINDOW

logger = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    pass


def expand(window_probs, repeat: int = WINDOW) -> np.ndarray:
    """Repeat every window value ``repeat`` (5 s x 200 Hz) times."""
    return np.repeat(np.asarray(window_probs, dtype=float), repeat)


def _binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    keep = labels != -1
    scores, y = scores[keep], labels[keep] == 1
    if not y.any() or y.all():
        raise UndefinedMetricError("need at least one positive and one negative sample")
    return scores, y


def _tie_groups(scores: np.ndarray, y: np.ndarray):
    """Cumulative (tp, fp) at each distinct threshold, highest score first."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = y[order].astype(np.int64)
    last = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(pos)[last]
    fp = np.cumsum(1 - pos)[last]
    return tp, fp


def auprc(scores, labels) -> float:
    """Average precision: sum over thresholds of recall increment x precision."""
    scores, y = _binary(scores, labels)
    tp, fp = _tie_groups(scores, y)
    precision = tp / (tp + fp)
    recall = tp / tp[-1]
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def auroc(scores, labels) -> float:
    """Mann-Whitney statistic with ties counted as one half."""
    scores, y = _binary(scores, labels)
    tp, fp = _tie_groups(scores, y)
    n_pos, n_neg = tp[-1], fp[-1]
    d_tp = np.diff(np.r_[0, tp])
    d_fp = np.diff(np.r_[0, fp])
    fp_before = np.r_[0, fp[:-1]]
    return float(np.sum(d_tp * (n_neg - fp_before - d_fp) + 0.5 * d_tp * d_fp) / (n_pos * n_neg))


@dataclass
class FoldResult:
    fold: str
    auprc: float
    auroc: float
    n_pos: int
    n_neg: int
    n_masked: int


@dataclass
class EvalReport:
    auprc: float
    auroc: float
    n_pos: int
    n_neg: int
    n_masked: int
    folds: list[FoldResult] = field(default_factory=list)
    auprc_std: float | None = None
    auroc_std: float | None = None

    def rows(self) -> list[tuple[str, float, float]]:
        if not self.folds:
            return [("all", self.auprc, self.auroc)]
        rows = [(f.fold, f.auprc, f.auroc) for f in self.folds]
        rows.append(("Mean", self.auprc, self.auroc))
        rows.append(("STD", self.auprc_std, self.auroc_std))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["fold", "AUPRC", "AUROC"])
        for name, p, r in self.rows():
            writer.writerow([name, f"{p:.6f}", f"{r:.6f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'fold':>8}  {'AUPRC':>8}  {'AUROC':>8}"]
        for name, p, r in self.rows():
            if name == "STD":
                lines.append(f"{'(STD)':>8}  {'(%.2f)' % p:>8}  {'(%.2f)' % r:>8}")
            else:
                lines.append(f"{name:>8}  {p:8.4f}  {r:8.4f}")
        lines.append(f"samples: {self.n_pos} target, {self.n_neg} non-arousal, {self.n_masked} masked")
        return "\n".join(lines) + "\n"


def align_labels(sample_probs: np.ndarray, sample_labels: np.ndarray) -> np.ndarray:
    """Labels of the samples covered by a prediction track (tail samples are unscored)."""
    if len(sample_probs) > len(sample_labels):
        raise ValueError("prediction track longer than its annotation track")
    return np.asarray(sample_labels)[: len(sample_probs)]


def evaluate_tracks(sample_probs: Sequence[np.ndarray], sample_labels: Sequence[np.ndarray], name: str = "all") -> FoldResult:
    """Pooled sample-level metrics over several records."""
    probs = np.concatenate([np.asarray(p, dtype=float) for p in sample_probs])
    labels = np.concatenate([align_labels(p, y) for p, y in zip(sample_probs, sample_labels)])
    try:
        p_auc, r_auc = auprc(probs, labels), auroc(probs, labels)
    except UndefinedMetricError:
        logger.warning("fold %s: metric undefined (single class)", name)
        p_auc = r_auc = float("nan")
    return FoldResult(
        name, p_auc, r_auc,
        int(np.sum(labels == 1)), int(np.sum(labels == 0)), int(np.sum(labels == -1)),
    )


def summarize(folds: list[FoldResult]) -> EvalReport:
    p = np.array([f.auprc for f in folds])
    r = np.array([f.auroc for f in folds])
    ddof = 1 if len(folds) > 1 else 0
    return EvalReport(
        auprc=float(np.nanmean(p)),
        auroc=float(np.nanmean(r)),
        n_pos=sum(f.n_pos for f in folds),
        n_neg=sum(f.n_neg for f in folds),
        n_masked=sum(f.n_masked for f in folds),
        folds=folds,
        auprc_std=float(np.nanstd(p, ddof=ddof)),
        auroc_std=float(np.nanstd(r, ddof=ddof)),
    )


def single_report(result: FoldResult) -> EvalReport:
    return EvalReport(result.auprc, result.auroc, result.n_pos, result.n_neg, result.n_masked)


@dataclass
class RecordData:
    """Everything cross-validation needs from one record."""

    id: str
    features: np.ndarray  # (M, D)
    window_labels: np.ndarray  # (M,)
    sample_labels: np.ndarray  # (N,)


def assign_folds(n_records: int, k: int, seed: int = 0) -> np.ndarray:
    """Seeded shuffle, then round-robin fold numbers 0..k-1."""
    if n_records < k:
        raise ValueError(f"{n_records} records cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n_records)
    folds = np.empty(n_records, dtype=np.int64)
    folds[perm] = np.arange(n_records) % k
    return folds


def training_pairs(records: Sequence[RecordData]) -> list[tuple[np.ndarray, np.ndarray]]:
    pairs = []
    for r in records:
        f, y = drop_non_target(r.features, r.window_labels)
        if len(y):
            pairs.append((f, y))
    return pairs


def cross_validate(
    records: Sequence[RecordData],
    k: int = 10,
    net_cfg: NetworkConfig = NetworkConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    restarts: int = 1,
    columns: np.ndarray | None = None,
) -> tuple[EvalReport, list[BilstmModel], np.ndarray]:
    """Record-level k-fold CV; returns the report, the k fold models and the fold of each record."""
    folds = assign_folds(len(records), k, train_cfg.seed)
    results, models = [], []
    for fold in range(k):
        train_set = training_pairs([r for r, f in zip(records, folds) if f != fold])
        model, trace = train_with_restarts(train_set, net_cfg, train_cfg, restarts, columns)
        model.metadata["fold"] = fold + 1
        held = [r for r, f in zip(records, folds) if f == fold]
        probs = [expand(predict(model, r.features)) for r in held]
        results.append(evaluate_tracks(probs, [r.sample_labels for r in held], str(fold + 1)))
        models.append(model)
        logger.info("fold %d: AUPRC %.4f AUROC %.4f", fold + 1, results[-1].auprc, results[-1].auroc)
    return summarize(results), models, folds
