"""Exhaustive-threshold reference for average precision and ROC area."""

import itertools


def oracle_metrics(scores, labels):
    """Sweep every distinct cutoff, predicting positive when ``score >= cutoff``."""
    pairs = [(float(s), int(y)) for s, y in zip(scores, labels) if y != -1]
    n_pos = sum(1 for _, y in pairs if y == 1)
    n_neg = len(pairs) - n_pos
    ap = 0.0
    area = 0.0
    prev_recall = prev_tpr = prev_fpr = 0.0
    for cut in sorted({s for s, _ in pairs}, reverse=True):
        tp = sum(1 for s, y in pairs if s >= cut and y == 1)
        fp = sum(1 for s, y in pairs if s >= cut and y == 0)
        recall = tp / n_pos
        ap += (recall - prev_recall) * tp / (tp + fp)
        tpr, fpr = tp / n_pos, fp / n_neg
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2
        prev_recall, prev_tpr, prev_fpr = recall, tpr, fpr
    return ap, area


def label_patterns(length=8):
    """Every 0/1 vector of ``length`` with at least one of each class."""
    for bits in itertools.product((0, 1), repeat=length):
        if 0 < sum(bits) < length:
            yield list(bits)
