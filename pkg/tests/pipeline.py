"""Helpers that drive the command-line pipeline inside a scratch directory."""

from pathlib import Path

from somnoscat.cli import main


def run(root, *args):
    return main([*args, "--data-dir", str(root)])


def full_run(root, n_records=4, duration=30, feature_set="physio75", train_args=("--epochs", "3", "--hidden", "4", "--layers", "1")):
    codes = [
        run(root, "synth", "--records", str(n_records), "--duration", str(duration)),
        run(root, "extract", "--feature-set", feature_set),
        run(root, "train", "--feature-set", feature_set, *train_args),
        run(root, "predict"),
        run(root, "evaluate"),
    ]
    return codes


def snapshot(root):
    """Relative path -> bytes of every file under ``root``."""
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
