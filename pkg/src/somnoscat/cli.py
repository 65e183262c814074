"""Command-line pipeline: synth, extract, train, predict, evaluate, plot-filterbank.

Data directory layout::

    records/<id>/      header.txt, chNN.f32, arousal.i8, pred.f32
    features/<id>.feat
    models/            model.ckpt, loss.csv, foldNN.ckpt, ensemble.json
    reports/           report.txt, report.csv, cv.txt, cv.csv
    filterbank/        filterbank.csv, filterbank.svg

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bilstm
from .config import PipelineConfig, load_config, render_config
from .evaluate import (
    RecordData,
    cross_validate,
    evaluate_tracks,
    expand,
    single_report,
    summarize,
    training_pairs,
)
from .features import FeatureSet, extract_features, feature_names, load_features, store_features
from .preprocess import WINDOW, window_labels
from .record_io import (
    ANNOTATION_NAME,
    PREDICTION_NAME,
    PredictionTrack,
    RecordFormatError,
    generate_synthetic,
    list_records,
    load_annotations,
    load_predictions,
    load_record,
    random_arousal_windows,
    store_annotations,
    store_predictions,
    store_record,
)
from .scattering import default_net

logger = logging.getLogger("somnoscat")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST = "ensemble.json"
CURRENT = "current"  # names the checkpoint or manifest written by the last train run
FILTERBANK_GRID_HZ = np.linspace(0.0, 100.0, 1001)


class DataError(Exception):
    """Missing or inconsistent pipeline artifacts."""


def _dirs(cfg: PipelineConfig) -> dict[str, Path]:
    root = cfg.root
    return {name: root / name for name in ("records", "features", "models", "reports", "filterbank")}


# ------------------------------------------------------------------- synth


def cmd_synth(cfg: PipelineConfig, n_records: int, duration_s: float, n_target: int, n_non_target: int) -> int:
    out = _dirs(cfg)["records"]
    for i in range(n_records):
        seed = cfg.seed * 100_000 + i
        windows = random_arousal_windows(np.random.default_rng(seed), duration_s, n_target, n_non_target)
        record, labels = generate_synthetic(seed, duration_s, windows, record_id=f"rec{i:04d}")
        target = out / record.id
        store_record(record, target)
        store_annotations(labels, target)
        logger.info("wrote %s (%d windows)", target, len(windows))
    return EXIT_OK


# ----------------------------------------------------------------- extract


def _extract_one(job: tuple[str, str, str, int, int]) -> tuple[str, str | None]:
    record_dir, out_path, feature_set, decimate, target_dim = job
    try:
        record = load_record(record_dir)
        values = extract_features(record, feature_set, decimate, target_dim)
        if not np.all(np.isfinite(values)):
            return record_dir, "non-finite feature values"
        store_features(out_path, record.id, values, feature_names(feature_set, target_dim))
    except (RecordFormatError, OSError, ValueError, KeyError) as exc:
        return record_dir, f"{type(exc).__name__}: {exc}"
    return record_dir, None


def cmd_extract(cfg: PipelineConfig) -> int:
    dirs = _dirs(cfg)
    if not dirs["records"].is_dir():
        raise DataError(f"no records directory at {dirs['records']}")
    records = list_records(dirs["records"])
    if not records:
        raise DataError(f"no records under {dirs['records']}")
    dirs["features"].mkdir(parents=True, exist_ok=True)
    jobs = [
        (str(r), str(dirs["features"] / f"{r.name}.feat"), cfg.feature_set,
         cfg.scatter.decimate, cfg.scatter.target_dim)
        for r in records
    ]
    if cfg.jobs > 1:
        default_net()
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_extract_one, jobs))
    else:
        results = [_extract_one(j) for j in jobs]
    failed = 0
    for k, (record_dir, error) in enumerate(results, start=1):
        if error is None:
            logger.info("[%d/%d] extracted %s", k, len(results), Path(record_dir).name)
        else:
            failed += 1
            logger.warning("[%d/%d] skipped %s: %s", k, len(results), Path(record_dir).name, error)
    if failed == len(results):
        raise DataError("every record failed feature extraction")
    return EXIT_OK


# ------------------------------------------------------------------- train


def _load_dataset(cfg: PipelineConfig, require_labels: bool = True) -> tuple[list[RecordData], tuple[str, ...]]:
    dirs = _dirs(cfg)
    paths = sorted(dirs["features"].glob("*.feat")) if dirs["features"].is_dir() else []
    if not paths:
        raise DataError(f"no feature matrices under {dirs['features']}")
    data, names = [], None
    for path in paths:
        fm = load_features(path)
        if names is None:
            names = fm.names
        elif fm.names != names:
            raise DataError(f"{path.name}: feature columns differ from {paths[0].name}")
        label_path = dirs["records"] / fm.record_id / ANNOTATION_NAME
        if not label_path.is_file():
            if require_labels:
                raise DataError(f"missing annotations for {fm.record_id}")
            data.append(RecordData(fm.record_id, fm.values, np.zeros(0, np.int8), np.zeros(0, np.int8)))
            continue
        labels = load_annotations(label_path).labels
        w = window_labels(labels)
        if len(w) != len(fm.values):
            raise DataError(f"{fm.record_id}: {len(fm.values)} feature rows but {len(w)} labelled windows")
        data.append(RecordData(fm.record_id, fm.values, w, labels))
    return data, names


def _check_feature_set(cfg: PipelineConfig, names: tuple[str, ...]) -> None:
    if len(names) != cfg.feature_dim:
        raise DataError(
            f"feature matrices have {len(names)} columns but feature set {cfg.feature_set} needs {cfg.feature_dim}"
        )


def _write_scores(path: Path, names, scores, selected) -> None:
    rank = {int(c): r for r, c in enumerate(selected, start=1)}
    lines = ["feature,score,rank"]
    for i, (name, s) in enumerate(zip(names, scores)):
        lines.append(f"{name},{float(s)!r},{rank.get(i, '')}")
    path.write_text("\n".join(lines) + "\n")


def _annotate(model: bilstm.BilstmModel, cfg: PipelineConfig, names) -> None:
    model.metadata["feature_set"] = cfg.feature_set
    model.metadata["source_columns"] = list(names)


def cmd_train(cfg: PipelineConfig) -> int:
    dirs = _dirs(cfg)
    records, names = _load_dataset(cfg)
    _check_feature_set(cfg, names)
    dirs["models"].mkdir(parents=True, exist_ok=True)
    train_cfg = cfg.train_config()
    columns = None
    if cfg.select_top:
        pre, pre_trace = bilstm.train_with_restarts(training_pairs(records), cfg.net, train_cfg, cfg.restarts)
        scores = bilstm.feature_score(pre)
        columns = np.sort(bilstm.select_top_k(scores, cfg.select_top))
        bilstm.write_loss_trace(pre_trace, dirs["models"] / "pretrain_loss.csv")
        _write_scores(dirs["models"] / "feature_scores.csv", names, scores, bilstm.select_top_k(scores, cfg.select_top))
        logger.info("pre-trained on %d features, keeping %d", len(names), len(columns))

    if cfg.cv_folds:
        report, models, folds = cross_validate(records, cfg.cv_folds, cfg.net, train_cfg, cfg.restarts, columns)
        members = []
        for k, model in enumerate(models, start=1):
            _annotate(model, cfg, names)
            bilstm.save_model(model, dirs["models"] / f"fold{k:02d}.ckpt")
            bilstm.write_loss_trace(model.metadata["loss_trace"], dirs["models"] / f"fold{k:02d}_loss.csv")
            members.append(f"fold{k:02d}.ckpt")
        manifest = {
            "members": members,
            "folds": {r.id: int(f) + 1 for r, f in zip(records, folds)},
            "feature_set": cfg.feature_set,
        }
        (dirs["models"] / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        (dirs["models"] / CURRENT).write_text(MANIFEST + "\n")
        _write_report(dirs["reports"], "cv", report)
        sys.stdout.write(report.to_text())
    else:
        model, trace = bilstm.train_with_restarts(training_pairs(records), cfg.net, train_cfg, cfg.restarts, columns)
        _annotate(model, cfg, names)
        bilstm.save_model(model, dirs["models"] / "model.ckpt")
        bilstm.write_loss_trace(trace, dirs["models"] / "loss.csv")
        (dirs["models"] / CURRENT).write_text("model.ckpt\n")
        logger.info("final training loss %.6f", trace[-1])
    return EXIT_OK


# ----------------------------------------------------------------- predict


def _resolve_models(cfg: PipelineConfig, model_path: str | None):
    """Return (models, folds map or None) from a checkpoint or ensemble manifest."""
    models_dir = _dirs(cfg)["models"]
    if model_path is None:
        pointer = models_dir / CURRENT
        name = pointer.read_text().strip() if pointer.is_file() else "model.ckpt"
        path = models_dir / name
    else:
        path = Path(model_path)
    if not path.is_file():
        raise DataError(f"no trained model at {path}")
    if path.suffix == ".json":
        manifest = json.loads(path.read_text())
        members = [bilstm.load_model(path.parent / m) for m in manifest["members"]]
        if not members:
            raise DataError(f"{path}: empty ensemble")
        return members, manifest.get("folds")
    return [bilstm.load_model(path)], None


def _check_model_columns(model: bilstm.BilstmModel, names) -> None:
    expected = model.metadata.get("source_columns")
    if expected is not None and tuple(expected) != tuple(names):
        raise DataError(f"model expects {len(expected)} feature columns, matrices have {len(names)}")
    width = model.input_dim if model.columns is None else int(model.columns.max()) + 1
    if width > len(names):
        raise DataError(f"model expects {model.input_dim} inputs, matrices have {len(names)} columns")


def cmd_predict(cfg: PipelineConfig, model_path: str | None = None, holdout: bool = False) -> int:
    dirs = _dirs(cfg)
    models, folds = _resolve_models(cfg, model_path)
    if holdout and folds is None:
        raise DataError("--holdout needs an ensemble manifest with fold assignments")
    records, names = _load_dataset(cfg, require_labels=False)
    for m in models:
        _check_model_columns(m, names)
    for r in records:
        if holdout and r.id in folds:
            probs = bilstm.predict(models[folds[r.id] - 1], r.features)
        else:
            probs = bilstm.ensemble_predict(models, r.features)
        if not np.all(np.isfinite(probs)):
            raise FloatingPointError(f"non-finite prediction for {r.id}")
        target = dirs["records"] / r.id
        target.mkdir(parents=True, exist_ok=True)
        store_predictions(PredictionTrack(expand(probs, WINDOW)), target)
        logger.info("predicted %s (%d windows)", r.id, len(probs))
    return EXIT_OK


# ---------------------------------------------------------------- evaluate


def _write_report(reports_dir: Path, stem: str, report) -> None:
    reports_dir.mkdir(parents=True, exist_ok=True)
    (reports_dir / f"{stem}.txt").write_text(report.to_text())
    (reports_dir / f"{stem}.csv").write_text(report.to_csv())


def cmd_evaluate(cfg: PipelineConfig, folds_manifest: str | None = None) -> int:
    dirs = _dirs(cfg)
    if not dirs["records"].is_dir():
        raise DataError(f"no records directory at {dirs['records']}")
    pairs = {}
    for rdir in list_records(dirs["records"]):
        if (rdir / PREDICTION_NAME).is_file() and (rdir / ANNOTATION_NAME).is_file():
            pairs[rdir.name] = (load_predictions(rdir).probs, load_annotations(rdir).labels)
    if not pairs:
        raise DataError("no records with both predictions and annotations")
    if folds_manifest:
        fold_of = json.loads(Path(folds_manifest).read_text()).get("folds")
        if not fold_of:
            raise DataError(f"{folds_manifest}: no fold assignments")
        groups: dict[int, list[str]] = {}
        for rid in sorted(pairs):
            if rid not in fold_of:
                raise DataError(f"record {rid} missing from {folds_manifest}")
            groups.setdefault(int(fold_of[rid]), []).append(rid)
        results = [
            evaluate_tracks([pairs[i][0] for i in ids], [pairs[i][1] for i in ids], str(k))
            for k, ids in sorted(groups.items())
        ]
        report = summarize(results)
    else:
        ids = sorted(pairs)
        report = single_report(evaluate_tracks([pairs[i][0] for i in ids], [pairs[i][1] for i in ids]))
    _write_report(dirs["reports"], "report", report)
    sys.stdout.write(report.to_text())
    return EXIT_OK


# --------------------------------------------------------- plot-filterbank


def filterbank_curves(freqs=FILTERBANK_GRID_HZ) -> list[tuple[str, np.ndarray]]:
    net = default_net()
    curves = []
    for tag, bank in (("bank1", net.bank1), ("bank2", net.bank2)):
        for k, row in enumerate(bank.response(freqs)):
            curves.append((f"{tag}_{k:02d}", row))
    return curves


def _svg(curves, freqs) -> str:
    width, panel_h, margin = 800, 260, 50
    height = 2 * panel_h + 2 * margin
    ymax = max(float(c.max()) for _, c in curves) * 1.05
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    titles = {"bank1": "first layer (Q=2, J=13, P=1)", "bank2": "second layer (Q=1, J=8)"}
    for p, tag in enumerate(("bank1", "bank2")):
        top = margin // 2 + p * (panel_h + margin)
        x0, x1 = margin, width - margin // 2
        y0, y1 = top + panel_h - 20, top + 10

        def sx(f):
            return x0 + (x1 - x0) * f / freqs[-1]

        def sy(m):
            return y0 + (y1 - y0) * m / ymax

        out.append(f'<text x="{x0}" y="{top}">{titles[tag]}</text>')
        out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
        out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
        for tick in range(0, 101, 20):
            out.append(f'<text x="{sx(tick):.2f}" y="{y0 + 14}" text-anchor="middle">{tick}</text>')
        out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{y0 + 28}" text-anchor="middle">frequency (Hz)</text>')
        members = [(n, c) for n, c in curves if n.startswith(tag)]
        for k, (name, c) in enumerate(members):
            hue = int(360 * k / len(members))
            pts = " ".join(f"{sx(f):.2f},{sy(m):.2f}" for f, m in zip(freqs, c))
            out.append(f'<polyline id="{name}" fill="none" stroke="hsl({hue},70%,40%)" points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_plot_filterbank(cfg: PipelineConfig, out_dir: str | None = None) -> int:
    target = Path(out_dir) if out_dir else _dirs(cfg)["filterbank"]
    target.mkdir(parents=True, exist_ok=True)
    freqs = FILTERBANK_GRID_HZ
    curves = filterbank_curves(freqs)
    lines = ["omega_Hz,filter_id,magnitude"]
    for name, c in curves:
        lines.extend(f"{f:.1f},{name},{m:.9e}" for f, m in zip(freqs, c))
    (target / "filterbank.csv").write_text("\n".join(lines) + "\n")
    (target / "filterbank.svg").write_text(_svg(curves, freqs))
    logger.info("wrote %d filter curves to %s", len(curves), target)
    return EXIT_OK


# -------------------------------------------------------------------- main


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="count")
    return p


def _model_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--feature-set", dest="feature_set", choices=[f.value for f in FeatureSet])
    p.add_argument("--decimate", dest="scatter.decimate", type=int)
    p.add_argument("--target-dim", dest="scatter.target_dim", type=int)
    return p


def _training_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--cv", dest="cv_folds", type=int, default=argparse.SUPPRESS, metavar="K")
    p.add_argument("--pretrain-select", dest="select_top", type=int, nargs="?", const=75,
                   default=argparse.SUPPRESS, metavar="K")
    p.add_argument("--restarts", type=int, default=argparse.SUPPRESS)
    p.add_argument("--unidirectional", dest="net.bidirectional", action="store_false",
                   default=argparse.SUPPRESS)
    p.add_argument("--layers", dest="net.layers", type=int, default=argparse.SUPPRESS)
    p.add_argument("--hidden", dest="net.hidden", type=int, default=argparse.SUPPRESS)
    p.add_argument("--epochs", dest="train.epochs", type=int, default=argparse.SUPPRESS)
    p.add_argument("--lr", dest="train.lr", type=float, default=argparse.SUPPRESS)
    p.add_argument("--batch-subjects", dest="train.batch_subjects", type=int, default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common, model, training = _common_options(), _model_options(), _training_options()
    parser = _Parser(prog="somnoscat", description="PSG arousal detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write synthetic records")
    p.add_argument("--records", type=int, default=20)
    p.add_argument("--duration", type=float, default=60.0, help="seconds, a multiple of 5")
    p.add_argument("--targets", type=int, default=1)
    p.add_argument("--non-targets", type=int, default=1)

    p = sub.add_parser("extract", parents=[common, model], help="compute feature matrices")
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS)

    sub.add_parser("train", parents=[common, model, training], help="train a model or a CV ensemble")

    p = sub.add_parser("predict", parents=[common, model], help="write per-sample prediction tracks")
    p.add_argument("--model", help="checkpoint or ensemble manifest (default: models/ directory)")
    p.add_argument("--holdout", action="store_true", help="predict each record with its own CV fold model")

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against annotations")
    p.add_argument("--folds", help="ensemble manifest; report one row per CV fold")

    p = sub.add_parser("plot-filterbank", parents=[common], help="write filter magnitude curves")
    p.add_argument("--out", help="output directory (default: <data-dir>/filterbank)")

    sub.add_parser("show-config", parents=[common, model, training], help="print the effective configuration")
    return parser


_CONFIG_KEYS = {
    "data_dir", "seed", "feature_set", "jobs", "restarts", "cv_folds", "select_top",
    "scatter.decimate", "scatter.target_dim", "net.bidirectional", "net.layers", "net.hidden",
    "train.epochs", "train.lr", "train.batch_subjects",
}


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults, then the config file, then command-line flags."""
    opts = vars(args)
    cfg = PipelineConfig()
    if opts.get("config"):
        cfg = load_config(opts["config"], cfg)
    return cfg.with_overrides(**{k: v for k, v in opts.items() if k in _CONFIG_KEYS})


def _dispatch(args, cfg: PipelineConfig) -> int:
    if args.command == "synth":
        return cmd_synth(cfg, args.records, args.duration, args.targets, args.non_targets)
    if args.command == "extract":
        return cmd_extract(cfg)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "predict":
        return cmd_predict(cfg, args.model, args.holdout)
    if args.command == "evaluate":
        return cmd_evaluate(cfg, args.folds)
    if args.command == "plot-filterbank":
        return cmd_plot_filterbank(cfg, args.out)
    sys.stdout.write(render_config(cfg))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbosity = getattr(args, "verbose", 0)
    level = logging.DEBUG if verbosity >= 2 else logging.INFO if verbosity else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ValueError, TypeError, OSError) as exc:
        logger.error("configuration: %s", exc)
        return EXIT_USAGE
    try:
        return _dispatch(args, cfg)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (DataError, RecordFormatError, OSError, ValueError, KeyError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
