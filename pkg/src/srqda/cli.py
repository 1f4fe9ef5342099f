"""Command-line interface: fit, predict, simulate, benchmark, estimate, learning-curve.

Configuration files are YAML mappings whose keys mirror the dataclass fields of
the corresponding command; command-line flags override file values. Result
tables are CSV with a leading ``# srqda <version>`` comment; diagnostics go to
standard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .classifiers import RQDA_GAMMA_GRID, SrqdaSettings, fit_method, fit_rqda
from .experiments import (BenchmarkConfig, DataFormatError, SimulationConfig, AccuracyTable,
                          learning_curve, read_labeled_csv, run_benchmark, run_simulation)
from .model import FitError, LabeledDataset, align_signs, class_moments, symmetric_eigen
from .persist import ModelFileError, load_model, model_summary, save_model
from .spikes import (SpikeCounts, SpikeDetectionError, detect_spike_counts, estimate_class_spectrum,
                     estimate_pair)

DEFAULT_SEED = 20240715
log = logging.getLogger("srqda")


class CliError(Exception):
    pass


def _header() -> str:
    return f"# srqda {__version__}\n"


def _emit(text: str, out: str | None) -> None:
    payload = _header() + text
    if out:
        Path(out).write_text(payload, encoding="utf-8")
        log.info("wrote %s", out)
    else:
        sys.stdout.write(payload)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise CliError(f"config {path} must be a mapping")
    return data


def _pop(cfg: dict, key: str, default=None):
    return cfg.pop(key, default)


def _counts(value):
    if value is None or value == "auto":
        return "auto"
    try:
        return tuple(SpikeCounts(int(u), int(lo)) for u, lo in value)
    except (TypeError, ValueError) as exc:
        raise CliError(f"counts must be 'auto' or [[upper, lower], [upper, lower]]: {value!r}") from exc


def _priors(value):
    if value is None or value == "empirical":
        return None
    return (float(value[0]), float(value[1]))


def _data_args(args, cfg) -> tuple[str, str, str | None]:
    data = args.data or _pop(cfg, "data")
    if not data:
        raise CliError("no input data: set 'data' in the config or pass --data")
    label = args.label_column or _pop(cfg, "label_column", "label")
    positive = args.positive_label or _pop(cfg, "positive_label")
    return data, label, None if positive is None else str(positive)


def cmd_fit(args, cfg) -> None:
    data_path, label, positive = _data_args(args, cfg)
    data = read_labeled_csv(data_path, label, positive)
    method = args.method or _pop(cfg, "method", "srqda")
    priors = _priors(_pop(cfg, "priors"))
    counts = _counts(_pop(cfg, "counts"))
    settings = SrqdaSettings(grid_resolution=int(_pop(cfg, "grid_resolution", 20)),
                             refine_resolution=int(_pop(cfg, "refine_resolution", 10)),
                             use_corrected=bool(_pop(cfg, "use_corrected", True)),
                             component_form=_pop(cfg, "component_form", "derived"),
                             isotropic_variance=bool(_pop(cfg, "isotropic_variance", False)))
    eta_form = _pop(cfg, "rqda_eta_form", "literal")
    fixed_gamma = _pop(cfg, "rqda_gamma")
    candidates = tuple(_pop(cfg, "rqda_candidates", RQDA_GAMMA_GRID))
    folds = int(_pop(cfg, "rqda_folds", 5))
    knn_k = int(_pop(cfg, "knn_k", 1))
    _reject_unknown(cfg)
    if method == "rqda" and fixed_gamma is not None:
        model = fit_rqda(data, float(fixed_gamma), priors, eta_form)
    else:
        model = fit_method(method, data, priors=priors, counts=counts, seed=args.seed,
                           rqda_candidates=candidates, rqda_folds=folds, rqda_eta_form=eta_form,
                           srqda=settings, knn_k=knn_k)
    out = args.out or "model.json"
    save_model(model, out)
    log.warning("fitted %s on n=%d, p=%d -> %s", method, data.n, data.p, out)
    for k, v in model_summary(model).items():
        log.warning("  %s: %s", k, v)


def _read_prediction_features(path: str, label: str | None) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        raise DataFormatError(f"{path}: missing header row")
    rows = list(csv.reader(lines))
    header = [h.strip() for h in rows[0]]
    keep = [k for k, h in enumerate(header) if h != label]
    feats, bad = [], []
    for row_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            if len(row) != len(header):
                raise ValueError
            feats.append([float(row[k]) for k in keep])
        except ValueError:
            bad.append(row_no)
    if bad:
        raise DataFormatError(f"{path}: unparseable rows {bad[:20]}")
    return np.array(feats, dtype=float).reshape(len(feats), len(keep))


def cmd_predict(args, cfg) -> None:
    model_path = args.model or _pop(cfg, "model")
    if not model_path:
        raise CliError("no model file: set 'model' in the config or pass --model")
    data = args.data or _pop(cfg, "data")
    if not data:
        raise CliError("no input data: set 'data' in the config or pass --data")
    label = args.label_column or _pop(cfg, "label_column", "label")
    _reject_unknown(cfg)
    model = load_model(model_path)
    x = _read_prediction_features(data, label)
    if x.shape[0] and x.shape[1] != model.p:
        raise CliError(f"dimension mismatch: model expects {model.p} features, data has {x.shape[1]}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row_index", "score", "predicted_class"])
    if x.shape[0]:
        scores = model.scores(x)
        for i, s in enumerate(scores):
            w.writerow([i, repr(float(s)), 0 if s > 0 else 1])
    _emit(buf.getvalue(), args.out)


def _simulation_configs(args, cfg) -> list[SimulationConfig]:
    settings = cfg.pop("settings", None) or [{}]
    if not isinstance(settings, list):
        raise CliError("'settings' must be a list of override mappings")
    base = dict(cfg)
    base["rng_seed"] = args.seed
    if args.method:
        base["methods"] = [args.method]
    out = []
    for over in settings:
        merged = {**base, **(over or {})}
        try:
            out.append(SimulationConfig.from_dict(merged))
        except (TypeError, ValueError) as exc:
            raise CliError(str(exc)) from exc
    return out


def _merge_tables(tables: list[AccuracyTable]) -> AccuracyTable:
    rows = tuple(r for t in tables for r in t.rows)
    notes = tuple(nt for t in tables for nt in t.notes)
    return AccuracyTable(rows, notes)


def cmd_simulate(args, cfg) -> None:
    configs = _simulation_configs(args, cfg)
    table = _merge_tables([run_simulation(c, threads=args.threads) for c in configs])
    for note in table.notes:
        log.warning("assumption not met: %s", note)
    log.info("\n%s", table.pretty())
    _emit(table.to_csv(), args.out)


def _benchmark_config(args, cfg) -> BenchmarkConfig:
    if args.data:
        cfg["dataset"] = args.data
    if args.label_column:
        cfg["label_column"] = args.label_column
    if args.positive_label:
        cfg["positive_label"] = args.positive_label
    if cfg.get("positive_label") is not None:
        cfg["positive_label"] = str(cfg["positive_label"])
    cfg["rng_seed"] = args.seed
    if args.method:
        cfg["methods"] = ["knn1" if args.method == "knn" else args.method]
    if "dataset" not in cfg:
        raise CliError("no dataset: set 'dataset' in the config or pass --data")
    try:
        return BenchmarkConfig.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from exc


def cmd_benchmark(args, cfg) -> None:
    table = run_benchmark(_benchmark_config(args, cfg), threads=args.threads)
    log.info("\n%s", table.pretty())
    _emit(table.to_csv(), args.out)


def cmd_learning_curve(args, cfg) -> None:
    sizes = cfg.pop("train_sizes", None)
    if not sizes:
        raise CliError("learning-curve needs 'train_sizes' in the config")
    table = learning_curve(_benchmark_config(args, cfg), [int(s) for s in sizes],
                           threads=args.threads)
    log.info("\n%s", table.pretty())
    _emit(table.to_csv(), args.out)


def cmd_estimate(args, cfg) -> None:
    data_path = args.data or _pop(cfg, "data")
    if not data_path:
        raise CliError("no input data: set 'data' in the config or pass --data")
    label = args.label_column or _pop(cfg, "label_column", "label")
    positive = args.positive_label or _pop(cfg, "positive_label")
    counts = _counts(_pop(cfg, "counts"))
    margin = float(_pop(cfg, "safety_margin", 0.10))
    _reject_unknown(cfg)
    with open(data_path, encoding="utf-8") as fh:
        header = next((ln for ln in fh if not ln.startswith("#")), "")
    has_label = label in [h.strip() for h in header.strip().split(",")]
    if has_label:
        data = read_labeled_csv(data_path, label, None if positive is None else str(positive))
    else:
        x = _read_prediction_features(data_path, None)
        data = LabeledDataset(x, np.zeros(x.shape[0], dtype=np.int64))
    groups = [i for i in (0, 1) if data.counts()[i] > 0]
    moms = {i: class_moments(data, i) for i in groups}
    mu_hat = moms[0].mean - moms[1].mean if len(groups) == 2 else None
    eigs = {i: symmetric_eigen(moms[i].covariance) for i in groups}
    if mu_hat is not None:
        eigs = {i: align_signs(e, mu_hat) for i, e in eigs.items()}
    specs = {}
    for i in groups:
        c = detect_spike_counts(eigs[i], moms[i].count, margin) if counts == "auto" else counts[i]
        specs[i] = estimate_class_spectrum(eigs[i], c, moms[i].count)
    rows = [("class", "quantity", "index", "value")]
    b = {i: None for i in groups}
    alpha_inv = {i: None for i in groups}
    if len(groups) == 2:
        est = estimate_pair(mu_hat, eigs[0], eigs[1], specs[0], specs[1], moms[0].count,
                            moms[1].count)
        for i in groups:
            b[i], alpha_inv[i] = est[i].b_hat, est[i].alpha_inv_hat
    for i in groups:
        sp = specs[i]
        rows += [(i, "upper_count", "", sp.counts.upper), (i, "lower_count", "", sp.counts.lower),
                 (i, "sigma_sq_raw", "", repr(sp.noise.raw)),
                 (i, "sigma_sq_corrected", "", repr(sp.noise.corrected)),
                 (i, "ratio_c", "", repr(sp.noise.ratio_c))]
        if alpha_inv[i] is not None:
            rows.append((i, "alpha_inv", "", repr(float(alpha_inv[i]))))
        for j in range(sp.lambda_hat.shape[0]):
            rows.append((i, "lambda_hat", j, repr(float(sp.lambda_hat[j]))))
            rows.append((i, "a_hat", j, repr(float(sp.a_hat[j]))))
            if b[i] is not None:
                rows.append((i, "b_hat", j, repr(float(b[i][j]))))
        for d in sp.dropped:
            log.warning("class %d: %s", i, d)
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    _emit(buf.getvalue(), args.out)


def _reject_unknown(cfg: dict) -> None:
    if cfg:
        raise CliError(f"unknown config keys: {sorted(cfg)}")


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "simulate": cmd_simulate,
            "benchmark": cmd_benchmark, "estimate": cmd_estimate,
            "learning-curve": cmd_learning_curve}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML config file")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes for replications (default: all cores)")
    common.add_argument("--method", choices=("qda", "rqda", "srqda", "knn"))
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument("--data", metavar="PATH", help="input CSV (overrides config)")
    common.add_argument("--model", metavar="PATH", help="model file for predict")
    common.add_argument("--label-column", dest="label_column")
    common.add_argument("--positive-label", dest="positive_label")
    common.add_argument("-v", "--verbose", action="count", default=0)
    parser = argparse.ArgumentParser(prog="srqda", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"srqda {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr, force=True)
    try:
        cfg = _load_config(args.config)
        COMMANDS[args.command](args, cfg)
    except (CliError, DataFormatError, ModelFileError, FitError, SpikeDetectionError,
            ValueError, OSError) as exc:
        print(f"srqda {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
