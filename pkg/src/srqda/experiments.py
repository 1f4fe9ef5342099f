"""Monte Carlo simulation and dataset benchmark protocols with deterministic seeding."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .classifiers import RQDA_GAMMA_GRID, SrqdaSettings, evaluate, fit_method, oracle_qda
from .model import (LabeledDataset, SpikedCovarianceSpec, make_orthonormal_directions, make_rng,
                    sample_class)
from .spikes import SpikeCounts

log = logging.getLogger(__name__)

CSV_COLUMNS = ("setting", "method", "n", "mean_accuracy", "std_error", "replications", "failures")
METHOD_ORDER = ("oracle-qda", "qda", "rqda", "srqda", "knn1", "knn3", "knn5")


def derive_seed(seed: int, *key) -> int:
    """``seed XOR hash(key)`` with a stable 64-bit digest."""
    digest = hashlib.blake2b("|".join(map(str, key)).encode(), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class AccuracyRow:
    setting: str
    method: str
    n: int
    mean_accuracy: float
    std_error: float
    replications: int
    failures: int


@dataclass(frozen=True)
class AccuracyTable:
    rows: tuple[AccuracyRow, ...]
    notes: tuple[str, ...] = ()

    def get(self, setting: str, method: str, n: int) -> AccuracyRow:
        for r in self.rows:
            if (r.setting, r.method, r.n) == (setting, method, n):
                return r
        raise KeyError((setting, method, n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.setting, r.method, r.n, f"{r.mean_accuracy:.6f}", f"{r.std_error:.6f}",
                        r.replications, r.failures])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AccuracyTable":
        lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
        rows = []
        for rec in csv.DictReader(lines):
            rows.append(AccuracyRow(rec["setting"], rec["method"], int(rec["n"]),
                                    float(rec["mean_accuracy"]), float(rec["std_error"]),
                                    int(rec["replications"]), int(rec["failures"])))
        return cls(tuple(rows))

    def pretty(self) -> str:
        out = [f"{'setting':<22}{'method':<11}{'n':>6}{'accuracy':>10}{'s.e.':>9}{'reps':>6}{'fail':>6}"]
        for r in self.rows:
            out.append(f"{r.setting:<22}{r.method:<11}{r.n:>6}{r.mean_accuracy:>10.4f}"
                       f"{r.std_error:>9.4f}{r.replications:>6}{r.failures:>6}")
        return "\n".join(out)


def _aggregate(results: dict[tuple[str, str, int], list[float | None]]) -> tuple[AccuracyRow, ...]:
    def order(key):
        s, m, n = key
        return (s, METHOD_ORDER.index(m) if m in METHOD_ORDER else len(METHOD_ORDER), m, n)

    rows = []
    for key in sorted(results, key=order):
        vals = results[key]
        ok = np.array([v for v in vals if v is not None], dtype=float)
        k = ok.shape[0]
        mean = float(np.sum(ok) / k) if k else float("nan")
        se = float(np.std(ok, ddof=1) / np.sqrt(k)) if k > 1 else 0.0
        rows.append(AccuracyRow(key[0], key[1], key[2], mean, se, k, len(vals) - k))
    return tuple(rows)


def _run_tasks(fn, tasks: list, threads: int | None) -> list:
    workers = (os.cpu_count() or 1) if threads is None else max(1, int(threads))
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves task order, so aggregation is independent of scheduling
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


# ---------------------------------------------------------------- simulation

@dataclass(frozen=True)
class SimulationConfig:
    p: int = 150
    sigma0_sq: float = 1.0
    sigma1_sq: float = 1.5
    spikes0_upper: tuple[float, ...] = (25.0, 20.0, 15.0)
    spikes0_lower: tuple[float, ...] = (-0.95,)
    spikes1_upper: tuple[float, ...] = (15.0, 10.0, 5.0)
    spikes1_lower: tuple[float, ...] = (-0.99,)
    mean_scale: float = 0.5
    mean_norm_mode: str = "literal"   # literal: mu0 = (a/p) 1 ; unit: mu0 = (a/sqrt(p)) 1
    sample_sizes: tuple[int, ...] = (100, 200, 300, 400, 500, 600)
    pi0: float = 0.5
    replications: int = 50
    test_size: int = 2000
    grid_resolution: int = 20
    refine_resolution: int = 10
    methods: tuple[str, ...] = ("qda", "rqda", "srqda")
    oracle: bool = True
    known_counts: bool = True
    rqda_folds: int = 5
    rqda_eta_form: str = "literal"
    component_form: str = "derived"
    use_corrected: bool = True
    isotropic_variance: bool = False
    setting: str = ""
    rng_seed: int = 20240715

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.test_size < 2:
            raise ValueError("test_size must be >= 2")
        if not 0 < self.pi0 < 1:
            raise ValueError("pi0 must lie in (0, 1)")
        if self.mean_norm_mode not in ("literal", "unit"):
            raise ValueError(f"unknown mean_norm_mode {self.mean_norm_mode!r}")
        for k in ("spikes0_upper", "spikes0_lower", "spikes1_upper", "spikes1_lower",
                  "sample_sizes", "methods"):
            object.__setattr__(self, k, tuple(getattr(self, k)))

    @property
    def label(self) -> str:
        return self.setting or f"a={self.mean_scale:g};s1={self.sigma1_sq:g}"

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown simulation keys: {sorted(unknown)}")
        return cls(**d)

    def mean0(self) -> np.ndarray:
        scale = self.p if self.mean_norm_mode == "literal" else np.sqrt(self.p)
        return np.full(self.p, self.mean_scale / scale)

    def specs(self, seed: int) -> tuple[SpikedCovarianceSpec, SpikedCovarianceSpec]:
        k0 = len(self.spikes0_upper) + len(self.spikes0_lower)
        k1 = len(self.spikes1_upper) + len(self.spikes1_lower)
        v = make_orthonormal_directions(self.p, k0 + k1, seed)
        s0 = SpikedCovarianceSpec(self.sigma0_sq, self.spikes0_upper, self.spikes0_lower, v[:, :k0],
                                  self.mean0())
        s1 = SpikedCovarianceSpec(self.sigma1_sq, self.spikes1_upper, self.spikes1_lower, v[:, k0:],
                                  np.zeros(self.p))
        return s0, s1

    def class_sizes(self, n: int) -> tuple[int, int]:
        n0 = int(round(self.pi0 * n))
        return n0, n - n0

    def assumption_notes(self) -> list[str]:
        notes = []
        for n in self.sample_sizes:
            for i, (up, lo) in enumerate(((self.spikes0_upper, self.spikes0_lower),
                                          (self.spikes1_upper, self.spikes1_lower))):
                ni = self.class_sizes(n)[i]
                root_c = np.sqrt(self.p / ni)
                bad = [x for x in up + lo if abs(x) <= root_c]
                if bad:
                    notes.append(f"{self.label} n={n} class {i}: spikes {bad} do not exceed "
                                 f"sqrt(p/n_i)={root_c:.3f}")
        return notes


def _simulate_one(task) -> dict[str, float | None]:
    cfg, n, r = task
    seed = derive_seed(cfg.rng_seed, cfg.label, n, r)
    s0, s1 = cfg.specs(seed)
    rng = make_rng(seed)
    n0, n1 = cfg.class_sizes(n)
    train = LabeledDataset.from_classes(sample_class(s0, n0, rng), sample_class(s1, n1, rng))
    t0 = int(round(cfg.pi0 * cfg.test_size))
    test = LabeledDataset.from_classes(sample_class(s0, t0, rng),
                                       sample_class(s1, cfg.test_size - t0, rng))
    priors = (cfg.pi0, 1 - cfg.pi0)
    counts = None
    if cfg.known_counts:
        counts = (SpikeCounts(len(cfg.spikes0_upper), len(cfg.spikes0_lower)),
                  SpikeCounts(len(cfg.spikes1_upper), len(cfg.spikes1_lower)))
    settings = SrqdaSettings(grid_resolution=cfg.grid_resolution,
                             refine_resolution=cfg.refine_resolution,
                             component_form=cfg.component_form, use_corrected=cfg.use_corrected,
                             isotropic_variance=cfg.isotropic_variance)
    out: dict[str, float | None] = {}
    if cfg.oracle:
        model = oracle_qda(s0.mean, s0.covariance(), s1.mean, s1.covariance(), priors)
        out["oracle-qda"] = evaluate(model, test).accuracy
    for method in cfg.methods:
        try:
            model = fit_method(method, train, priors=priors, counts=counts, seed=seed,
                               rqda_folds=cfg.rqda_folds, rqda_eta_form=cfg.rqda_eta_form,
                               srqda=settings)
            out[method] = evaluate(model, test).accuracy
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.info("%s n=%d rep=%d %s failed: %s", cfg.label, n, r, method, exc)
            out[method] = None
    return out


def run_simulation(config: SimulationConfig, threads: int | None = 1) -> AccuracyTable:
    tasks = [(config, n, r) for n in config.sample_sizes for r in range(config.replications)]
    outs = _run_tasks(_simulate_one, tasks, threads)
    results: dict[tuple[str, str, int], list] = {}
    for (cfg, n, _), res in zip(tasks, outs):
        for method, acc in res.items():
            results.setdefault((cfg.label, method, n), []).append(acc)
    return AccuracyTable(_aggregate(results), tuple(config.assumption_notes()))


def oracle_qda_accuracy(spec0: SpikedCovarianceSpec, spec1: SpikedCovarianceSpec, pi0: float,
                        n_test: int, rng_seed: int) -> float:
    """Monte Carlo accuracy of the QDA rule built from the true parameters."""
    rng = make_rng(rng_seed)
    t0 = int(round(pi0 * n_test))
    test = LabeledDataset.from_classes(sample_class(spec0, t0, rng),
                                       sample_class(spec1, n_test - t0, rng))
    model = oracle_qda(spec0.mean, spec0.covariance(), spec1.mean, spec1.covariance(),
                       (pi0, 1 - pi0))
    return evaluate(model, test).accuracy


# ---------------------------------------------------------------- benchmark

class DataFormatError(ValueError):
    pass


def read_labeled_csv(path, label_column: str, positive_label: str | None = None) -> LabeledDataset:
    """Numeric feature columns plus one label column.

    With ``positive_label`` set, rows carrying that label become class 1 and all others
    class 0; otherwise labels must already be 0 or 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    if label_column not in header:
        raise DataFormatError(f"{path}: label column {label_column!r} not found in header")
    li = header.index(label_column)
    feats, labels, bad = [], [], []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            bad.append(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
            continue
        try:
            feats.append([float(v) for k, v in enumerate(row) if k != li])
        except ValueError:
            bad.append(f"row {row_no}: non-numeric feature")
            continue
        lab = row[li].strip()
        if positive_label is not None:
            labels.append(1 if lab == positive_label else 0)
        elif lab in ("0", "1"):
            labels.append(int(lab))
        else:
            feats.pop()
            bad.append(f"row {row_no}: label {lab!r} is not 0/1 (set positive_label)")
    if bad:
        raise DataFormatError(f"{path}: unparseable rows: " + "; ".join(bad[:20])
                              + (" ..." if len(bad) > 20 else ""))
    if not feats:
        raise DataFormatError(f"{path}: no data rows")
    return LabeledDataset(np.array(feats), np.array(labels))


def read_features_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    rows, bad = [], []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            if len(row) != len(header):
                raise ValueError
            rows.append([float(v) for v in row])
        except ValueError:
            bad.append(row_no)
    if bad:
        raise DataFormatError(f"{path}: unparseable rows {bad[:20]}")
    return np.array(rows, dtype=float).reshape(len(rows), len(header))


@dataclass(frozen=True)
class BenchmarkConfig:
    dataset: str
    label_column: str = "label"
    positive_label: str | None = None
    train_fraction: float = 0.6
    replications: int = 500
    methods: tuple[str, ...] = ("qda", "rqda", "srqda", "knn1", "knn3", "knn5")
    rqda_candidates: tuple[float, ...] = RQDA_GAMMA_GRID
    rqda_folds: int = 5
    rqda_eta_form: str = "literal"
    grid_resolution: int = 20
    refine_resolution: int = 10
    isotropic_variance: bool = False
    setting: str = ""
    rng_seed: int = 20240715

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "rqda_candidates", tuple(float(g) for g in self.rqda_candidates))

    @property
    def label(self) -> str:
        return self.setting or Path(self.dataset).stem

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown benchmark keys: {sorted(unknown)}")
        return cls(**d)


def stratified_split(labels: np.ndarray, train_counts: tuple[int, int], rng) -> tuple[np.ndarray, np.ndarray]:
    train, test = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.shape[0])]
        train.append(idx[:train_counts[cls]])
        test.append(idx[train_counts[cls]:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def _fit_eval_benchmark(method: str, cfg: BenchmarkConfig, train: LabeledDataset,
                        test: LabeledDataset, seed: int) -> float | None:
    k = 1
    base = method
    if method.startswith("knn"):
        base, k = "knn", int(method[3:] or 1)
    settings = SrqdaSettings(grid_resolution=cfg.grid_resolution,
                             refine_resolution=cfg.refine_resolution,
                             isotropic_variance=cfg.isotropic_variance)
    try:
        model = fit_method(base, train, counts="auto", seed=seed,
                           rqda_candidates=cfg.rqda_candidates, rqda_folds=cfg.rqda_folds,
                           rqda_eta_form=cfg.rqda_eta_form, srqda=settings, knn_k=k)
        return float(np.mean(model.predict(test.features) == test.labels))
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.info("%s %s failed: %s", cfg.label, method, exc)
        return None


def _benchmark_one(task) -> dict[str, float | None]:
    cfg, data, train_counts, r = task
    n_train = sum(train_counts)
    seed = derive_seed(cfg.rng_seed, cfg.label, n_train, r)
    tr, te = stratified_split(data.labels, train_counts, make_rng(seed))
    train, test = data.subset(tr), data.subset(te)
    if min(test.counts()) == 0 or min(train.counts()) == 0:
        return {m: None for m in cfg.methods}
    return {m: _fit_eval_benchmark(m, cfg, train, test, seed) for m in cfg.methods}


def _collect(cfg, tasks, outs) -> AccuracyTable:
    results: dict[tuple[str, str, int], list] = {}
    for (_, _, counts, _), res in zip(tasks, outs):
        for method, acc in res.items():
            results.setdefault((cfg.label, method, sum(counts)), []).append(acc)
    return AccuracyTable(_aggregate(results))


def run_benchmark(config: BenchmarkConfig, data: LabeledDataset | None = None,
                  threads: int | None = 1) -> AccuracyTable:
    data = data if data is not None else read_labeled_csv(config.dataset, config.label_column,
                                                          config.positive_label)
    counts = data.counts()
    if min(counts) == 0:
        raise DataFormatError("dataset must contain both classes")
    train_counts = tuple(int(round(config.train_fraction * c)) for c in counts)
    tasks = [(config, data, train_counts, r) for r in range(config.replications)]
    return _collect(config, tasks, _run_tasks(_benchmark_one, tasks, threads))


def learning_curve(config: BenchmarkConfig, train_sizes, data: LabeledDataset | None = None,
                   threads: int | None = 1) -> AccuracyTable:
    """Accuracy per training size; the test split is everything not used for training."""
    data = data if data is not None else read_labeled_csv(config.dataset, config.label_column,
                                                          config.positive_label)
    counts = data.counts()
    tasks = []
    for size in train_sizes:
        size = int(size)
        if size >= data.n:
            raise ValueError(f"train size {size} leaves no test data (n={data.n})")
        c0 = int(round(size * counts[0] / data.n))
        tc = (c0, size - c0)
        if tc[0] >= counts[0] or tc[1] >= counts[1]:
            raise ValueError(f"train size {size} exhausts a class (class counts {counts})")
        tasks.extend((config, data, tc, r) for r in range(config.replications))
    return _collect(config, tasks, _run_tasks(_benchmark_one, tasks, threads))
