"""
Replicated experiment runner.

Five experiments share one shape: for every replication ``r`` a dataset is
generated (or loaded), each method draws a subset with a seed that depends
only on ``(master_seed, r, method)``, and the per-replication values are
collected into an :class:`AggregateReport`. Because seeds never depend on
execution order, replications can be run in any order with identical results.

Wall-clock timings are kept apart from the deterministic values so that the
value reports can be compared byte-for-byte across reruns.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np

from pcaqs import __version__
from pcaqs._rng import derive_seed
from pcaqs.cluster import assign_nearest, kmeans, silhouette
from pcaqs.matrixcore import as_matrix, fit_pca, ols_fit, standardize
from pcaqs.metrics import SourceReference, mse, r_squared, relative_mse
from pcaqs.samplers import (
    Criterion,
    coreset_sample,
    leverage_sample,
    pcaqs_sample,
    srs_sample,
)
from pcaqs.synthgen import SyntheticDataset, equicorr_linear, gaussian_mixture

EXPERIMENTS = ("compare", "linear", "adaptive", "cluster", "similarity")
BASE_METHODS = ("pcaqs", "srs", "coreset", "leverage")
DESIGN_CRITERIA = ("a_optimal", "d_optimal", "g_optimal", "uncertainty")
SIMILARITY_METRICS = ("energy", "mahalanobis", "kl", "mmd")

# exact pairwise metrics up to this many source rows, sampled pairs above it
_AUTO_EXACT_ROWS = 20_000


class BenchError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "compare"
    methods: tuple[str, ...] = BASE_METHODS
    retention_rate: float = 0.1
    g: int = 5
    n_components: int | None = None
    variance_threshold: float = 0.70
    replications: int = 100
    master_seed: int = 42
    # data source: a generator, or a CSV path (similarity / cluster)
    generator: str = "mixture"
    n: int = 10_000
    p: int = 50
    K: int = 5
    mean_scale: float = 5.0
    noise_sigma: float = 1.0
    rho: float = 0.2
    beta_sigma: float = 0.1
    input_path: str | None = None
    # experiment specifics
    criteria: tuple[str, ...] = DESIGN_CRITERIA
    pcs_list: tuple[int, ...] = (1, 2, 3, 4, 5)
    fixed_ks: tuple[int, ...] = (2, 5, 10)
    holdout_fraction: float = 0.2
    eval_mode: str = "full"
    n_clusters: int = 7
    kmeans_starts: int = 10
    silhouette_cap: int = 2000
    fit_repeats: int = 3
    # metric settings
    pair_cap: int | str | None = "auto"
    bandwidth: float | None = None
    kl_rank: int = 10
    ridge: float = 1e-8
    standardize_metrics: bool = False

    def __post_init__(self):
        for name in ("methods", "criteria", "pcs_list", "fixed_ks"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; "
                             f"valid: {', '.join(EXPERIMENTS)}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0.0 < self.retention_rate <= 1.0:
            raise ValueError(f"retention rate must lie in (0, 1], got {self.retention_rate}")
        if self.g < 2:
            raise ValueError("g must be at least 2")
        if not 0.0 < self.variance_threshold <= 1.0:
            raise ValueError("variance threshold must lie in (0, 1]")
        if self.generator not in ("mixture", "equicorr"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.eval_mode not in ("full", "holdout"):
            raise ValueError("eval_mode must be 'full' or 'holdout'")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout fraction must lie in (0, 1)")
        for c in self.criteria:
            Criterion(c)
        for m in self.methods:
            _method_spec(m)
        if self.experiment == "similarity" and not self.input_path:
            raise ValueError("the similarity experiment needs an input CSV")

    @classmethod
    def for_experiment(cls, experiment: str, **overrides) -> "ExperimentConfig":
        """Defaults for ``experiment`` (desk scale), then ``overrides``."""
        base = dict(_EXPERIMENT_DEFAULTS.get(experiment, {}))
        base.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = set(base) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(experiment=experiment, **base)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out


_EXPERIMENT_DEFAULTS: dict[str, dict] = {
    "compare": {"generator": "mixture", "n": 10_000, "p": 50, "retention_rate": 0.1},
    "linear": {
        "generator": "equicorr", "n": 10_000, "p": 500, "retention_rate": 0.1,
        "methods": ("coreset", "leverage"), "eval_mode": "holdout", "noise_sigma": 0.5,
    },
    "adaptive": {
        "generator": "equicorr", "n": 10_000, "p": 50, "retention_rate": 0.05, "noise_sigma": 0.5,
    },
    "cluster": {
        "generator": "mixture", "n": 20_000, "p": 10, "K": 7, "retention_rate": 0.2,
        "methods": ("pcaqs",),
    },
    "similarity": {"retention_rate": 0.1},
}


# --------------------------------------------------------------------------
# reports


def summarize(values) -> dict:
    """mean, std (n - 1 denominator), min, max and count of ``values``."""
    v = np.asarray(values, dtype=float)
    count = int(v.size)
    if count == 0:
        return {"mean": None, "std": None, "min": None, "max": None, "count": 0}
    return {
        "mean": float(v.mean()),
        "std": float(v.std(ddof=1)) if count > 1 else None,
        "min": float(v.min()),
        "max": float(v.max()),
        "count": count,
    }


@dataclass
class AggregateReport:
    experiment: str
    config: dict
    rows: list[str]
    metrics: list[str]
    values: dict[tuple[str, str], list[float]] = field(default_factory=dict)
    timing: dict[tuple[str, str], list[float]] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def record(self, row: str, metric: str, value: float) -> None:
        self.values.setdefault((row, metric), []).append(float(value))

    def record_time(self, row: str, phase: str, seconds: float) -> None:
        self.timing.setdefault((row, phase), []).append(float(seconds))

    def raw(self, row: str, metric: str) -> list[float]:
        return self.values[(row, metric)]

    def cell(self, row: str, metric: str) -> dict:
        return summarize(self.values.get((row, metric), []))

    def mean(self, row: str, metric: str) -> float:
        return self.cell(row, metric)["mean"]

    def time_cell(self, row: str, phase: str) -> dict:
        return summarize(self.timing.get((row, phase), []))

    def to_dict(self) -> dict:
        cells = {}
        for (row, metric), vals in self.values.items():
            entry = self.cell(row, metric)
            entry["values"] = list(vals)
            cells.setdefault(row, {})[metric] = entry
        return {
            "experiment": self.experiment,
            "version": __version__,
            "config": self.config,
            "rows": list(self.rows),
            "metrics": list(self.metrics),
            "cells": cells,
            "extras": self.extras,
        }

    def timing_dict(self) -> dict:
        cells = {}
        for (row, phase), vals in self.timing.items():
            entry = self.time_cell(row, phase)
            entry["values"] = list(vals)
            cells.setdefault(row, {})[phase] = entry
        return {"experiment": self.experiment, "unit": "seconds", "cells": cells}

    def plot_rows(self) -> list[tuple]:
        out = []
        for (row, metric), vals in self.values.items():
            for r, v in enumerate(vals):
                out.append((self.experiment, row, metric, r, v))
        return out

    def plot_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "method", "metric", "replication", "value"])
        for exp, row, metric, r, v in self.plot_rows():
            w.writerow([exp, row, metric, r, repr(v)])
        return buf.getvalue()

    def text_table(self) -> str:
        return _TABLE_WRITERS.get(self.experiment, _rows_by_metrics)(self)

    def timing_table(self) -> str:
        if self.experiment == "adaptive":
            return _adaptive_timing_table(self)
        phases = sorted({ph for _, ph in self.timing})
        rows = [r for r in self.rows if any((r, ph) in self.timing for ph in phases)]
        header = ["Method"] + [f"{ph} (s)" for ph in phases]
        body = [[r] + [_fmt_cell(self.time_cell(r, ph)) for ph in phases] for r in rows]
        return _align(header, body)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if v != 0 and abs(v) < 1e-3:
        return f"{v:.3e}"
    return f"{v:.4f}"


def _fmt_cell(c: dict) -> str:
    if c["count"] == 0:
        return "-"
    if c["std"] is None:
        return _fmt(c["mean"])
    return f"{_fmt(c['mean'])} ({_fmt(c['std'])})"


def _align(header: list[str], body: list[list[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
    lines = []
    for j, r in enumerate([header] + body):
        cells = [str(c).ljust(w) if i == 0 else str(c).rjust(w)
                 for i, (c, w) in enumerate(zip(r, widths))]
        lines.append("  ".join(cells).rstrip())
        if j == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines) + "\n"


_METRIC_LABELS = {
    "energy": "Energy Dist.",
    "mahalanobis": "Mahalanobis Dist.",
    "kl": "KL Div.",
    "mmd": "MMD",
    "mse": "MSE",
    "r2": "R2",
    "retained": "Retained",
    "k": "k",
}


def _rows_by_metrics(rep: AggregateReport) -> str:
    header = ["Method"] + [_METRIC_LABELS.get(m, m) for m in rep.metrics]
    body = [[r] + [_fmt_cell(rep.cell(r, m)) for m in rep.metrics] for r in rep.rows]
    note = f"mean (std) over {rep.config['replications']} replications\n"
    return _align(header, body) + note


def _linear_table(rep: AggregateReport) -> str:
    out = _rows_by_metrics(rep)
    dyn = rep.extras.get("dynamic_k")
    if dyn:
        out += (f"dynamic k: mean {_fmt(dyn['mean'])}, sd {_fmt(dyn['std'])}, "
                f"min {dyn['min']:.0f}, max {dyn['max']:.0f}\n")
    return out


def _adaptive_table(rep: AggregateReport) -> str:
    blocks = []
    labels = [("mse_ret", "MSE Ret"), ("mse_full", "MSE Full"), ("r2_ret", "R2 Ret"),
              ("r2_full", "R2 Full"), ("rel_mse", "Rel MSE")]
    for crit in rep.extras["criteria"]:
        cols = [f"{crit}/pcs={k}" for k in rep.extras["pcs_list"]]
        header = [crit] + [f"{k} PC" + ("s" if k > 1 else "") for k in rep.extras["pcs_list"]]
        body = [[lab] + [_fmt_cell(rep.cell(c, m)) for c in cols] for m, lab in labels]
        blocks.append(_align(header, body))
    return "\n".join(blocks) + f"mean (std) over {rep.config['replications']} replications\n"


def _adaptive_timing_table(rep: AggregateReport) -> str:
    blocks = []
    for crit in rep.extras["criteria"]:
        cols = [f"{crit}/pcs={k}" for k in rep.extras["pcs_list"]]
        header = [crit] + [f"{k} PC" + ("s" if k > 1 else "") for k in rep.extras["pcs_list"]]
        body = [
            ["CPU Ret"] + [_fmt_cell(rep.time_cell(c, "fit_ret")) for c in cols],
            ["CPU Full"] + [_fmt_cell(rep.time_cell(c, "fit_full")) for c in cols],
            ["Speedup*"] + [_fmt_cell(summarize(_speedups(rep, c))) for c in cols],
        ]
        blocks.append(_align(header, body))
    return ("\n".join(blocks)
            + "* speedup = CPU Full / CPU Ret per replication (OLS fit time, seconds)\n")


def _speedups(rep, col) -> list[float]:
    ret = rep.timing.get((col, "fit_ret"), [])
    full = rep.timing.get((col, "fit_full"), [])
    return [f / r for f, r in zip(full, ret) if r > 0]


def _cluster_table(rep: AggregateReport) -> str:
    out = _rows_by_metrics(rep)
    ex = rep.extras
    for t, frac in zip(ex["thresholds"], ex["fraction_within"]):
        out += f"|difference| < {t}: {frac:.1%} of replications\n"
    hist = ex["histogram"]
    out += "histogram of differences (retentive - full):\n"
    edges = hist["edges"]
    out += f"  below {edges[0]:+.2f}: {hist['underflow']}\n"
    for lo, hi, c in zip(edges[:-1], edges[1:], hist["counts"]):
        if c:
            out += f"  [{lo:+.2f}, {hi:+.2f}): {c}\n"
    out += f"  at or above {edges[-1]:+.2f}: {hist['overflow']}\n"
    return out


def _similarity_table(rep: AggregateReport) -> str:
    name = rep.extras.get("dataset", "dataset")
    header = ["Dataset", "Method"] + [_METRIC_LABELS[m] for m in rep.metrics]
    body = [[name, r] + [_fmt_cell(rep.cell(r, m)) for m in rep.metrics] for r in rep.rows]
    return _align(header, body) + f"mean (std) over {rep.config['replications']} replications\n"


_TABLE_WRITERS: dict[str, Callable[[AggregateReport], str]] = {
    "linear": _linear_table,
    "adaptive": _adaptive_table,
    "cluster": _cluster_table,
    "similarity": _similarity_table,
}


# --------------------------------------------------------------------------
# shared plumbing


def _method_spec(method: str) -> tuple[str, str | None]:
    """Split ``pcaqs`` / ``pcaqs-<criterion>`` / baseline names."""
    if method in ("srs", "coreset", "leverage"):
        return method, None
    if method == "pcaqs":
        return "pcaqs", "random"
    if method.startswith("pcaqs-"):
        crit = method[len("pcaqs-"):]
        aliases = {"aopt": "a_optimal", "dopt": "d_optimal", "gopt": "g_optimal",
                   "uncert": "uncertainty"}
        crit = aliases.get(crit, crit)
        Criterion(crit)
        return "pcaqs", crit
    raise ValueError(f"unknown method {method!r}; valid: pcaqs, pcaqs-<criterion>, "
                     "srs, coreset, leverage")


def draw_subset(method: str, X: np.ndarray, cfg: ExperimentConfig, seed: int,
                n_components: int | None = None, criterion: str | None = None):
    kind, crit = _method_spec(method)
    if kind == "pcaqs":
        k = n_components if n_components is not None else cfg.n_components
        return pcaqs_sample(
            X,
            retention_rate=cfg.retention_rate,
            n_components=k,
            variance_threshold=None if k is not None else cfg.variance_threshold,
            g=cfg.g,
            criterion=criterion or crit,
            seed=seed,
        )
    if kind == "srs":
        return srs_sample(X.shape[0], cfg.retention_rate, seed=seed)
    if kind == "leverage":
        return leverage_sample(X, cfg.retention_rate, seed=seed)
    return coreset_sample(X, cfg.retention_rate, seed=seed)


def generate(cfg: ExperimentConfig, seed: int) -> SyntheticDataset:
    if cfg.generator == "mixture":
        return gaussian_mixture(cfg.n, cfg.p, cfg.K, cfg.mean_scale, cfg.noise_sigma, seed=seed)
    return equicorr_linear(cfg.n, cfg.p, cfg.rho, cfg.beta_sigma, cfg.noise_sigma, seed=seed)


def data_seed(master: int, rep: int) -> int:
    return derive_seed(master, rep, "data")


def method_seed(master: int, rep: int, method: str) -> int:
    return derive_seed(master, rep, method)


def resolve_pair_cap(pair_cap, n_source: int) -> int | None:
    if pair_cap == "auto":
        return None if n_source <= _AUTO_EXACT_ROWS else 100_000
    return pair_cap


def _metric_space(X: np.ndarray, cfg: ExperimentConfig) -> Callable[[np.ndarray], np.ndarray]:
    if not cfg.standardize_metrics:
        return lambda A: A
    _, params = standardize(X)
    return params.apply


def _source_reference(X: np.ndarray, cfg: ExperimentConfig, master: int, rep: int):
    to_space = _metric_space(X, cfg)
    ref = SourceReference.build(
        to_space(X),
        pair_cap=resolve_pair_cap(cfg.pair_cap, X.shape[0]),
        seed=derive_seed(master, rep, "metrics"),
        bandwidth=cfg.bandwidth,
        kl_rank=cfg.kl_rank,
        ridge=cfg.ridge,
    )
    return ref, to_space


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _best_time(repeats: int, fn, *args):
    best, out = math.inf, None
    for _ in range(max(1, repeats)):
        out, dt = _timed(fn, *args)
        best = min(best, dt)
    return out, best


def _replicate(cfg: ExperimentConfig, body: Callable[[int], None]) -> None:
    for r in range(cfg.replications):
        try:
            body(r)
        except Exception as exc:  # re-raised with the replication index attached
            raise BenchError(f"{cfg.experiment}: replication {r} failed: {exc}") from exc


def _new_report(cfg: ExperimentConfig, rows, metrics) -> AggregateReport:
    return AggregateReport(cfg.experiment, cfg.to_dict(), list(rows), list(metrics))


# --------------------------------------------------------------------------
# experiments


def run_comparison(cfg: ExperimentConfig) -> AggregateReport:
    """Samplers against the full data: four similarity measures and OLS MSE."""
    master = cfg.master_seed
    report = _new_report(cfg, cfg.methods, SIMILARITY_METRICS + ("mse",))

    def one(r):
        data = generate(cfg, data_seed(master, r))
        X, y = data.X, data.y
        ref, to_space = _source_reference(X, cfg, master, r)
        for m in cfg.methods:
            sub, t_sample = _timed(draw_subset, m, X, cfg, method_seed(master, r, m))
            idx = sub.indices
            fit, t_fit = _timed(ols_fit, X[idx], y[idx])
            sim, t_metrics = _timed(ref.compare, to_space(X[idx]))
            for name in SIMILARITY_METRICS:
                report.record(m, name, getattr(sim, name))
            report.record(m, "mse", mse(y, fit.predict(X)))
            report.record_time(m, "sampling", t_sample)
            report.record_time(m, "fitting", t_fit)
            report.record_time(m, "metrics", t_metrics)
        report.extras.setdefault("metric_params", ref.params() | {"seed": "per replication"})

    _replicate(cfg, one)
    return report


def run_linear(cfg: ExperimentConfig) -> AggregateReport:
    """Equi-correlated linear model: fixed-k and dynamic-k PCA-QS plus baselines."""
    master = cfg.master_seed
    pcaqs_rows = [f"pcaqs-k{k}" for k in cfg.fixed_ks] + ["pcaqs-dyn"]
    rows = pcaqs_rows + [m for m in cfg.methods if m not in pcaqs_rows]
    report = _new_report(cfg, rows, ("mse", "r2", "retained"))
    dyn_ks = []

    def one(r):
        data = generate(cfg, data_seed(master, r))
        X, y = data.X, data.y
        n = X.shape[0]
        if cfg.eval_mode == "holdout":
            perm = np.random.default_rng(derive_seed(master, r, "split")).permutation(n)
            n_test = max(1, int(round(cfg.holdout_fraction * n)))
            test, train = np.sort(perm[:n_test]), np.sort(perm[n_test:])
        else:
            test = train = np.arange(n)
        Xtr, ytr = X[train], y[train]
        for row in rows:
            seed = method_seed(master, r, row)
            if row.startswith("pcaqs-k"):
                k = min(int(row[len("pcaqs-k"):]), min(Xtr.shape))
                sub, dt = _timed(draw_subset, "pcaqs", Xtr, cfg, seed, n_components=k)
            elif row == "pcaqs-dyn":
                c = replace(cfg, n_components=None)
                sub, dt = _timed(draw_subset, "pcaqs", Xtr, c, seed)
                dyn_ks.append(sub.n_components)
            else:
                sub, dt = _timed(draw_subset, row, Xtr, cfg, seed)
            idx = sub.indices
            fit, t_fit = _timed(ols_fit, Xtr[idx], ytr[idx])
            pred = fit.predict(X[test])
            report.record(row, "mse", mse(y[test], pred))
            report.record(row, "r2", r_squared(y[test], pred))
            report.record(row, "retained", len(idx) / len(train))
            report.record_time(row, "sampling", dt)
            report.record_time(row, "fitting", t_fit)

    _replicate(cfg, one)
    report.extras["dynamic_k"] = summarize(dyn_ks) | {"values": dyn_ks}
    report.extras["eval_mode"] = cfg.eval_mode
    return report


def run_adaptive(cfg: ExperimentConfig) -> AggregateReport:
    """PCA-QS with design-based selection inside groups, one column per PC count.

    MSE Ret and MSE Full are both evaluated on the full data; CPU Ret and CPU
    Full are the OLS fit times (best of ``fit_repeats``) on the subset and on
    the full data.
    """
    master = cfg.master_seed
    cols = [f"{c}/pcs={k}" for c in cfg.criteria for k in cfg.pcs_list]
    report = _new_report(cfg, cols, ("mse_ret", "mse_full", "r2_ret", "r2_full", "rel_mse",
                                     "retained"))
    report.extras["criteria"] = list(cfg.criteria)
    report.extras["pcs_list"] = list(cfg.pcs_list)

    def one(r):
        data = generate(cfg, data_seed(master, r))
        X, y = data.X, data.y
        full_fit, t_full = _best_time(cfg.fit_repeats, ols_fit, X, y)
        pred_full = full_fit.predict(X)
        mse_full, r2_full = mse(y, pred_full), r_squared(y, pred_full)
        for crit in cfg.criteria:
            for k in cfg.pcs_list:
                col = f"{crit}/pcs={k}"
                seed = method_seed(master, r, f"pcaqs-{crit}-{k}")
                sub, t_sample = _timed(draw_subset, "pcaqs", X, cfg, seed,
                                       n_components=k, criterion=crit)
                idx = sub.indices
                fit, t_ret = _best_time(cfg.fit_repeats, ols_fit, X[idx], y[idx])
                pred = fit.predict(X)
                m_ret = mse(y, pred)
                report.record(col, "mse_ret", m_ret)
                report.record(col, "mse_full", mse_full)
                report.record(col, "r2_ret", r_squared(y, pred))
                report.record(col, "r2_full", r2_full)
                report.record(col, "rel_mse", relative_mse(m_ret, mse_full))
                report.record(col, "retained", len(idx))
                report.record_time(col, "sampling", t_sample)
                report.record_time(col, "fit_ret", t_ret)
                report.record_time(col, "fit_full", t_full)

    _replicate(cfg, one)
    return report


def run_cluster(cfg: ExperimentConfig, X: np.ndarray | None = None) -> AggregateReport:
    """k-means on the retentive subset vs on the full data, scored by silhouette.

    Both centroid sets induce assignments on the full data; both silhouettes
    use the same uniform subsample of the full data.
    """
    master = cfg.master_seed
    report = _new_report(cfg, ["pcaqs"], ("sil_retentive", "sil_full", "sil_diff"))
    if X is None and cfg.input_path:
        X = load_matrix(cfg.input_path)
    fixed = X

    def one(r):
        data_X = fixed if fixed is not None else generate(cfg, data_seed(master, r)).X
        sub, t_sample = _timed(draw_subset, cfg.methods[0] if cfg.methods else "pcaqs",
                               data_X, cfg, method_seed(master, r, "pcaqs"))
        sub_X = data_X[sub.indices]
        k = cfg.n_clusters
        km_ret, t_ret = _timed(kmeans, sub_X, k, n_starts=cfg.kmeans_starts,
                               seed=derive_seed(master, r, "kmeans-ret"))
        km_full, t_full = _timed(kmeans, data_X, k, n_starts=cfg.kmeans_starts,
                                 seed=derive_seed(master, r, "kmeans-full"))
        sil_seed = derive_seed(master, r, "silhouette")
        s_ret = silhouette(data_X, assign_nearest(km_ret.centroids, data_X),
                           sample_cap=cfg.silhouette_cap, seed=sil_seed)
        s_full = silhouette(data_X, km_full.assignments, sample_cap=cfg.silhouette_cap,
                            seed=sil_seed)
        report.record("pcaqs", "sil_retentive", s_ret)
        report.record("pcaqs", "sil_full", s_full)
        report.record("pcaqs", "sil_diff", s_ret - s_full)
        report.record_time("pcaqs", "sampling", t_sample)
        report.record_time("pcaqs", "kmeans_ret", t_ret)
        report.record_time("pcaqs", "kmeans_full", t_full)

    _replicate(cfg, one)
    diffs = np.abs(np.asarray(report.raw("pcaqs", "sil_diff")))
    thresholds = [0.05, 0.1]
    report.extras["thresholds"] = thresholds
    report.extras["fraction_within"] = [float(np.mean(diffs < t)) for t in thresholds]
    edges = np.round(np.linspace(-0.2, 0.2, 41), 10)
    d = np.asarray(report.raw("pcaqs", "sil_diff"))
    counts, _ = np.histogram(d[(d >= edges[0]) & (d < edges[-1])], bins=edges)
    report.extras["histogram"] = {
        "edges": edges.tolist(),
        "counts": counts.tolist(),
        "underflow": int(np.sum(d < edges[0])),
        "overflow": int(np.sum(d >= edges[-1])),
    }
    return report


def run_similarity(cfg: ExperimentConfig, X: np.ndarray | None = None,
                   name: str | None = None) -> AggregateReport:
    """Every method on one fixed dataset, scored with the four similarity measures."""
    master = cfg.master_seed
    if X is None:
        X = load_matrix(cfg.input_path)
        name = name or cfg.input_path
    X = as_matrix(X)
    report = _new_report(cfg, cfg.methods, SIMILARITY_METRICS)
    report.extras["dataset"] = str(name or "dataset")
    report.extras["n"], report.extras["p"] = int(X.shape[0]), int(X.shape[1])

    def one(r):
        ref, to_space = _source_reference(X, cfg, master, r)
        for m in cfg.methods:
            sub, t_sample = _timed(draw_subset, m, X, cfg, method_seed(master, r, m))
            sim, t_metrics = _timed(ref.compare, to_space(X[sub.indices]))
            for metric in SIMILARITY_METRICS:
                report.record(m, metric, getattr(sim, metric))
            report.record_time(m, "sampling", t_sample)
            report.record_time(m, "metrics", t_metrics)
        report.extras.setdefault("metric_params", ref.params() | {"seed": "per replication"})

    _replicate(cfg, one)
    return report


def load_matrix(path: str) -> np.ndarray:
    # local import: the CSV reader lives with the command-line front end
    from pcaqs.cli import ingest_csv
    return ingest_csv(path).X


RUNNERS: dict[str, Callable[[ExperimentConfig], AggregateReport]] = {
    "compare": run_comparison,
    "linear": run_linear,
    "adaptive": run_adaptive,
    "cluster": run_cluster,
    "similarity": run_similarity,
}


def run(cfg: ExperimentConfig) -> AggregateReport:
    return RUNNERS[cfg.experiment](cfg)


def report_files(report: AggregateReport) -> dict[str, str]:
    """File name -> contents. Files ending in ``_timing`` hold wall-clock data."""
    exp = report.experiment
    return {
        f"{exp}.json": json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        f"{exp}.txt": report.text_table(),
        f"{exp}_plot.csv": report.plot_csv(),
        f"{exp}_timing.json": json.dumps(report.timing_dict(), indent=2, sort_keys=True) + "\n",
        f"{exp}_timing.txt": report.timing_table(),
    }
