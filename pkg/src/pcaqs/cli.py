"""
Command-line front end.

    pcaqs sample   --input data.csv --output-dir out [--method pcaqs] [--rate 0.1] [--report]
    pcaqs metrics  --input subset.csv --input2 source.csv --output-dir out
    pcaqs bench    compare|linear|adaptive|cluster|similarity [--reps 100] [--seed 42] [--timing]
    pcaqs generate --generator mixture|equicorr --output-dir out

Every command accepts ``--config file.json``; keys are the long option names
with dashes replaced by underscores, and explicit flags win over the file.
For ``bench`` the file may also set any experiment setting by name (for
example ``"mean_scale"`` or ``"kmeans_starts"``).

All outputs are staged in temporary files and renamed into place only after
every one of them has been produced, so a failing command leaves nothing
behind.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from pcaqs import __version__
from pcaqs import bench
from pcaqs.matrixcore import standardize
from pcaqs.metrics import DEFAULT_KL_RANK, DEFAULT_RIDGE, similarity_report
from pcaqs.samplers import Criterion, coreset_sample, leverage_sample, pcaqs_sample, srs_sample
from pcaqs.synthgen import equicorr_linear, gaussian_mixture

SAMPLE_METHODS = ("pcaqs", "srs", "coreset", "leverage")
CRITERIA = tuple(c.value for c in Criterion)

DEFAULTS = {
    "method": "pcaqs",
    "rate": 0.1,
    "groups": 5,
    "pcs": None,
    "var_threshold": 0.70,
    "criterion": "random",
    "seed": 42,
    "standardize": False,
    "report": False,
    "output_dir": "pcaqs-out",
    "pair_cap": "auto",
}


class CliError(Exception):
    """A user-facing failure; the message is printed and the exit code is 1."""


class CsvError(CliError, ValueError):
    pass


# --------------------------------------------------------------------------
# CSV


@dataclass
class CsvData:
    X: np.ndarray
    y: np.ndarray | None
    columns: list[str]
    y_name: str | None
    header: str
    lines: list[str]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


def ingest_csv(path: str) -> CsvData:
    """Read a numeric CSV with a header row.

    A column named ``y`` (any case) is split off as the response. Blank
    lines are skipped; data rows are numbered from 1 in diagnostics.
    """
    if not os.path.isfile(path):
        raise CsvError(f"{path}: file not found")
    with open(path, encoding="utf-8-sig", newline="") as fh:
        raw = fh.read().splitlines()
    if not raw or not raw[0].strip():
        raise CsvError(f"{path}: empty file, expected a header row")
    names = [h.strip() for h in next(csv.reader([raw[0]]))]
    if any(not h for h in names):
        raise CsvError(f"{path}: header has an empty column name")
    if len(set(names)) != len(names):
        dup = sorted({h for h in names if names.count(h) > 1})
        raise CsvError(f"{path}: duplicate column names: {', '.join(dup)}")
    y_cols = [j for j, h in enumerate(names) if h.lower() == "y"]
    if len(y_cols) > 1:
        raise CsvError(f"{path}: more than one response column named y")

    width = len(names)
    values, lines = [], []
    for lineno, line in enumerate(raw[1:], start=2):
        if not line.strip():
            continue
        row = len(lines) + 1
        cells = next(csv.reader([line]))
        if len(cells) != width:
            raise CsvError(f"{path}: ragged row {row} (line {lineno}): "
                           f"expected {width} fields, found {len(cells)}")
        parsed = []
        for j, cell in enumerate(cells):
            try:
                v = float(cell)
            except ValueError:
                raise CsvError(f"{path}: non-numeric value {cell.strip()!r} at row {row}, "
                               f"column {names[j]!r} (line {lineno})") from None
            if not np.isfinite(v):
                raise CsvError(f"{path}: non-finite value {cell.strip()!r} at row {row}, "
                               f"column {names[j]!r} (line {lineno})")
            parsed.append(v)
        values.append(parsed)
        lines.append(line)
    if not lines:
        raise CsvError(f"{path}: no data rows after the header")
    if y_cols and width == 1:
        raise CsvError(f"{path}: no feature columns besides the response")

    M = np.asarray(values, dtype=np.float64)
    y = None
    y_name = None
    if y_cols:
        j = y_cols[0]
        y, y_name = M[:, j].copy(), names[j]
        M = np.delete(M, j, axis=1)
        names = names[:j] + names[j + 1:]
    return CsvData(X=M, y=y, columns=names, y_name=y_name, header=raw[0], lines=lines)


def _format_row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


# --------------------------------------------------------------------------
# output staging


def write_outputs(output_dir: str, files: dict[str, str]) -> list[str]:
    """Write ``files`` (name -> text) into ``output_dir`` all-or-nothing."""
    os.makedirs(output_dir, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=output_dir)
            staged.append((tmp, os.path.join(output_dir, name)))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# commands


def cmd_sample(args) -> int:
    data = ingest_csv(args.input)
    X = data.X
    seed = args.seed
    if args.method == "pcaqs":
        sub = pcaqs_sample(
            X,
            retention_rate=args.rate,
            n_components=args.pcs,
            variance_threshold=None if args.pcs is not None else args.var_threshold,
            g=args.groups,
            criterion=args.criterion,
            seed=seed,
        )
    elif args.method == "srs":
        sub = srs_sample(X.shape[0], args.rate, seed=seed)
    elif args.method == "leverage":
        sub = leverage_sample(X, args.rate, rank=args.pcs, seed=seed)
    else:
        sub = coreset_sample(X, args.rate, seed=seed)

    idx = sub.indices
    subset_csv = "\n".join([data.header] + [data.lines[i] for i in idx]) + "\n"
    manifest = sub.to_manifest()
    manifest.update({
        "version": __version__,
        "input": args.input,
        "n_rows": data.n_rows,
        "columns": data.columns,
        "response": data.y_name,
        "g": args.groups if args.method == "pcaqs" else None,
        "k": sub.n_components,
    })
    if args.method == "pcaqs":
        manifest["variance_threshold"] = None if args.pcs is not None else args.var_threshold
        manifest["criterion"] = args.criterion
    files = {"subset.csv": subset_csv, "manifest.json": _dump(manifest)}
    if args.report:
        rep = _similarity(X[idx], X, args)
        files["report.json"] = _dump(rep.to_dict())
    write_outputs(args.output_dir, files)
    groups = f", {len(sub.group_manifest)} groups" if sub.group_manifest else ""
    print(f"{sub.method}: retained {len(idx)} of {data.n_rows} rows{groups}; "
          f"wrote {args.output_dir}")
    if args.report:
        print(_report_table(rep))
    return 0


def _similarity(A, B, args):
    if args.standardize:
        _, params = standardize(B)
        A, B = params.apply(A), params.apply(B)
    rep = similarity_report(A, B, pair_cap=bench.resolve_pair_cap(args.pair_cap, B.shape[0]),
                            seed=args.seed,
                            kl_rank=DEFAULT_KL_RANK, ridge=DEFAULT_RIDGE)
    rep.params["standardized"] = bool(args.standardize)
    return rep


def _report_table(rep) -> str:
    d = rep.to_dict()
    width = max(len(k) for k in bench.SIMILARITY_METRICS)
    return "\n".join(f"{k.ljust(width)}  {d[k]:.6g}" for k in bench.SIMILARITY_METRICS)


def cmd_metrics(args) -> int:
    if not args.input2:
        raise CliError("metrics needs --input (subset) and --input2 (source)")
    a = ingest_csv(args.input)
    b = ingest_csv(args.input2)
    if set(a.columns) != set(b.columns):
        only_a = sorted(set(a.columns) - set(b.columns))
        only_b = sorted(set(b.columns) - set(a.columns))
        raise CliError("column sets differ: "
                       f"only in {args.input}: {only_a or '[]'}; "
                       f"only in {args.input2}: {only_b or '[]'}")
    order = [a.columns.index(c) for c in b.columns]
    rep = _similarity(a.X[:, order], b.X, args)
    out = rep.to_dict() | {"input": args.input, "input2": args.input2,
                           "version": __version__}
    write_outputs(args.output_dir, {"metrics.json": _dump(out)})
    print(_report_table(rep))
    return 0


_CLI_TO_CONFIG = {
    "rate": "retention_rate",
    "groups": "g",
    "var_threshold": "variance_threshold",
    "reps": "replications",
    "seed": "master_seed",
    "input": "input_path",
    "n": "n",
    "p": "p",
}


def _parse_int_list(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    if isinstance(text, int):
        return (text,)
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise CliError(f"expected a comma-separated list of integers, got {text!r}") from None


def build_bench_config(args, extra: dict) -> bench.ExperimentConfig:
    exp = args.experiment
    over = dict(extra)
    for cli_name, cfg_name in _CLI_TO_CONFIG.items():
        v = getattr(args, cli_name, None)
        if v is not None:
            over[cfg_name] = v
    if args.standardize:
        over["standardize_metrics"] = True
    if args.method is not None:
        methods = tuple(m.strip() for m in args.method.split(",") if m.strip())
        over["methods"] = methods
    if args.criterion is not None:
        if exp != "adaptive":
            raise CliError("--criterion applies to the adaptive experiment only")
        over["criteria"] = (args.criterion,)
    if args.pcs is not None:
        ks = _parse_int_list(args.pcs)
        if exp == "adaptive":
            over["pcs_list"] = ks
        elif exp == "linear":
            over["fixed_ks"] = ks
        else:
            if len(ks) != 1:
                raise CliError(f"--pcs takes a single value for {exp}")
            over["n_components"] = ks[0]
    try:
        return bench.ExperimentConfig.for_experiment(exp, **over)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from None


def cmd_bench(args, extra: dict) -> int:
    if not args.experiment:
        raise CliError("bench needs an experiment: " + ", ".join(bench.EXPERIMENTS))
    cfg = build_bench_config(args, extra)
    report = bench.run(cfg)
    files = bench.report_files(report)
    if not args.timing:
        files = {k: v for k, v in files.items() if "_timing" not in k}
    write_outputs(args.output_dir, files)
    print(report.text_table())
    print(report.timing_table())
    print(f"wrote {len(files)} files to {args.output_dir}")
    return 0


def cmd_generate(args) -> int:
    if args.generator == "mixture":
        data = gaussian_mixture(args.n or 10_000, args.p or 50, K=args.K, seed=args.seed)
    else:
        data = equicorr_linear(args.n or 10_000, args.p or 500, rho=args.rho, seed=args.seed)
    names = [f"x{j + 1}" for j in range(data.p)] + ["y"]
    cols = [data.X, data.y[:, None]]
    if args.labels and data.component_labels is not None:
        names.append("label")
        cols.append(data.component_labels[:, None].astype(float))
    M = np.hstack(cols)
    body = [",".join(names)]
    if args.labels and data.component_labels is not None:
        body += [_format_row(r[:-1]) + f",{int(r[-1])}" for r in M]
    else:
        body += [_format_row(r) for r in M]
    meta = {"generator": data.generator, "params": data.params,
            "beta": data.beta.tolist(), "version": __version__}
    name = data.generator
    write_outputs(args.output_dir, {f"{name}.csv": "\n".join(body) + "\n",
                                    f"{name}_meta.json": _dump(meta)})
    print(f"wrote {data.n} x {data.p} {name} dataset to {args.output_dir}")
    return 0


# --------------------------------------------------------------------------
# argument handling


def _rate(text) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"rate must lie in (0, 1], got {text}")
    return v


def _threshold(text) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold must lie in (0, 1], got {text}")
    return v


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--output-dir", help="directory for output files (default pcaqs-out)")
    p.add_argument("--seed", type=int, help="master seed (default 42)")
    p.add_argument("--standardize", action="store_true", default=None,
                   help="standardize features before computing similarity metrics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcaqs", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"pcaqs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="draw a retentive subset from a CSV file")
    _add_common(s)
    s.add_argument("--input", help="source CSV (header row required)")
    s.add_argument("--method", choices=SAMPLE_METHODS)
    s.add_argument("--rate", type=_rate, help="retention rate in (0, 1] (default 0.1)")
    s.add_argument("--groups", type=int, help="quantile groups per component (default 5)")
    k = s.add_mutually_exclusive_group()
    k.add_argument("--pcs", type=int, help="fixed number of principal components")
    k.add_argument("--var-threshold", type=_threshold,
                   help="choose k by cumulative explained variance (default 0.70)")
    s.add_argument("--criterion", choices=CRITERIA, help="within-group selector (default random)")
    s.add_argument("--report", action="store_true", default=None,
                   help="also write similarity metrics of the subset against the input")

    m = sub.add_parser("metrics", help="similarity of one CSV file to another")
    _add_common(m)
    m.add_argument("--input", help="subset CSV")
    m.add_argument("--input2", help="source CSV")

    b = sub.add_parser("bench", help="run a replicated experiment")
    _add_common(b)
    b.add_argument("experiment", nargs="?", choices=bench.EXPERIMENTS)
    b.add_argument("--experiment", dest="experiment_flag", choices=bench.EXPERIMENTS)
    b.add_argument("--input", help="CSV dataset (similarity, cluster)")
    b.add_argument("--method", help="comma-separated methods: pcaqs, pcaqs-<criterion>, "
                                    "srs, coreset, leverage")
    b.add_argument("--rate", type=_rate)
    b.add_argument("--groups", type=int)
    b.add_argument("--pcs", help="PC count, or comma-separated list for linear/adaptive")
    b.add_argument("--var-threshold", type=_threshold)
    b.add_argument("--criterion", choices=CRITERIA[1:], help="adaptive design criterion")
    b.add_argument("--reps", type=int, help="replications (default 100)")
    b.add_argument("--timing", action="store_true", default=None,
                   help="also write wall-clock timing files (these differ between runs)")
    b.add_argument("--n", type=int, help="rows generated per replication")
    b.add_argument("--p", type=int, help="features generated per replication")

    g = sub.add_parser("generate", help="write a synthetic dataset to CSV")
    _add_common(g)
    g.add_argument("--generator", choices=("mixture", "equicorr"), default=None)
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--K", type=int, help="mixture components (default 5)")
    g.add_argument("--rho", type=float, help="equi-correlation (default 0.2)")
    g.add_argument("--labels", action="store_true", default=None,
                   help="append the mixture component as a 'label' column")
    return parser


_GENERATE_DEFAULTS = {"generator": "mixture", "K": 5, "rho": 0.2, "labels": False}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"{path}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise CliError(f"{path}: config must be a JSON object")
    return cfg


def _apply_config(args, config: dict) -> dict:
    """Fill unset options from ``config`` then ``DEFAULTS``; return leftover keys."""
    leftover = {}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest == "experiment" and args.command == "bench":
            if args.experiment is None:
                args.experiment = value
        elif hasattr(args, dest) and dest not in ("command", "config"):
            if getattr(args, dest) is None:
                setattr(args, dest, value)
        else:
            leftover[key] = value
    if args.command != "bench":
        for dest, value in (DEFAULTS | _GENERATE_DEFAULTS).items():
            if hasattr(args, dest) and getattr(args, dest) is None:
                setattr(args, dest, value)
    else:
        if args.output_dir is None:
            args.output_dir = DEFAULTS["output_dir"]
        if args.standardize is None:
            args.standardize = False
        if args.timing is None:
            args.timing = False
    if args.command in ("sample", "metrics") and not args.input:
        raise CliError(f"{args.command} needs --input")
    if args.command == "bench":
        known = {f.name for f in fields(bench.ExperimentConfig)}
        bad = sorted(set(leftover) - known)
    else:
        bad = sorted(leftover)
    if bad:
        raise CliError(f"unknown config keys: {', '.join(bad)}")
    return leftover


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench":
        if args.experiment and args.experiment_flag and args.experiment != args.experiment_flag:
            parser.error("conflicting experiment names")
        args.experiment = args.experiment or args.experiment_flag
    else:
        args.pair_cap = None
    try:
        extra = _apply_config(args, _load_config(args.config))
        if args.command == "sample":
            return cmd_sample(args)
        if args.command == "metrics":
            return cmd_metrics(args)
        if args.command == "bench":
            if args.experiment not in bench.EXPERIMENTS:
                parser.error(f"unknown experiment {args.experiment!r}")
            return cmd_bench(args, extra)
        return cmd_generate(args)
    except (CliError, ValueError, OSError, bench.BenchError) as exc:
        print(f"pcaqs: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
