"""Benchmark driver.

Subcommands ``kernel-approx``, ``sinkhorn``, ``features`` and
``sketch-selftest`` write CSV reports (or LIBSVM features). Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import apps
from .data import Dataset, parse_libsvm, synthetic, synthetic_pixels, write_libsvm
from .errors import (
    ConvergenceError,
    DataError,
    DimensionError,
    NumericalRangeError,
    PositivityError,
    SingularSystemError,
)
from .sketch import SketchFamilySet, derive_seed, tensor_sketch, tensor_sketch_direct

__all__ = ["Dataset", "ExperimentConfig", "main", "parse_libsvm", "write_libsvm"]

SCHEMA_VERSION = 1
HEADER = ["method", "m", "r", "gamma", "seed", "metric", "value"]
SINKHORN_HEADER = ["method", "m", "r", "gamma", "seed", "n", "iteration", "metric", "value"]
EXACT_LIMIT = 5000
SAMPLED_PAIRS = 65536

KERNEL_METHODS = ("coreset-ts", "taylor-ts", "chebyshev-ts", "optimal-ts", "rff", "nystrom", "exact")
SINKHORN_METHODS = ("exact", "coreset-ts", "rff", "nystrom")
COMMAND_DEFAULTS = {
    "kernel-approx": dict(m=10, r=10, k_centers=10, gamma=1.0, methods=("coreset-ts", "taylor-ts", "rff")),
    "sinkhorn": dict(m=20, r=3, k_centers=10, gamma=1.0, methods=SINKHORN_METHODS),
    "features": dict(m=20, r=3, k_centers=10, gamma=1.0, methods=("coreset-ts",)),
    "sketch-selftest": dict(m=8, r=3, k_centers=10, gamma=1.0, methods=("tensor-sketch",)),
}

NUMERICAL_ERRORS = (
    SingularSystemError,
    NumericalRangeError,
    ConvergenceError,
    PositivityError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str
    m: int = 10
    r: int = 10
    k_centers: int = 10
    gamma: float = 1.0
    seed: int = 0
    trials: int = 1
    methods: tuple = ()
    iters: int = 10
    repeats: int = 5
    workers: int = 1
    input: str | None = None
    target: str | None = None
    synthetic: tuple | None = None
    out: str | None = None
    report: str | None = None

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def median_time(fn, repeats):
    """Median wall time in ms over ``repeats`` calls after one discarded warmup call."""
    result = fn()
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        times.append(1e3 * (time.perf_counter() - start))
    return float(np.median(times)) if times else float("nan"), result


def _load(cfg):
    if cfg.input is not None:
        return parse_libsvm(cfg.input)
    if cfg.synthetic is None:
        raise UsageError("need --input PATH or --synthetic N,D")
    return synthetic(*cfg.synthetic, seed=cfg.seed)


class _ExactRbf:
    def __init__(self, U, gamma):
        self.U, self.gamma = U, gamma

    def materialize(self):
        return apps.rbf_kernel(self.U, self.gamma)

    def entries(self, rows, cols):
        return np.exp(-np.sum((self.U[rows] - self.U[cols]) ** 2, axis=1) / self.gamma)


def build_kernel(method, U, cfg, seed):
    """Kernel approximation object exposing ``materialize`` and ``entries``."""
    if method in ("coreset-ts", "taylor-ts", "chebyshev-ts", "optimal-ts"):
        coeff_method = {"coreset-ts": "coreset", "taylor-ts": "taylor", "chebyshev-ts": "chebyshev"}.get(
            method, "exact"
        )
        return apps.rbf_factorize(U, cfg.gamma, cfg.m, cfg.r, cfg.k_centers, seed, coeff_method)
    if method == "rff":
        F = apps.rff_features(U, cfg.gamma, cfg.m * cfg.r, seed)
        return apps.LowRankKernel(F, np.eye(F.shape[1]), F)
    if method == "nystrom":
        s = min(apps.nystrom_sample_size(cfg.m, cfg.r), U.shape[0])
        return apps.nystrom_approx(U, cfg.gamma, s, seed)
    if method == "exact":
        return _ExactRbf(U, cfg.gamma)
    raise UsageError(f"unknown method {method!r}")


def kernel_errors(approx, U, gamma, seed):
    """``(relative Frobenius error, mean relative entry error)``; sampled when n > 5000."""
    n = U.shape[0]
    if n <= EXACT_LIMIT:
        K = apps.rbf_kernel(U, gamma)
        Kh = approx.materialize()
        return apps.relative_frobenius_error(Kh, K), apps.mean_relative_entry_error(Kh, K)
    rng = np.random.default_rng(derive_seed(seed, 7))
    rows, cols = rng.integers(n, size=(2, SAMPLED_PAIRS))
    exact = _ExactRbf(U, gamma).entries(rows, cols)
    est = approx.entries(rows, cols)
    fro = float(np.sqrt(np.sum((est - exact) ** 2) / np.sum(exact**2)))
    return fro, float(np.mean(np.abs(est - exact) / exact))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _kernel_trial(args):
    cfg, trial, dataset = args
    seed = cfg.seed + trial
    if dataset is None:
        dataset = synthetic(*cfg.synthetic, seed=seed)
    U = dataset.features
    rows = []
    for method in cfg.methods:
        ms, approx = median_time(lambda: build_kernel(method, U, cfg, seed), cfg.repeats)
        fro, mean = kernel_errors(approx, U, cfg.gamma, seed)
        base = [method, cfg.m, cfg.r, cfg.gamma, seed]
        rows += [base + ["rel_error_fro", fro], base + ["rel_error_mean", mean], base + ["wall_ms", ms]]
    return rows


def _run_trials(fn, cfg, dataset):
    jobs = [(cfg, t, dataset) for t in range(cfg.trials)]
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(fn, jobs))
    else:
        results = [fn(job) for job in jobs]
    return [row for rows in results for row in rows]


def cmd_kernel_approx(cfg, dataset=None):
    """Kernel approximation errors per method and trial.

    ``dataset=None`` draws a fresh synthetic matrix per trial.
    """
    return HEADER, _run_trials(_kernel_trial, cfg, dataset)


def _sinkhorn_method(method):
    return "polyts" if method in ("coreset-ts", "polyts") else method


def _sinkhorn_trial(args):
    cfg, trial, (source, target) = args
    seed = cfg.seed + trial
    if source is None:
        source, target = synthetic_pixels(*cfg.synthetic, seed=seed)
    a = np.full(len(source), 1.0 / len(source))
    b = np.full(len(target), 1.0 / len(target))
    params = dict(m=cfg.m, r=cfg.r, k_centers=cfg.k_centers, seed=seed)
    exact_obj = apps.sinkhorn(source, target, a, b, cfg.gamma, cfg.iters, "exact").objective
    rows = []
    for method in cfg.methods:
        kernel = _sinkhorn_method(method)
        build_ms, op = median_time(
            lambda: apps.sinkhorn_kernel(source, target, cfg.gamma, kernel, **params), cfg.repeats
        )
        run_ms, state = median_time(
            lambda: apps.sinkhorn(source, target, a, b, cfg.gamma, cfg.iters, op=op), cfg.repeats
        )
        base = [method, cfg.m, cfg.r, cfg.gamma, seed, len(source), state.iterations]
        rows += [
            base + ["wall_ms_per_iter", run_ms / max(cfg.iters, 1)],
            base + ["build_ms", build_ms],
            base + ["objective", state.objective],
            base + ["objective_ratio", state.objective / exact_obj],
            base + ["residual", state.residual],
            base + ["clamped_count", state.clamped],
        ]
    return rows


def cmd_sinkhorn(cfg, source=None, target=None):
    """Approximate Sinkhorn per method; ratios are against the exact kernel run."""
    if (source is None) != (target is None):
        raise UsageError("sinkhorn needs both --input and --target, or --synthetic")
    if source is not None and source.shape[1] != target.shape[1]:
        raise DataError(f"source has {source.shape[1]} columns, target has {target.shape[1]}")
    return SINKHORN_HEADER, _run_trials(_sinkhorn_trial, cfg, (source, target))


def cmd_features(cfg, dataset, out_path):
    """Write RBF features of width ``1 + r m`` in LIBSVM format; return the Gram-error report."""
    U = dataset.features
    ms, F = median_time(
        lambda: apps.rbf_feature_map(U, cfg.gamma, cfg.m, cfg.r, cfg.k_centers, cfg.seed), cfg.repeats
    )
    try:
        write_libsvm(out_path, F, dataset.labels)
    except OSError as exc:
        raise DataError(f"cannot write {out_path}: {exc.strerror}") from None
    fro, mean = kernel_errors(apps.LowRankKernel(F, np.eye(F.shape[1]), F), U, cfg.gamma, cfg.seed)
    base = ["coreset-ts", cfg.m, cfg.r, cfg.gamma, cfg.seed]
    rows = [
        base + ["rel_error_fro", fro],
        base + ["rel_error_mean", mean],
        base + ["width", F.shape[1]],
        base + ["wall_ms", ms],
    ]
    return HEADER, rows


def cmd_sketch_selftest(cfg):
    """FFT-path TensorSketch against the enumeration oracle over small (d, m, degree)."""
    rows = []
    worst = 0.0
    for d in (2, 3):
        for m in (2, 3, 4, 8):
            for degree in range(4):
                diff = 0.0
                for t in range(cfg.trials):
                    seed = derive_seed(cfg.seed, t)
                    rng = np.random.default_rng(seed)
                    U = rng.normal(size=(2, d))
                    fs = SketchFamilySet.draw(seed, d, m, max(degree, 1))
                    fast = tensor_sketch(U, fs, degree)
                    for row, out in zip(U, fast):
                        diff = max(diff, float(np.max(np.abs(out - tensor_sketch_direct(row, fs, degree)))))
                worst = max(worst, diff)
                rows.append([f"d={d},degree={degree}", m, degree, cfg.gamma, cfg.seed, "max_abs_diff", diff])
    rows.append(["all", cfg.m, cfg.r, cfg.gamma, cfg.seed, "pass", int(worst <= 1e-9)])
    if worst > 1e-9:
        raise FloatingPointError(f"FFT path deviates from the direct oracle by {worst:.3e}")
    return HEADER, rows


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _shape(text):
    try:
        n, d = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N,D got {text!r}") from None
    if n < 1 or d < 1:
        raise argparse.ArgumentTypeError("N and D must be positive")
    return n, d


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser():
    parser = _Parser(prog="polysketch", description="Poly-TensorSketch benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "kernel-approx": "RBF kernel approximation error and timing",
        "sinkhorn": "approximate Sinkhorn objective ratio and per-iteration time",
        "features": "export sketched RBF features in LIBSVM format",
        "sketch-selftest": "check the FFT TensorSketch against the direct oracle",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--input", metavar="PATH", help="LIBSVM data file")
        src.add_argument("--synthetic", metavar="N,D", type=_shape, help="N x D matrix with N(0, 1/D) entries")
        p.add_argument("--target", metavar="PATH", help="target points for sinkhorn (LIBSVM)")
        p.add_argument("--m", type=_positive_int, help="sketch dimension")
        p.add_argument("--r", type=int, help="polynomial degree")
        p.add_argument("--k", dest="k_centers", type=_positive_int, help="coreset size")
        p.add_argument("--gamma", type=float, help="kernel bandwidth")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trials", type=_positive_int, default=1)
        p.add_argument("--method", help="comma-separated methods")
        p.add_argument("--iters", type=_positive_int, default=10, help="sinkhorn sweeps")
        p.add_argument("--repeats", type=int, default=5, help="timed repetitions after warmup")
        p.add_argument("--workers", type=_positive_int, default=1, help="processes for trials")
        p.add_argument("--out", metavar="PATH", help="output file (CSV report, or features)")
        p.add_argument("--report", metavar="PATH", help="side report path for features")
        p.add_argument("--dump-config", action="store_true", help="print the resolved config as JSON and exit")
    return parser


def config_from_args(ns):
    defaults = COMMAND_DEFAULTS[ns.command]
    allowed = {
        "kernel-approx": KERNEL_METHODS,
        "sinkhorn": SINKHORN_METHODS + ("polyts",),
        "features": ("coreset-ts",),
        "sketch-selftest": ("tensor-sketch",),
    }[ns.command]
    methods = defaults["methods"] if ns.method is None else tuple(s.strip() for s in ns.method.split(","))
    if methods == ("all",):
        methods = allowed
    for m in methods:
        if m not in allowed:
            raise UsageError(f"unknown method {m!r} for {ns.command}; choose from {', '.join(allowed)}")
    pick = lambda key: defaults[key] if getattr(ns, key) is None else getattr(ns, key)  # noqa: E731
    cfg = ExperimentConfig(
        command=ns.command,
        m=pick("m"),
        r=pick("r"),
        k_centers=pick("k_centers"),
        gamma=pick("gamma"),
        seed=ns.seed,
        trials=ns.trials,
        methods=methods,
        iters=ns.iters,
        repeats=ns.repeats,
        workers=ns.workers,
        input=ns.input,
        target=ns.target,
        synthetic=ns.synthetic,
        out=ns.out,
        report=ns.report,
    )
    if cfg.r < 0 or cfg.repeats < 0:
        raise UsageError("--r and --repeats must be >= 0")
    if not cfg.gamma > 0:
        raise UsageError("--gamma must be positive")
    return cfg


def _emit(header, rows, path):
    stream = open(path, "w", newline="") if path else sys.stdout
    try:
        stream.write(f"# schema_version={SCHEMA_VERSION}\n")
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if path:
            stream.close()


def run(cfg):
    if cfg.command == "kernel-approx":
        dataset = parse_libsvm(cfg.input) if cfg.input else None
        if dataset is None and cfg.synthetic is None:
            raise UsageError("need --input PATH or --synthetic N,D")
        header, rows = cmd_kernel_approx(cfg, dataset)
    elif cfg.command == "sinkhorn":
        if cfg.input:
            if not cfg.target:
                raise UsageError("sinkhorn with --input also needs --target")
            header, rows = cmd_sinkhorn(cfg, parse_libsvm(cfg.input).features, parse_libsvm(cfg.target).features)
        elif cfg.synthetic is None:
            raise UsageError("need --input PATH --target PATH or --synthetic N,D")
        else:
            header, rows = cmd_sinkhorn(cfg)
    elif cfg.command == "features":
        if not cfg.out:
            raise UsageError("features needs --out PATH")
        header, rows = cmd_features(cfg, _load(cfg), cfg.out)
        _emit(header, rows, cfg.report)
        return
    else:
        header, rows = cmd_sketch_selftest(cfg)
    _emit(header, rows, cfg.out)


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        if ns.dump_config:
            print(cfg.to_json())
            return 0
        run(cfg)
    except UsageError as exc:
        print(f"polysketch: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, DimensionError) as exc:
        print(f"polysketch: data error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"polysketch: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
