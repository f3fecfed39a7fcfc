"""Command-line interface: figure data as CSV, simulations and calibration demos.

Every command writes RFC-4180 style CSV with a header row and 17 significant
digits. ``--config FILE`` reads ``key=value`` lines (``#`` comments); explicit
flags take precedence. ``PNRD_SEED`` sets the default seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analytics, calibration
from .calibration import CalibrationError, CalibrationPoint, CalibrationRun
from .montecarlo import SimConfig, simulate_counts
from .povm import DetectorModel
from .special import DomainError
from .states import SourceKind, make_source

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

RUN_COLUMNS = (
    "pump_setting", "nbar", "mean_count1", "se_mean_count1", "mean_count2", "se_mean_count2",
    "vdp", "se_vdp", "nrf", "se_nrf", "trials",
)
SIM_QUANTITIES = ("mean1", "mean2", "second1", "second2", "cross", "vdp", "nrf")


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return f"{float(value):.17g}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    Path(out).write_text(text)


# --- argument types -------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {value}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if not value >= 0.0 or math.isinf(value):
        raise argparse.ArgumentTypeError(f"must be a finite nonnegative number, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {value}")
    return value


def parse_grid(text: str, log: bool = True) -> np.ndarray:
    """``a,b,c`` lists values; ``lo:hi:n`` spans ``n`` points (log-spaced when ``log``)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"grid range must be lo:hi:n, got {text!r}")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1 or hi < lo or (log and lo <= 0):
            raise argparse.ArgumentTypeError(f"invalid grid range {text!r}")
        return np.geomspace(lo, hi, n) if log else np.linspace(lo, hi, n)
    values = np.array([float(v) for v in text.split(",") if v.strip()])
    if values.size == 0:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


def read_config(path: str) -> dict[str, str]:
    """``key=value`` per line; ``#`` starts a comment; keys use flag spelling."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


# --- run CSV --------------------------------------------------------------


def format_run(run: CalibrationRun) -> str:
    rows = [[getattr(p, c) for c in RUN_COLUMNS] for p in run.points]
    return _csv_text(RUN_COLUMNS, rows)


def read_run_csv(path: str, source_kind) -> CalibrationRun:
    """Read the run table (the first CSV block) written by ``calibrate``."""
    lines = Path(path).read_text().split("\n\n", 1)[0]
    reader = csv.DictReader(io.StringIO(lines))
    points = []
    for row in reader:
        points.append(
            CalibrationPoint(
                pump_setting=int(row["pump_setting"]),
                nbar=float(row["nbar"]) if row["nbar"] else math.nan,
                mean_count1=float(row["mean_count1"]),
                se_mean_count1=float(row["se_mean_count1"]),
                mean_count2=float(row["mean_count2"]),
                se_mean_count2=float(row["se_mean_count2"]),
                vdp=float(row["vdp"]),
                se_vdp=float(row["se_vdp"]),
                nrf=float(row["nrf"]),
                se_nrf=float(row["se_nrf"]),
                trials=int(row["trials"]),
            )
        )
    return CalibrationRun(SourceKind(source_kind), tuple(points))


# --- commands -------------------------------------------------------------


def cmd_response_curve(args) -> int:
    det = DetectorModel(args.eta, args.n_max_count)
    grid = np.geomspace(args.nbar_min, args.nbar_max, args.points)
    rows = [(nb, analytics.poisson_mean_count(det, nb), det.efficiency * nb) for nb in grid]
    _emit(_csv_text(("nbar", "mean_count", "no_saturation_reference"), rows), args.out)
    return EXIT_OK


def cmd_vdp_curve(args) -> int:
    d1 = DetectorModel(args.eta1, args.n1)
    d2 = DetectorModel(args.eta2, args.n2)
    rows = []
    for nb in args.nbar_grid:
        tmc = analytics.vdp_tmc(d1, d2, nb)
        twb = analytics.vdp_twb(d1, d2, nb)
        total = analytics.poisson_mean_count(d1, nb) + analytics.poisson_mean_count(d2, nb)
        nrf_tmc = tmc / total if total > 0 else math.nan
        nrf_twb = twb / total if total > 0 else math.nan
        rows.append((nb, tmc, twb, nrf_tmc, nrf_twb, tmc - twb))
    _emit(_csv_text(("nbar", "vdp_tmc", "vdp_twb", "nrf_tmc", "nrf_twb", "q"), rows), args.out)
    return EXIT_OK


def q_grid(n_max_count: int, nbar_grid, eta_grid) -> np.ndarray:
    """``Q[i, j]`` at ``nbar_grid[i]``, ``eta_grid[j]`` for balanced detectors."""
    q = np.empty((len(nbar_grid), len(eta_grid)))
    for j, eta in enumerate(eta_grid):
        det = DetectorModel(eta, n_max_count)
        for i, nb in enumerate(nbar_grid):
            q[i, j] = analytics.q_measure(det, det, nb)
    return q


def _ridge_paths(out: str | None) -> tuple[str | None, str | None]:
    if out is None or out == "-":
        return None, None
    p = Path(out)
    return str(p.with_name(p.stem + "_ridge_nbar.csv")), str(p.with_name(p.stem + "_ridge_eta.csv"))


def cmd_q_map(args) -> int:
    nbar_grid, eta_grid = args.nbar_grid, args.eta_grid
    q = q_grid(args.n_max_count, nbar_grid, eta_grid)
    rows = [(nb, eta, q[i, j]) for i, nb in enumerate(nbar_grid) for j, eta in enumerate(eta_grid)]
    ridge_nbar = [(eta, nbar_grid[int(np.argmax(q[:, j]))], q[:, j].max()) for j, eta in enumerate(eta_grid)]
    ridge_eta = [(nb, eta_grid[int(np.argmax(q[i, :]))], q[i, :].max()) for i, nb in enumerate(nbar_grid)]
    path_nbar, path_eta = _ridge_paths(args.out)
    _emit(_csv_text(("nbar", "eta", "q"), rows), args.out)
    if path_nbar is None:
        sys.stdout.write("\n" + _csv_text(("eta", "nbar_opt", "q"), ridge_nbar))
        sys.stdout.write("\n" + _csv_text(("nbar", "eta_opt", "q"), ridge_eta))
    else:
        _emit(_csv_text(("eta", "nbar_opt", "q"), ridge_nbar), path_nbar)
        _emit(_csv_text(("nbar", "eta_opt", "q"), ridge_eta), path_eta)
    return EXIT_OK


def cmd_simulate(args) -> int:
    d1 = DetectorModel(args.eta1, args.n1)
    d2 = DetectorModel(args.eta2, args.n2)
    source = make_source(args.source, args.nbar, max(args.n1, args.n2))
    cfg = SimConfig(args.seed, args.trials, args.workers)
    sample = simulate_counts(source, d1, d2, cfg)
    exact = analytics.count_statistics(args.source, d1, d2, args.nbar)
    header = ["source", "nbar", "trials", "seed", "workers"]
    row: list = [SourceKind(args.source).value, args.nbar, args.trials, args.seed, args.workers]
    for q in SIM_QUANTITIES:
        emp, ana, se = getattr(sample, q), getattr(exact, q), getattr(sample, "se_" + q)
        diff = emp - ana
        if se > 0:
            z = diff / se
        else:
            z = 0.0 if diff == 0 or math.isnan(diff) else math.copysign(math.inf, diff)
        header += [f"{q}_empirical", f"{q}_analytic", f"{q}_se", f"{q}_z"]
        row += [emp, ana, se, z]
    _emit(_csv_text(header, [row]), args.out)
    return EXIT_OK


DEFAULT_GRIDS = {"twb-linear": "0.1:20:8", "tmc-nonlinear": "0.5:500:10"}
DEFAULT_TRIALS = {"twb-linear": 1_000_000, "tmc-nonlinear": 100_000}


def cmd_calibrate(args) -> int:
    method = args.method
    kind = SourceKind.TWB if method == "twb-linear" else SourceKind.TMC
    truth = None
    if args.input:
        run = read_run_csv(args.input, kind)
    else:
        missing = [f for f in ("true_eta1", "true_eta2", "true_n1", "true_n2") if getattr(args, f) is None]
        if missing:
            raise _Usage("calibrate needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
        d1 = DetectorModel(args.true_eta1, args.true_n1)
        d2 = DetectorModel(args.true_eta2, args.true_n2)
        grid = parse_grid(args.grid or DEFAULT_GRIDS[method])
        trials = args.trials or DEFAULT_TRIALS[method]
        run = calibration.generate_synthetic_run(kind, d1, d2, grid, trials, args.seed, args.workers)
        truth = run.truth
    if method == "twb-linear":
        result = calibration.calibrate_twb_linear(run, args.regime_threshold)
    else:
        result = calibration.calibrate_tmc_nonlinear(run, args.nbar_mode)
    block = [
        ("method", result.method),
        ("k_ratio", result.k_ratio),
        ("eta1", result.eta1),
        ("eta2", result.eta2),
        ("se_eta1", result.se_eta1),
        ("se_eta2", result.se_eta2),
        ("n1_hat", result.n1_hat),
        ("n2_hat", result.n2_hat),
        ("fit_residual", result.fit_residual),
        ("degenerate", result.degenerate),
        ("points_used", " ".join(str(i) for i in result.points_used)),
    ]
    if truth is not None:
        err1, err2 = result.errors_against(truth)
        block += [("abs_error_eta1", err1), ("abs_error_eta2", err2)]
        if result.n1_hat is not None:
            block += [("abs_error_n1", abs(result.n1_hat - truth.n1)), ("abs_error_n2", abs(result.n2_hat - truth.n2))]
    rows = [(k, v if isinstance(v, str) else fmt(v)) for k, v in block]
    _emit(format_run(run) + "\n" + _csv_text(("key", "value"), rows), args.out)
    return EXIT_OK


# --- parser ---------------------------------------------------------------


class _Usage(Exception):
    pass


REQUIRED = {
    "response-curve": ("eta", "n_max_count"),
    "vdp-curve": ("eta1", "eta2", "n1", "n2"),
    "q-map": ("n_max_count",),
    "simulate": ("source", "eta1", "eta2", "n1", "n2", "nbar"),
    "calibrate": ("method",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnrd", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("response-curve", help="mean count vs mean photon number (Poisson light)")
    p.add_argument("--eta", type=_probability)
    p.add_argument("--n-max-count", type=_positive_int)
    p.add_argument("--nbar-min", type=float, default=1e-2)
    p.add_argument("--nbar-max", type=float, default=1e3)
    p.add_argument("--points", type=_positive_int, default=200)
    p.add_argument("--out")
    p.set_defaults(func=cmd_response_curve)

    p = sub.add_parser("vdp-curve", help="difference variance, NRF and Q for TMC and TWB light")
    for name in ("--eta1", "--eta2"):
        p.add_argument(name, type=_probability)
    for name in ("--n1", "--n2"):
        p.add_argument(name, type=_positive_int)
    p.add_argument("--nbar-grid", type=parse_grid, default="0.01:1000:200")
    p.add_argument("--out")
    p.set_defaults(func=cmd_vdp_curve)

    p = sub.add_parser("q-map", help="Q over (mean photon number, efficiency) with ridge lines")
    p.add_argument("--n-max-count", type=_positive_int)
    p.add_argument("--nbar-grid", type=parse_grid, default="0.05:50:60")
    p.add_argument("--eta-grid", type=lambda t: parse_grid(t, log=False), default="0.02:1:50")
    p.add_argument("--out")
    p.set_defaults(func=cmd_q_map)

    p = sub.add_parser("simulate", help="Monte Carlo run compared with the closed forms")
    p.add_argument("--source", choices=("tmc", "twb"))
    for name in ("--eta1", "--eta2"):
        p.add_argument(name, type=_probability)
    for name in ("--n1", "--n2"):
        p.add_argument(name, type=_positive_int)
    p.add_argument("--nbar", type=_nonneg_float)
    p.add_argument("--trials", type=_positive_int, default=1_000_000)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="run a calibration protocol on synthetic data")
    p.add_argument("--method", choices=("twb-linear", "tmc-nonlinear"))
    for name in ("--true-eta1", "--true-eta2"):
        p.add_argument(name, type=_probability)
    for name in ("--true-n1", "--true-n2"):
        p.add_argument(name, type=_positive_int)
    p.add_argument("--grid", help="mean photon numbers: a,b,c or lo:hi:n (log-spaced)")
    p.add_argument("--trials", type=_positive_int)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--regime-threshold", type=float, default=0.1)
    p.add_argument("--nbar-mode", choices=("reference", "infer"), default="reference")
    p.add_argument("--input", help="read the run table from this CSV instead of simulating")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)
    return parser


def _merge_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        try:
            config = read_config(args.config)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config: {exc}")
        # re-parse with config values as flags placed before the explicit ones
        sub_argv = []
        for key, value in config.items():
            flag = "--" + key.replace("_", "-")
            if not any(a == flag or a.startswith(flag + "=") for a in argv):
                sub_argv += [flag, value]
        idx = argv.index(args.command)
        args = parser.parse_args(argv[: idx + 1] + sub_argv + argv[idx + 1 :])
    if getattr(args, "seed", "absent") is None:
        env = os.environ.get("PNRD_SEED")
        args.seed = _seed(env) if env else 0
    missing = [k for k in REQUIRED[args.command] if getattr(args, k, None) is None]
    if missing:
        parser.error("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _merge_config(parser, argv)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    try:
        return args.func(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"pnrd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as exc:
        print(f"pnrd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except DomainError as exc:
        print(f"pnrd: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"pnrd: I/O error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
