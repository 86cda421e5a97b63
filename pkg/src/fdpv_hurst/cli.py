"""Command-line workbench: ``fdpv-hurst {synth,detect,calibrate,plot-lambda,bench}``.

Exit codes: 0 success, 2 input or validation error, 3 precondition or
runtime error. A JSON ``--config`` file may provide any option (keys use
underscores, e.g. ``"p1"``, ``"threshold_mode"``); explicit command-line
options take precedence.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
import time
import tracemalloc
from pathlib import Path

import numpy as np

from . import svg
from .detector import DetectorConfig, calibrate_threshold, detect, filtered_derivative
from .ibs import hurst_of_lambda, ibs, lambda_of_hurst
from .io import CSVFormatError, read_json, read_series_csv, write_json, write_series_csv
from .synthesis import PiecewiseModel, SimulationError, simulate_fbm, simulate_piecewise_fbm
from .variance import DEFAULT_GRID, CalibrationError, VarianceTable, cached_variance_table, calibrate_variance

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3

DEFAULTS = {
    "seed": 0,
    "window": 2000,
    "p1": 0.05,
    "p2": 0.05,
    "threshold_mode": "mc",
    "replicates": 500,
    "min_separation": None,
    "calib_replicates": 2000,
    "calib_length": 2**14,
    "mode": "mc",
    "grid": None,
    "lags": 20,
    "pool_size": 2**22,
    "length": 2**14,
    "points": 400,
    "sizes": [2**20, 2**21],
    "repeats": 5,
}


class InputError(Exception):
    """Bad input file or option value (exit code 2)."""


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _settings(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the ``--config`` file and explicit options."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            data = read_json(args.config)
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: line {exc.lineno}: {exc.msg}") from None
        except OSError as exc:
            raise InputError(f"{args.config}: {exc.strerror}") from None
        if not isinstance(data, dict):
            raise InputError(f"{args.config}: expected a JSON object")
        merged.update({k.replace("-", "_"): v for k, v in data.items()})
    merged.update({k: v for k, v in vars(args).items() if v is not None})
    return merged


def _parse_grid(text) -> list[float]:
    if text is None:
        return list(DEFAULT_GRID)
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            count = int(round((hi - lo) / step)) + 1
            return [round(lo + i * step, 10) for i in range(count)]
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"invalid grid {text!r}; use 'lo:hi:step' or a comma list") from None


def _detector_config(s: dict) -> DetectorConfig:
    try:
        cfg = DetectorConfig(
            window=s["window"],
            p1=s["p1"],
            p2=s["p2"],
            threshold_mode=s["threshold_mode"],
            mc_replicates=s["replicates"],
            min_separation=s["min_separation"],
            seed=s["seed"],
        )
        return cfg.validate()
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid detector option: {exc}") from None


def _progress(h: float, s2: float) -> None:
    _log(f"  H={h:.3f}  sigma2={s2:.6f}")


def _auto_table(s: dict, target: Path) -> VarianceTable:
    _log(f"no variance table given; calibrating ({s['calib_replicates']} replicates, n={s['calib_length']})")
    table = cached_variance_table(
        DEFAULT_GRID, "mc", n=s["calib_length"], replicates=s["calib_replicates"], progress=_progress
    )
    table.save(target)
    _log(f"variance table written to {target}")
    return table


def _load_table(s: dict, out: Path) -> VarianceTable:
    path = s.get("table")
    if path and Path(path).exists():
        try:
            return VarianceTable.load(path)
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: invalid variance table: {exc}") from None
    return _auto_table(s, out.with_name(out.stem + ".table.json"))


def cmd_synth(args) -> int:
    s = _settings(args)
    try:
        model = PiecewiseModel.from_dict(read_json(args.model))
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.model}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise InputError(f"{args.model}: {exc.strerror}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{args.model}: {exc}") from None
    path, changes = simulate_piecewise_fbm(model, seed=s["seed"])
    out = Path(s["out"])
    write_series_csv(out, path, seed=s["seed"])
    truth = Path(s["truth"]) if s.get("truth") else out.with_name(out.stem + ".truth.json")
    write_json(truth, {"seed": s["seed"], "change_points": changes, "n_samples": int(path.shape[0]), **model.to_dict()})
    _log(f"wrote {path.shape[0]} samples to {out} and ground truth to {truth}")
    return EXIT_OK


def _plot_detection(path: np.ndarray, report, target: Path) -> None:
    trace = filtered_derivative(path, report.config.window)
    top = svg.Panel(title="Piecewise path", ylabel="X(t)")
    top.line(*svg.decimate(np.arange(path.shape[0]), path), label="path")
    bottom = svg.Panel(title="Filtered derivative |D|", xlabel="index", ylabel="|D(k,A)|")
    bottom.line(*svg.decimate(trace.indices, np.abs(trace.values)), label="|D|")
    bottom.hline(report.threshold_used, label="C1")
    retained = set(report.change_points)
    for c in report.potential:
        bottom.marker(c.index, c.height, color="#228b22" if c.index in retained else "#222222")
    svg.write(target, [top, bottom])


def cmd_detect(args) -> int:
    s = _settings(args)
    cfg = _detector_config(s)
    try:
        path = read_series_csv(args.data)
    except CSVFormatError as exc:
        raise InputError(f"{args.data}: {exc}") from None
    except OSError as exc:
        raise InputError(f"{args.data}: {exc.strerror}") from None
    out = Path(s["out"])
    table = _load_table(s, out)
    report = detect(path, cfg, table)
    report.save(out)
    _log(f"{report.n_changes} change point(s) retained out of {len(report.potential)} potential")
    if s.get("plot"):
        target = out.with_suffix(".svg") if s["plot"] is True else Path(s["plot"])
        _plot_detection(path, report, target)
        _log(f"figure written to {target}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    s = _settings(args)
    grid = _parse_grid(s["grid"])
    if s["mode"] not in ("mc", "sum"):
        raise InputError(f"mode must be 'mc' or 'sum', got {s['mode']!r}")
    try:
        if s["mode"] == "mc":
            kwargs = {"n": s["length"], "replicates": s["calib_replicates"]}
        else:
            kwargs = {"lags": s["lags"], "pool_size": s["pool_size"]}
        _log(f"calibrating sigma2(H) on {len(grid)} grid points, mode {s['mode']}")
        table = calibrate_variance(grid, s["mode"], seed=s["seed"], progress=_progress, **kwargs)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    table.save(s["out"])
    return EXIT_OK


def cmd_plot_lambda(args) -> int:
    s = _settings(args)
    h = np.linspace(0.0, 1.0, int(s["points"]) + 1)[1:]
    panel = svg.Panel(title="Lambda(H)", xlabel="H", ylabel="Lambda(H)")
    panel.line(h, lambda_of_hurst(h), label="Lambda")
    svg.write(s["out"], [panel], panel_height=320)
    return EXIT_OK


def _peak_memory(path, cfg, table, threshold) -> int:
    tracemalloc.start()
    detect(path, cfg, table, threshold=threshold)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return peak


def cmd_bench(args) -> int:
    s = _settings(args)
    sizes = [int(v) for v in s["sizes"]]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InputError("sizes must be strictly ascending")
    cfg = _detector_config(s)
    out = Path(s["out"])
    table = _load_table(s, out)
    cases = []
    for n in sizes:
        path = simulate_fbm(0.5, 1.0, n, seed=s["seed"])
        cfg.validate(n)
        h, _ = hurst_of_lambda(ibs(path).value)
        c1 = calibrate_threshold(n, cfg.window, min(max(h, 0.01), 0.99), cfg.p1, "gaussian", variance_table=table)
        detect(path, cfg, table, threshold=c1)  # warm-up: page in buffers
        cases.append((path, c1))
    # Sizes are interleaved within each repeat so slow drifts of the host
    # affect every size alike and cancel in the ratios.
    times = [[] for _ in sizes]
    for _ in range(int(s["repeats"])):
        for i, (path, c1) in enumerate(cases):
            t0 = time.perf_counter()
            detect(path, cfg, table, threshold=c1)
            times[i].append(time.perf_counter() - t0)
    rows = []
    for n, (path, c1), t in zip(sizes, cases, times):
        peak = _peak_memory(path, cfg, table, c1)
        rows.append({"n": n, "median_s": statistics.median(t), "min_s": min(t), "peak_bytes": peak})
        _log(f"n={n}: median {rows[-1]['median_s'] * 1e3:.1f} ms, peak {peak / 2**20:.1f} MiB")
    for prev, row in zip([None, *rows], rows):
        row["time_ratio"] = "" if prev is None else row["median_s"] / prev["median_s"]
        row["memory_ratio"] = "" if prev is None else row["peak_bytes"] / prev["peak_bytes"]
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    panel = svg.Panel(title="detect wall time", xlabel="n", ylabel="seconds", logx=True, logy=True)
    panel.line([r["n"] for r in rows], [r["median_s"] for r in rows], label="median time")
    svg.write(out.with_suffix(".svg"), [panel])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdpv-hurst", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="JSON file supplying any option")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True, help=out_help)

    def detector_opts(p):
        p.add_argument("--window", "-A", type=int)
        p.add_argument("--p1", type=float, help="Step-1 level")
        p.add_argument("--p2", type=float, help="Step-2 level")
        p.add_argument("--threshold-mode", choices=("mc", "gaussian"))
        p.add_argument("--replicates", type=int, help="Monte-Carlo budget of the Step-1 threshold")
        p.add_argument("--min-separation", type=int)
        p.add_argument("--table", help="variance table JSON; calibrated if missing")
        p.add_argument("--calib-replicates", type=int)
        p.add_argument("--calib-length", type=int)

    p = sub.add_parser("synth", help="simulate a piecewise fBm from a model file")
    p.add_argument("model", help="JSON model with a 'segments' list")
    p.add_argument("--truth", help="ground-truth JSON (default: next to --out)")
    common(p, "output CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("detect", help="detect Hurst-index change points in a CSV series")
    p.add_argument("data", help="CSV series, one value per line")
    detector_opts(p)
    p.add_argument("--plot", nargs="?", const=True, help="write a two-panel SVG (optional path)")
    common(p, "report JSON")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("calibrate", help="tabulate sigma2(H)")
    p.add_argument("--grid", help="'lo:hi:step' or comma list (default 0.05:0.95:0.05)")
    p.add_argument("--mode", choices=("mc", "sum"))
    p.add_argument("--replicates", dest="calib_replicates", type=int)
    p.add_argument("--length", type=int, help="path length of the mc mode")
    p.add_argument("--lags", type=int)
    p.add_argument("--pool-size", type=int)
    common(p, "table JSON")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("plot-lambda", help="SVG of Lambda(H)")
    p.add_argument("--points", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_lambda)

    p = sub.add_parser("bench", help="time detect against series length")
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--repeats", type=int)
    detector_opts(p)
    common(p, "timing CSV (an SVG is written next to it)")
    p.set_defaults(func=cmd_bench, threshold_mode="gaussian")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT
    except (ValueError, IndexError, SimulationError, CalibrationError) as exc:
        _log(f"error: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
