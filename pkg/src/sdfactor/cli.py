"""Command line entry point: ``sdfactor <verb> [options]``.

Verbs: ``estimate``, ``roll``, ``mc``, ``weak``, ``meanfield``, ``density``.
Errors go to stderr as one JSON object and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import frv
from .dataio import DataFormatError, export_densities, load_table
from .estimator import EstimatorConfig, SearchGrid, estimate, real_density
from .harness import ExperimentSpec, run_experiment, run_meanfield_demo, run_weak_factor_sweep
from .rolling import DEFAULT_WINDOW, rolling_estimate
from .spectra import ConstantSeriesError, normalize_panel
from .synthgen import SyntheticConfig

__all__ = ["main"]

WORKERS_ENV = "SDFACTOR_WORKERS"
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_FAILURE = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # route usage errors through the JSON channel
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise _UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _add_search(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("search grid")
    g.add_argument("--p-max", type=int, default=SearchGrid.p_max)
    g.add_argument("--b-max", type=float, default=SearchGrid.b_max)
    g.add_argument("--b-step", type=float, default=SearchGrid.b_step)
    g.add_argument("--bins", type=int, default=None, help="surface bins (default max(10, N/10))")
    g.add_argument("--fit-bins", type=int, default=None, help="bins for the final b fit (default N/4)")
    g.add_argument("--tolerance", type=float, default=EstimatorConfig.tolerance, help="p selection slack in units of ln2/N")
    g.add_argument("--binning", choices=("gauss", "midpoint"), default=EstimatorConfig.binning)
    g.add_argument("--epsilon", type=float, default=EstimatorConfig.epsilon, help="imaginary offset of z")
    g.add_argument("--c-mode", choices=("full", "reduced"), default=EstimatorConfig.c_mode)


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="CSV, one date column then one column per series")
    p.add_argument("--input-kind", choices=("price", "return"), default="price")
    p.add_argument("--missing", choices=("drop-series", "drop-dates"), default="drop-series")


def _add_synthetic(p: argparse.ArgumentParser, n_default: int = 200) -> None:
    g = p.add_argument_group("synthetic panel")
    g.add_argument("--n", type=int, default=n_default)
    g.add_argument("--t", type=int, default=None, help="defaults to N")
    g.add_argument("--p-true", type=int, default=4)
    g.add_argument("--inv-snr", type=float, default=0.25)
    g.add_argument("--rho", type=float, default=0.0)
    g.add_argument("--beta", type=float, default=0.0)
    g.add_argument("--j", type=int, default=None, help="neighbour range, defaults to N // 10")
    g.add_argument("--replications", type=int, default=50)
    g.add_argument("--seed-base", type=int, default=0)
    g.add_argument("--methods", default="SD,BIC3,ED,ER")


def _grid(a) -> SearchGrid:
    return SearchGrid(p_max=a.p_max, b_max=a.b_max, b_step=a.b_step)


def _config(a) -> EstimatorConfig:
    return EstimatorConfig(
        bins=a.bins,
        fit_bins=a.fit_bins,
        tolerance=a.tolerance,
        binning=a.binning,
        epsilon=a.epsilon,
        c_mode=a.c_mode,
    )


def _synthetic(a) -> SyntheticConfig:
    t = a.t if a.t is not None else a.n
    j = a.j if a.j is not None else a.n // 10
    return SyntheticConfig(n=a.n, t=t, p_true=a.p_true, inv_snr=a.inv_snr, rho=a.rho, beta=a.beta, j=j)


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _write_report(report, a) -> None:
    if a.output_csv:
        Path(a.output_csv).write_text(report.to_csv())
    _emit(report.to_json(include_records=a.records) + "\n", a.output)


def _cmd_estimate(a) -> None:
    data = load_table(a.input, a.input_kind, a.missing)
    res = estimate(normalize_panel(data.panel), _grid(a), _config(a))
    out = res.to_dict(include_surface=a.include_surface)
    out.update(n=data.panel.n, t=data.panel.t)
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", a.output)


def _cmd_roll(a) -> None:
    data = load_table(a.input, a.input_kind, a.missing)
    series = rolling_estimate(data.panel, a.window, a.step, _grid(a), _config(a), data.dates, a.workers)
    rows = series.rows()
    target = open(a.output, "w", newline="") if a.output else sys.stdout
    try:
        writer = csv.DictWriter(target, fieldnames=list(rows[0]) if rows else ["date"], lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})
    finally:
        if a.output:
            target.close()


def _cmd_mc(a) -> None:
    spec = ExperimentSpec(
        configs=(_synthetic(a),),
        replications=a.replications,
        methods=tuple(a.methods.split(",")),
        seed_base=a.seed_base,
        grid=_grid(a),
        estimator=_config(a),
    )
    _write_report(run_experiment(spec, a.workers), a)


def _cmd_weak(a) -> None:
    report = run_weak_factor_sweep(
        _synthetic(a),
        _floats(a.sigma),
        _ints(a.weak_counts),
        tuple(a.methods.split(",")),
        a.replications,
        a.seed_base,
        _grid(a),
        _config(a),
        a.workers,
    )
    _write_report(report, a)


def _cmd_meanfield(a) -> None:
    pairs = run_meanfield_demo(a.n, a.t, _floats(a.candidates), a.seed, a.low, a.high, a.bins)
    best = min(pairs, key=lambda x: x[1])
    out = {"n": a.n, "t": a.t, "seed": a.seed, "js": [{"b_bar": b, "js": v} for b, v in pairs], "argmin": best[0]}
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", a.output)


def _cmd_density(a) -> None:
    data = load_table(a.input, a.input_kind, a.missing)
    panel = normalize_panel(data.panel)
    config = _config(a)
    p, b = a.p, a.b
    if p is None or b is None:
        res = estimate(panel, _grid(a), config)
        p = res.p_hat if p is None else p
        b = res.b_hat if b is None else b
    grid = _grid(a)
    real = real_density(panel, p, config, grid if p <= grid.p_max else None)
    c = config.aspect_ratio(panel, p)
    model = frv.model_density(frv.ModelParams(b, c), real.bin_edges, config.epsilon, config.binning)
    mp = frv.mp_density(c, real.bin_edges, config.binning)
    export_densities(real, model, mp, a.output)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdfactor", description="Spectral-distance factor model estimation")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate (p, b) for one panel")
    _add_input(p)
    _add_search(p)
    p.add_argument("--include-surface", action="store_true")
    p.add_argument("--output", help="JSON path (default stdout)")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("roll", help="moving-window estimates")
    _add_input(p)
    _add_search(p)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_roll)

    for name, func, helptext in (("mc", _cmd_mc, "Monte Carlo on one synthetic config"), ("weak", _cmd_weak, "weak-factor sweep")):
        p = sub.add_parser(name, help=helptext)
        _add_synthetic(p)
        _add_search(p)
        if name == "weak":
            p.add_argument("--sigma", default="0.1,0.2,0.3,0.5,1.0", help="comma-separated sigma_weak values")
            p.add_argument("--weak-counts", default="3,4")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--records", action="store_true", help="include per-replication records in the JSON")
        p.add_argument("--output", help="JSON path (default stdout)")
        p.add_argument("--output-csv", help="also write the summary rows as CSV")
        p.set_defaults(func=func)

    p = sub.add_parser("meanfield", help="heterogeneous vs homogeneous AR(1) spectra")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--t", type=int, default=600)
    p.add_argument("--candidates", default="0.35,0.5,0.65")
    p.add_argument("--low", type=float, default=0.0)
    p.add_argument("--high", type=float, default=1.0)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="JSON path (default stdout)")
    p.set_defaults(func=_cmd_meanfield)

    p = sub.add_parser("density", help="export real/model/MP densities on one grid")
    _add_input(p)
    _add_search(p)
    p.add_argument("--p", type=int, default=None, help="defaults to the estimated p")
    p.add_argument("--b", type=float, default=None, help="defaults to the estimated b")
    p.add_argument("--output", required=True, help="CSV path")
    p.set_defaults(func=_cmd_density)
    return parser


def _fail(kind: str, message: str, code: int, **extra) -> int:
    payload = {"error": kind, "message": message}
    payload.update({k: v for k, v in extra.items() if v is not None})
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    import logging

    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr)
        if getattr(args, "workers", 0) is None:
            args.workers = _default_workers()
        args.func(args)
    except _UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except ConstantSeriesError as exc:
        return _fail("constant_series", str(exc), EXIT_INPUT, series_id=exc.series_id)
    except DataFormatError as exc:
        return _fail("input", str(exc), EXIT_INPUT, path=exc.path, row=exc.row, column=exc.column)
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_INPUT if isinstance(exc, OSError) else EXIT_FAILURE)
    except Exception as exc:  # noqa: BLE001 - every failure leaves as JSON
        return _fail(type(exc).__name__, str(exc), EXIT_FAILURE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
