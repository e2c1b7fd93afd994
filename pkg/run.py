#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import sys
import time
import asyncio
import logging
import argparse
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tabulate import tabulate

from logging_config import configure_logging
from Settings import thread_count
from Spectrum import MixtureSet, SourceLibrary
from Numerics import NumericalError
from Simulator import gen_mixtures, gen_sources
from ConfigFile import format_sim_config, load_sim_config
from Estimators import ESTIMATORS, EstimatorConfig, FitResult, gls_fit, residual_covariance
from Oracle import OracleConfig, oracle_fit
from RunReport import RunReport, compare_reports
from MatrixIO import (file_fingerprint, library_from_spectra, read_library_csv, read_matrix_csv,
                      read_mixtures_csv, write_library_csv, write_matrix_csv, write_mixtures_csv,
                      write_table_csv)

logger = logging.getLogger('CLI')

METHODS = ['ols', 'gls', 'agls', 'agls-scale', 'agmle-hetero', 'agmle-ar1', 'oracle']
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

SOURCES_FILE = 'sources.csv'
DERIVS_FILE = 'sources_deriv.csv'
MIXTURES_FILE = 'mixtures.csv'
TRUTH_A_FILE = 'truth_A.csv'
TRUTH_XI_FILE = 'truth_xi.csv'
TRUTH_V_FILE = 'truth_v.csv'
CONFIG_ECHO_FILE = 'config.txt'


def parse_rows(text: str) -> slice:
    """'START:STOP' -> slice; either bound may be omitted."""
    start, sep, stop = text.partition(':')
    if not sep:
        raise argparse.ArgumentTypeError(f"--rows expects START:STOP, got {text!r}")
    try:
        return slice(int(start) if start else None, int(stop) if stop else None)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--rows expects integer bounds, got {text!r}")


def estimator_config(args) -> EstimatorConfig:
    return EstimatorConfig(max_iterations=args.max_iter, tol=args.tol, taylor_order=args.taylor_order,
                           trim=args.trim, rho_override=args.rho)


def oracle_config(args) -> OracleConfig:
    low, high, step = args.scale_grid if args.scale_grid else (None, None, None)
    return OracleConfig(xi_max=args.xi_max, xi_step=args.xi_step, scale_low=low, scale_high=high,
                        scale_step=step, per_row=not args.shared_shift)


def run_method(method: str, X: MixtureSet, lib: SourceLibrary, args,
               noise_cov: Optional[np.ndarray] = None) -> FitResult:
    if method == 'gls':
        Q = residual_covariance(X, lib) if noise_cov is None else noise_cov
        return gls_fit(X, lib, Q)
    if method == 'oracle':
        return oracle_fit(X, lib, oracle_config(args))
    return ESTIMATORS[method](X, lib, estimator_config(args))


def cmd_simulate(args) -> int:
    cfg = load_sim_config(args.config, seed=args.seed)
    out = args.out or os.path.join('data', os.path.splitext(os.path.basename(args.config))[0])
    lib = gen_sources(cfg)
    X, truth = gen_mixtures(lib, cfg)

    os.makedirs(out, exist_ok=True)
    writers = [
        (SOURCES_FILE, lambda path: write_library_csv(path, lib.grid, lib.matrix, lib.names)),
        (DERIVS_FILE, lambda path: write_library_csv(path, lib.grid, lib.deriv_matrix, lib.names)),
        (MIXTURES_FILE, lambda path: write_mixtures_csv(path, X)),
        (TRUTH_A_FILE, lambda path: write_matrix_csv(path, truth.A, lib.names)),
        (TRUTH_XI_FILE, lambda path: write_matrix_csv(path, truth.Xi, lib.names)),
        (TRUTH_V_FILE, lambda path: write_matrix_csv(path, truth.v[None, :], lib.names)),
    ]
    written = []
    try:
        for filename, write in writers:
            path = os.path.join(out, filename)
            written.append(path)
            write(path)
        path = os.path.join(out, CONFIG_ECHO_FILE)
        written.append(path)
        with open(path, 'w') as f:
            f.write(format_sim_config(cfg))
    except Exception:
        for path in written:
            if os.path.exists(path):
                os.remove(path)
        logger.error(f"Simulation output to {out} failed; partial files removed")
        raise
    logger.info(f"Wrote {X.m} mixtures of {lib.n} sources on {X.grid} to {out}")
    return EXIT_OK


def _load_truth(data: str, row_ids: np.ndarray, names: Sequence[str]) -> Optional[np.ndarray]:
    path = os.path.join(data, TRUTH_A_FILE)
    if not os.path.isfile(path):
        return None
    A, columns, truth_ids = read_matrix_csv(path)
    if list(columns) != list(names):
        logger.warning(f"{path} lists sources {columns}, expected {list(names)}; ignoring ground truth")
        return None
    position = {int(r): i for i, r in enumerate(truth_ids)}
    if any(int(r) not in position for r in row_ids):
        logger.warning(f"{path} does not cover every fitted row; ignoring ground truth")
        return None
    return A[[position[int(r)] for r in row_ids]]


def cmd_fit(args) -> int:
    method = args.method or args.method_flag
    if method is None:
        raise ValueError(f"choose a method: {', '.join(METHODS)}")
    mixtures_path = os.path.join(args.data, MIXTURES_FILE)
    X, row_ids = read_mixtures_csv(mixtures_path)
    if args.source:
        lib = library_from_spectra(args.source)
        source_paths = list(args.source)
    else:
        source_paths = [os.path.join(args.data, SOURCES_FILE)]
        lib = read_library_csv(source_paths[0])
    lib.grid.require(X.grid, f"{source_paths[0]} vs {mixtures_path}")

    if args.rows is not None:
        start, stop, _ = args.rows.indices(X.m)
        X, row_ids = X.rows(start, stop), row_ids[start:stop]
    truth = _load_truth(args.data, row_ids, lib.names)
    noise_cov = read_matrix_csv(args.noise_cov)[0] if args.noise_cov else None

    logger.info(f"Fitting {method} on {X.m} mixtures of {lib.n} sources")
    started = time.perf_counter()
    fit = run_method(method, X, lib, args, noise_cov)
    wall_time = time.perf_counter() - started

    report = RunReport.from_fit(fit, lib.names, row_ids, truth=truth, wall_time=wall_time,
                                data_fingerprint=file_fingerprint(mixtures_path, *source_paths))
    out = args.out or os.path.join(args.data, f'fit_{method}')
    report.save(out)
    print(tabulate(report.summary_rows(), tablefmt='simple'))
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = [RunReport.load(directory) for directory in args.reports]
    summary, params, long_table = compare_reports(reports)
    os.makedirs(args.out, exist_ok=True)
    write_table_csv(os.path.join(args.out, 'compare_summary.csv'), summary)
    write_table_csv(os.path.join(args.out, 'compare_params.csv'), params)
    write_table_csv(os.path.join(args.out, 'compare_long.csv'), long_table)
    print(tabulate(summary, headers='keys', tablefmt='simple', showindex=False))
    if not params.empty:
        print()
        print(tabulate(params, headers='keys', tablefmt='simple', showindex=False))
    logger.info(f"Comparison of {len(reports)} reports written to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = RunReport.load(args.directory)
    print(tabulate(report.summary_rows(), tablefmt='simple'))
    params = report.params_table()
    if not params.empty:
        print()
        print(tabulate(params, headers='keys', tablefmt='simple', showindex=False))
    return EXIT_OK


def _sweep_row(seed: int, method: str, fit: FitResult, truth_A: np.ndarray, names: Sequence[str],
               wall_time: float) -> Dict[str, object]:
    errors = np.abs(fit.A_hat - truth_A)
    row = {
        'seed': seed, 'method': method,
        'mean_abs_error': float(np.mean(errors)), 'max_abs_error': float(np.max(errors)),
        'total_abs_error': float(np.sum(errors)),
        'iterations': fit.iterations, 'converged': fit.converged, 'wall_time': wall_time,
    }
    for parameter in ('sigma_hat', 'rho_hat', 'scale_hat'):
        values = getattr(fit, parameter)
        if values is not None:
            row.update({f"{parameter}.{name}": float(v) for name, v in zip(names, values)})
    if fit.tau_hat is not None:
        row['tau_hat'] = fit.tau_hat
    return row


async def run_sweep(args) -> pd.DataFrame:
    """Simulate one data set per seed and fit every method on it, concurrently."""
    semaphore = asyncio.Semaphore(max(1, thread_count()))
    base = load_sim_config(args.config)

    async def fit_one(seed: int, method: str, X: MixtureSet, lib: SourceLibrary, truth_A: np.ndarray):
        async with semaphore:
            started = time.perf_counter()
            fit = await asyncio.to_thread(run_method, method, X, lib, args)
            wall_time = time.perf_counter() - started
        logger.info(f"seed {seed}: {method} done in {wall_time:.2f}s")
        return _sweep_row(seed, method, fit, truth_A, lib.names, wall_time)

    tasks = []
    for seed in range(args.seed_start, args.seed_start + args.seeds):
        cfg = base.with_seed(seed)
        lib = gen_sources(cfg)
        X, truth = gen_mixtures(lib, cfg)
        tasks += [fit_one(seed, method, X, lib, truth.A) for method in args.methods]
    rows = await asyncio.gather(*tasks)
    return pd.DataFrame(rows)


def cmd_sweep(args) -> int:
    table = asyncio.run(run_sweep(args))
    out = args.out or os.path.join('data', f"sweep_{os.path.splitext(os.path.basename(args.config))[0]}")
    os.makedirs(out, exist_ok=True)
    write_table_csv(os.path.join(out, 'sweep.csv'), table)

    summary = table.groupby('method', sort=False).agg(
        mean_abs_error=('mean_abs_error', 'mean'),
        total_abs_error=('total_abs_error', 'mean'),
        converged=('converged', 'mean'),
        wall_time=('wall_time', 'sum'),
    )
    if 'ols' in args.methods:
        ols = table[table['method'] == 'ols'].set_index('seed')['mean_abs_error']
        summary['beats_ols'] = [
            int(np.sum(table[table['method'] == method].set_index('seed')['mean_abs_error'] < ols))
            for method in summary.index
        ]
    print(tabulate(summary, headers='keys', tablefmt='simple'))
    logger.info(f"Sweep over {args.seeds} seeds written to {os.path.join(out, 'sweep.csv')}")
    return EXIT_OK


def _add_estimator_flags(parser: argparse.ArgumentParser) -> None:
    defaults = EstimatorConfig()
    oracle_defaults = OracleConfig()
    parser.add_argument('--max-iter', type=int, default=defaults.max_iterations,
                        help='Iteration cap of the AgMLE loops')
    parser.add_argument('--tol', type=float, default=defaults.tol,
                        help='Relative change of A that ends the AgMLE loops')
    parser.add_argument('--taylor-order', type=int, choices=[1, 2], default=defaults.taylor_order,
                        help='Derivatives added to the AgLS basis')
    parser.add_argument('--trim', type=int, default=defaults.trim,
                        help='Grid points dropped at each end by derivative-based methods')
    parser.add_argument('--rho', type=float, nargs='+', help='Fixed AR(1) coefficients for agmle-ar1')
    parser.add_argument('--xi-max', type=float, default=oracle_defaults.xi_max, help='Oracle shift range')
    parser.add_argument('--xi-step', type=float, default=oracle_defaults.xi_step, help='Oracle shift step')
    parser.add_argument('--scale-grid', type=float, nargs=3, metavar=('LOW', 'HIGH', 'STEP'),
                        help='Oracle scale candidates')
    parser.add_argument('--shared-shift', action='store_true',
                        help='Oracle searches one shift tuple shared by all mixtures')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Estimate mixing weights of spectra with shifted or scaled sources')
    parser.add_argument('--verbose', action='store_true', help='Print debug logs to stdout')
    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='Generate synthetic sources and mixtures')
    simulate.add_argument('--config', required=True, help='Preset name or config file path')
    simulate.add_argument('--out', help='Output directory (default data/<config name>)')
    simulate.add_argument('--seed', type=int, help='Override the config seed')
    simulate.set_defaults(handler=cmd_simulate)

    fit = commands.add_parser('fit', help='Estimate mixing weights')
    fit.add_argument('method', nargs='?', choices=METHODS)
    fit.add_argument('--method', dest='method_flag', choices=METHODS)
    fit.add_argument('--data', default='data', help='Directory holding mixtures.csv and sources.csv')
    fit.add_argument('--out', help='Report directory (default <data>/fit_<method>)')
    fit.add_argument('--rows', type=parse_rows, help='Fit only rows START:STOP')
    fit.add_argument('--source', action='append', help='Per-source nu,value CSV (repeatable)')
    fit.add_argument('--noise-cov', help='p x p noise covariance CSV for gls')
    _add_estimator_flags(fit)
    fit.set_defaults(handler=cmd_fit)

    compare = commands.add_parser('compare', help='Compare saved reports on the same data')
    compare.add_argument('reports', nargs='+', help='Report directories')
    compare.add_argument('--out', default='comparison', help='Directory for the comparison tables')
    compare.set_defaults(handler=cmd_compare)

    report = commands.add_parser('report', help='Print a saved report')
    report.add_argument('directory')
    report.set_defaults(handler=cmd_report)

    sweep = commands.add_parser('sweep', help='Simulate several seeds and fit several methods on each')
    sweep.add_argument('--config', required=True, help='Preset name or config file path')
    sweep.add_argument('--seeds', type=int, default=10, help='Number of seeds')
    sweep.add_argument('--seed-start', type=int, default=0, help='First seed')
    sweep.add_argument('--methods', nargs='+', choices=METHODS, default=['ols', 'agls', 'agmle-hetero'])
    sweep.add_argument('--out', help='Output directory (default data/sweep_<config name>)')
    _add_estimator_flags(sweep)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # usage errors are validation errors; --help exits cleanly
        return EXIT_INVALID if e.code else EXIT_OK
    log_file = configure_logging(args.verbose)
    logger.debug(f"Logging to {log_file}")
    context = args.command if args.command != 'fit' else f"fit {args.method or args.method_flag}"
    try:
        return args.handler(args)
    except NumericalError as e:
        logger.error(f"{context}: numerical failure: {e}")
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        logger.error(f"{context}: {e}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
