"""Command-line front end: solve, simulate, sweep, probe, bench, plot-data."""

import argparse
import math
import os
import sys
import time
from dataclasses import replace
from statistics import fmean

from .config import (Engine, ExperimentConfig, default_out_dir, load_config,
                     parse_engine)
from .domain import ConfigError, SATURATED, parse_variant
from .reports import (ResultRow, emit_plot_data, read_intervals,
                      read_results, write_comparison, write_intervals,
                      write_results, PLOT_KINDS)
from .sim import run_sim, run_transitory_probe
from .solver import (KernelMode, SolverError, SolverSettings, find_solutions,
                     mu_sat, parse_kernel_mode, shared_table, solve_saturated)


def _parse_rate(text):
    if text.strip().lower() == "saturated":
        return SATURATED
    try:
        rate = float(text)
    except ValueError:
        raise ConfigError(f"bad arrival rate '{text}' "
                          f"(number or 'saturated')") from None
    if rate < 0 or not math.isfinite(rate):
        raise ConfigError(f"bad arrival rate '{text}'")
    return rate


def _parse_float_list(text, what):
    try:
        values = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"bad {what} list '{text}'") from None
    if not values:
        raise ConfigError(f"empty {what} list")
    return values


def _lam_text(lam):
    return "saturated" if lam is SATURATED else f"{lam:g}"


def _settings(cfg, kernel_mode=None):
    mode = kernel_mode if kernel_mode is not None else cfg.kernel_mode
    table = None
    if mode is KernelMode.TABLE:
        table = shared_table(cfg.schedule, cfg.table_step)
    return SolverSettings(tolerance=cfg.tolerance, kernel_mode=mode,
                          table_step=cfg.table_step, table=table)


def _nan_row(cfg, n, lam, engine, branch, mu, stability, wall):
    return ResultRow(n=n, lam=lam, category=cfg.category,
                     variant=cfg.variant.value, engine=engine, branch=branch,
                     S=math.nan, X=math.nan, p=math.nan, rho=math.nan,
                     mu_sat=mu, stability=stability, converged=False,
                     wall_time=wall)


def analysis_rows(cfg, n, lam, mu):
    """Analytic rows for one sweep point; divergence becomes a row."""
    sc = cfg.scenario(n, lam)
    settings = _settings(cfg)
    rows = []
    if lam is SATURATED:
        t0 = time.perf_counter()
        try:
            sol = solve_saturated(sc, settings)
            wall = time.perf_counter() - t0
            rows.append(ResultRow(
                n=n, lam=lam, category=cfg.category,
                variant=cfg.variant.value, engine="analysis",
                branch="analysis-sat", S=n * sol.S, X=sol.X, p=sol.p,
                rho=sol.rho, mu_sat=mu, stability="unstable",
                converged=sol.converged, wall_time=wall))
        except SolverError:
            rows.append(_nan_row(cfg, n, lam, "analysis", "analysis-sat",
                                 mu, "unstable", time.perf_counter() - t0))
        return rows

    stability = "stable" if lam < mu else "unstable"
    t0 = time.perf_counter()
    try:
        result = find_solutions(sc, settings, inits=cfg.init_I)
    except SolverError:
        wall = (time.perf_counter() - t0) / max(len(cfg.init_I), 1)
        for init in cfg.init_I:
            rows.append(_nan_row(cfg, n, lam, "analysis",
                                 f"analysis-I{init:g}", mu, stability, wall))
        return rows
    wall = (time.perf_counter() - t0) / max(len(result.branches), 1)
    for b in result.branches:
        branch = f"analysis-I{b.init_I:g}"
        if b.solution is None:
            rows.append(_nan_row(cfg, n, lam, "analysis", branch, mu,
                                 result.stability.value, wall))
        else:
            s = b.solution
            rows.append(ResultRow(
                n=n, lam=lam, category=cfg.category,
                variant=cfg.variant.value, engine="analysis", branch=branch,
                S=n * s.S, X=s.X, p=s.p, rho=s.rho, mu_sat=mu,
                stability=result.stability.value, converged=s.converged,
                wall_time=wall))
    return rows


def sim_rows(cfg, n, lam, mu):
    """One simulation row per seed for one sweep point."""
    sc = cfg.scenario(n, lam)
    stability = "unstable" if lam is SATURATED or lam >= mu else "stable"
    rows = []
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        stats = run_sim(sc, cfg.duration_s, cfg.warmup_s, seed)
        wall = time.perf_counter() - t0
        X = stats.mean_service_time
        if lam is SATURATED:
            rho = 1.0
        else:
            rho = min(lam * X / 1e6, 1.0) if math.isfinite(X) else math.nan
        rows.append(ResultRow(
            n=n, lam=lam, category=cfg.category, variant=cfg.variant.value,
            engine="sim", branch=f"sim-seed-{seed}",
            S=stats.long_run_throughput, X=X, p=math.nan, rho=rho,
            mu_sat=mu, stability=stability, converged=True, wall_time=wall))
    return rows


def _config_lines(cfg):
    return (
        "plcmac result set",
        f"scenario: n={','.join(str(v) for v in cfg.n_values)}"
        f" lambda={','.join(_lam_text(v) for v in cfg.lam_values)}"
        f" category={cfg.category} variant={cfg.variant.value}"
        f" queue_cap={cfg.queue_cap} preload={cfg.preload}",
        f"engine: {cfg.engine.value}",
        f"solver: init_I={','.join(f'{v:g}' for v in cfg.init_I)}"
        f" kernel={cfg.kernel_mode.value} tolerance={cfg.tolerance:g}",
        f"sim: duration_s={cfg.duration_s:g} warmup_s={cfg.warmup_s:g}"
        f" seeds={','.join(str(s) for s in cfg.seeds)}",
    )


def run_experiment(cfg):
    """Execute a config: analysis and/or simulation over the sweep grid.

    Returns (rows, written paths). Solver failures are recorded as rows
    with converged=false; they do not abort the sweep.
    """
    mu_cache = {}
    settings = _settings(cfg)

    def mu_for(n):
        if n not in mu_cache:
            mu_cache[n] = mu_sat(cfg.scenario(n, SATURATED), settings)
        return mu_cache[n]

    rows = []
    comparisons = []
    for n, lam in cfg.points():
        mu = mu_for(n)
        a_rows = s_rows = ()
        if cfg.engine in (Engine.ANALYSIS, Engine.BOTH):
            a_rows = analysis_rows(cfg, n, lam, mu)
            rows.extend(a_rows)
        if cfg.engine in (Engine.SIM, Engine.BOTH):
            s_rows = sim_rows(cfg, n, lam, mu)
            rows.extend(s_rows)
        if cfg.engine is Engine.BOTH:
            anchor = [r for r in a_rows
                      if r.branch in ("analysis-I0", "analysis-sat")
                      and math.isfinite(r.S)]
            if anchor and s_rows:
                s_sim = fmean(r.S for r in s_rows)
                comparisons.append((n, lam, cfg.category,
                                    cfg.variant.value, anchor[0].S, s_sim))

    paths = {}
    results_path, meta_path = write_results(rows, cfg.out_dir,
                                            _config_lines(cfg))
    paths["results"] = results_path
    paths["run_meta"] = meta_path
    if cfg.engine is Engine.BOTH:
        paths["comparison"] = write_comparison(comparisons, cfg.out_dir)
    return rows, paths


def benchmark_runtimes(cfg, repeats=5, batch=3):
    """Wall-clock comparison of the engines over the config's points.

    Analysis timings are min-of-repeats over a small batch of solves with
    the jit caches warmed first, so they measure steady-state cost rather
    than compilation.
    """

    def solve_point(n, lam, mode):
        settings = _settings(cfg, kernel_mode=mode)
        sc = cfg.scenario(n, lam)
        if lam is SATURATED:
            solve_saturated(sc, settings)
        else:
            find_solutions(sc, settings, inits=cfg.init_I)

    def time_analysis(n, lam, mode):
        solve_point(n, lam, mode)  # warm jit and table caches
        best = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            for _ in range(batch):
                solve_point(n, lam, mode)
            best = min(best, (time.perf_counter() - t0) / batch)
        return best

    report = []
    for n, lam in cfg.points():
        if cfg.engine in (Engine.ANALYSIS, Engine.BOTH):
            modes = [cfg.kernel_mode]
            if cfg.engine is Engine.BOTH:
                modes = [KernelMode.EXACT, KernelMode.EXP_APPROX]
            for mode in modes:
                report.append((n, lam, f"analysis-{mode.value}",
                               time_analysis(n, lam, mode)))
        if cfg.engine in (Engine.SIM, Engine.BOTH):
            sc = cfg.scenario(n, lam)
            run_sim(sc, 1.0, 0.0, cfg.seeds[0])  # warm jit
            t0 = time.perf_counter()
            run_sim(sc, cfg.duration_s, cfg.warmup_s, cfg.seeds[0])
            report.append((n, lam, f"sim-{cfg.duration_s:g}s",
                           time.perf_counter() - t0))
    return report


def _point_config(args, engine=Engine.ANALYSIS, seeds=None):
    return ExperimentConfig(
        n_values=(args.n,),
        category=args.category,
        variant=parse_variant(args.variant),
        lam_values=(_parse_rate(args.lam),),
        queue_cap=getattr(args, "queue_cap", 1000),
        preload=getattr(args, "preload", 0),
        engine=engine,
        init_I=_parse_float_list(getattr(args, "init_I", "0,1000"), "init_I"),
        kernel_mode=parse_kernel_mode(getattr(args, "kernel", "exact")),
        tolerance=getattr(args, "tolerance", 1e-9),
        table_step=getattr(args, "table_step", 1e-4),
        duration_s=getattr(args, "duration_s", 2000.0),
        warmup_s=getattr(args, "warmup_s", 0.0),
        seeds=seeds if seeds is not None else (getattr(args, "seed", 1),),
        out_dir=args.out or default_out_dir(),
    )


def cmd_solve(args):
    cfg = _point_config(args)
    n, lam = cfg.points()[0]
    mu = mu_sat(cfg.scenario(n, SATURATED), _settings(cfg))
    rows = analysis_rows(cfg, n, lam, mu)
    print(f"n={n} lambda={_lam_text(lam)} category={cfg.category} "
          f"variant={cfg.variant.value} kernel={cfg.kernel_mode.value}")
    print(f"mu_sat = {mu:.6f} packets/s")
    for r in rows:
        if not math.isfinite(r.S):
            print(f"{r.branch}: did not converge")
            continue
        print(f"{r.branch}: S_total = {r.S:.6f} Mbps  X = {r.X:.2f} us  "
              f"p = {r.p:.4f}  rho = {r.rho:.4f}  [{r.stability}]")
    finite = {round(r.S, 9) for r in rows if math.isfinite(r.S)}
    if len(finite) > 1:
        print("dual solutions: the lowest-throughput branch is the "
              "long-term prediction")
    if args.out:
        _, paths = write_results(rows, args.out, _config_lines(cfg))
        print(f"wrote {paths}")
    return 0 if finite else 1


def cmd_simulate(args):
    cfg = _point_config(args, engine=Engine.SIM)
    n, lam = cfg.points()[0]
    sc = cfg.scenario(n, lam)
    stats = run_sim(sc, cfg.duration_s, cfg.warmup_s, args.seed)
    print(f"simulated {stats.sim_duration:.1f} s "
          f"(warmup {cfg.warmup_s:g} s) n={n} lambda={_lam_text(lam)} "
          f"seed={args.seed}")
    print(f"long-run throughput = {stats.long_run_throughput:.4f} Mbps")
    print(f"mean service time   = {stats.mean_service_time:.1f} us")
    print(f"packets: arrived={int(stats.arrived.sum())} "
          f"delivered={int(stats.delivered.sum())} "
          f"dropped={int(stats.dropped.sum())} "
          f"queued={int(stats.final_queue.sum())}")
    print(f"slots: success={stats.success_slots} "
          f"collision={stats.collision_slots} idle={stats.idle_slots} "
          f"defer events={stats.defer_events}")
    if args.out:
        name = (f"intervals_n{n}_lam{_lam_text(lam).replace('.', 'p')}"
                f"_seed{args.seed}.csv")
        path = write_intervals(stats, os.path.join(args.out, name),
                               _config_lines(cfg))
        print(f"wrote {path}")
    return 0


def cmd_sweep(args):
    cfg = load_config(args.config)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    rows, paths = run_experiment(cfg)
    bad = sum(1 for r in rows if not r.converged)
    print(f"{len(rows)} rows over {len(cfg.points())} points "
          f"({bad} non-converged)")
    for label, path in sorted(paths.items()):
        print(f"wrote {path}")
    return 0


def cmd_probe(args):
    cfg = _point_config(args, engine=Engine.SIM)
    n, lam = cfg.points()[0]
    if lam is SATURATED:
        raise ConfigError("probe-transitory needs a finite lambda")
    sc = cfg.scenario(n, lam)
    if sc.preload:
        raise ConfigError("probe-transitory is an empty-start experiment "
                          "(preload must be 0)")
    stats, transition = run_transitory_probe(sc, cfg.duration_s, args.seed,
                                             threshold=args.threshold)
    mu = mu_sat(cfg.scenario(n, SATURATED), _settings(cfg))
    print(f"n={n} lambda={lam:g} (mu_sat {mu:.4f}) duration={cfg.duration_s:g} s "
          f"seed={args.seed} threshold={args.threshold:g}")
    if transition is None:
        print("no transition detected")
    else:
        idx = int(transition - stats.interval_start_s[0])
        thr = stats.interval_throughput
        print(f"transition detected at t = {transition:g} s")
        print(f"mean throughput before = {fmean(thr[:idx]):.4f} Mbps, "
              f"after = {fmean(thr[idx:]):.4f} Mbps")
        capped = [t for t, q in zip(stats.interval_start_s,
                                    stats.interval_qmax)
                  if q >= sc.queue_cap]
        if capped:
            print(f"queue max first at cap at t = {capped[0]:g} s")
    if args.out:
        name = (f"probe_n{n}_lam{_lam_text(lam).replace('.', 'p')}"
                f"_seed{args.seed}.csv")
        lines = _config_lines(cfg) + (
            f"transition: {'none' if transition is None else f'{transition:g}'}",)
        path = write_intervals(stats, os.path.join(args.out, name), lines)
        print(f"wrote {path}")
    return 0


def cmd_bench(args):
    if args.config:
        cfg = load_config(args.config)
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
    else:
        cfg = _point_config(args, engine=parse_engine(args.engine))
    report = benchmark_runtimes(cfg)
    print(f"{'n':>4} {'lambda':>10} {'engine':<18} {'wall_s':>12}")
    for n, lam, engine, wall in report:
        print(f"{n:>4} {_lam_text(lam):>10} {engine:<18} {wall:>12.6f}")
    return 0


def cmd_plot_data(args):
    out = args.out or default_out_dir()
    if args.kind == "timeseries":
        rows = read_intervals(args.results)
    else:
        rows = read_results(args.results)
    for path in emit_plot_data(rows, args.kind, out):
        print(f"wrote {path}")
    return 0


def _add_scenario_flags(p, lam_required=False):
    p.add_argument("--n", type=int, required=True,
                   help="number of contending nodes")
    p.add_argument("--lambda", dest="lam", default="saturated",
                   required=lam_required,
                   help="arrival rate in packets/s, or 'saturated'")
    p.add_argument("--category", default="ca32",
                   help="access category preset: ca32 or ca10")
    p.add_argument("--variant", default="standard",
                   help="standard, no-defer or always-defer")


def build_parser():
    top = argparse.ArgumentParser(
        prog="plcmac",
        description="Performance toolkit for the Homeplug/IEEE 1901 "
                    "contention MAC: fixed-point analysis and slot-level "
                    "simulation.")
    sub = top.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("solve", help="analytic fixed point for one point")
    _add_scenario_flags(p)
    p.add_argument("--kernel", default="exact",
                   help="exact, table or exp")
    p.add_argument("--init-I", dest="init_I", default="0,1000",
                   help="comma list of idle-slot initializations")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--table-step", dest="table_step", type=float,
                   default=1e-4)
    p.add_argument("--out", default=None, help="write results CSV here")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("simulate", help="slot-level simulation of one point")
    _add_scenario_flags(p)
    p.add_argument("--duration-s", dest="duration_s", type=float,
                   default=2000.0)
    p.add_argument("--warmup-s", dest="warmup_s", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--preload", type=int, default=0,
                   help="packets preloaded per queue at t=0")
    p.add_argument("--queue-cap", dest="queue_cap", type=int, default=1000)
    p.add_argument("--out", default=None,
                   help="write the per-second interval dump here")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override [output] dir")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("probe-transitory",
                       help="empty-start run with change-point detection")
    _add_scenario_flags(p, lam_required=True)
    p.add_argument("--duration-s", dest="duration_s", type=float,
                   default=20000.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--queue-cap", dest="queue_cap", type=int, default=1000)
    p.add_argument("--threshold", type=float, default=3.0,
                   help="pooled-sigma threshold for the change point")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_probe, preload=0)

    p = sub.add_parser("bench", help="wall-clock comparison of the engines")
    p.add_argument("--config", default=None)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--lambda", dest="lam", default="saturated")
    p.add_argument("--category", default="ca32")
    p.add_argument("--variant", default="standard")
    p.add_argument("--engine", default="both",
                   help="analysis, sim or both")
    p.add_argument("--kernel", default="exact")
    p.add_argument("--init-I", dest="init_I", default="0,1000")
    p.add_argument("--duration-s", dest="duration_s", type=float,
                   default=10000.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("plot-data",
                       help="project a result set to plot-ready columns")
    p.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p.add_argument("--results", required=True,
                   help="results.csv, or an interval dump for timeseries")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_plot_data)
    return top


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
