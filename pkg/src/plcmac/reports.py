"""Result serialization: CSV result sets, comparison files, plot data.

Data files are deterministic for a given config and seeds, so re-runs are
byte-identical and diff cleanly. Everything volatile (wall-clock timings,
the run timestamp) goes to a separate run-metadata file instead.
"""

import csv
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone

from .domain import ConfigError, SATURATED

RESULT_FIELDS = ("n", "lambda", "category", "variant", "engine", "branch",
                 "S_mbps", "X_us", "p", "rho", "mu_sat_pps", "stability",
                 "converged")
INTERVAL_FIELDS = ("time_s", "throughput_mbps", "qmin", "qavg", "qmax")


@dataclass(frozen=True)
class ResultRow:
    """One (coordinate, engine, branch) outcome.

    S is aggregate network throughput in Mbps; X is the mean service time
    in microseconds. Analysis rows carry the model's p and rho; simulation
    rows leave p as nan (the simulator does not observe the conditional
    collision probability directly).
    """

    n: int
    lam: float
    category: str
    variant: str
    engine: str
    branch: str
    S: float
    X: float
    p: float
    rho: float
    mu_sat: float
    stability: str
    converged: bool
    wall_time: float

    def sort_key(self):
        return (self.n, self.lam, self.category, self.variant, self.engine,
                self.branch)


def _fmt_lam(lam):
    return "saturated" if lam is SATURATED or lam == math.inf else repr(float(lam))


def _parse_lam(text):
    return SATURATED if text == "saturated" else float(text)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _iso_now():
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_results(rows, out_dir, config_lines=()):
    """Write results.csv (deterministic) and run_meta.csv (timestamped).

    Returns (results_path, meta_path). Rows are sorted by coordinates so
    aggregation order never shows in the output.
    """
    rows = sorted(rows, key=ResultRow.sort_key)
    os.makedirs(out_dir, exist_ok=True)
    results_path = os.path.join(out_dir, "results.csv")
    meta_path = os.path.join(out_dir, "run_meta.csv")

    with open(results_path, "w", newline="") as fh:
        for line in config_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(RESULT_FIELDS)
        for r in rows:
            w.writerow([r.n, _fmt_lam(r.lam), r.category, r.variant,
                        r.engine, r.branch, _fmt(r.S), _fmt(r.X), _fmt(r.p),
                        _fmt(r.rho), _fmt(r.mu_sat), r.stability,
                        _fmt(r.converged)])

    with open(meta_path, "w", newline="") as fh:
        fh.write(f"# created {_iso_now()}\n")
        w = csv.writer(fh)
        w.writerow(("n", "lambda", "category", "variant", "engine", "branch",
                    "wall_time_s"))
        for r in rows:
            w.writerow([r.n, _fmt_lam(r.lam), r.category, r.variant,
                        r.engine, r.branch, _fmt(r.wall_time)])
    return results_path, meta_path


def read_results(path):
    """Read a results.csv back into a list of ResultRow."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or tuple(header) != RESULT_FIELDS:
            raise ConfigError(f"{path}: not a results file "
                              f"(header {header!r})")
        for rec in reader:
            d = dict(zip(RESULT_FIELDS, rec))
            rows.append(ResultRow(
                n=int(d["n"]), lam=_parse_lam(d["lambda"]),
                category=d["category"], variant=d["variant"],
                engine=d["engine"], branch=d["branch"],
                S=float(d["S_mbps"]), X=float(d["X_us"]), p=float(d["p"]),
                rho=float(d["rho"]), mu_sat=float(d["mu_sat_pps"]),
                stability=d["stability"],
                converged=d["converged"] == "true", wall_time=math.nan))
    return rows


def write_comparison(entries, out_dir):
    """Comparison file: |S_sim - S_analysis_I0| / S_analysis_I0 per point.

    entries: iterable of (n, lam, category, variant, s_analysis, s_sim).
    """
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "comparison.csv")
    entries = sorted(entries, key=lambda e: (e[0], e[1], e[2], e[3]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("n", "lambda", "category", "variant", "S_analysis_I0",
                    "S_sim_mean", "rel_err"))
        for n, lam, cat, var, s_an, s_sim in entries:
            rel = abs(s_sim - s_an) / s_an if s_an else math.nan
            w.writerow([n, _fmt_lam(lam), cat, var, _fmt(s_an), _fmt(s_sim),
                        _fmt(rel)])
    return path


def write_intervals(stats, path, header_lines=()):
    """Dump per-second interval statistics: one row per simulated second."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(INTERVAL_FIELDS)
        for i in range(len(stats.interval_start_s)):
            w.writerow([_fmt(float(stats.interval_start_s[i])),
                        _fmt(float(stats.interval_throughput[i])),
                        int(stats.interval_qmin[i]),
                        _fmt(float(stats.interval_qavg[i])),
                        int(stats.interval_qmax[i])])
    return path


def read_intervals(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or tuple(header) != INTERVAL_FIELDS:
            raise ConfigError(f"{path}: not an interval dump "
                              f"(header {header!r})")
        for rec in reader:
            rows.append({k: float(v) for k, v in zip(INTERVAL_FIELDS, rec)})
    return rows


def _slug(value):
    text = str(value)
    for a, b in (("CA3/2", "ca32"), ("CA1/0", "ca10"), ("/", ""),
                 (" ", ""), (".", "p")):
        text = text.replace(a, b)
    return text


def _series_name(kind, key):
    parts = "_".join(_slug(v) for v in key if v != "")
    return f"{kind}__{parts}.dat" if parts else f"{kind}.dat"


PLOT_KINDS = ("S_vs_lambda", "X_vs_lambda", "S_vs_n", "X_vs_p",
              "mu_sat_vs_n", "timeseries")

# kind -> (x attr, y attr, series-key builder); x and y must be finite
_ROW_KINDS = {
    "S_vs_lambda": ("lam", "S",
                    lambda r: (f"n{r.n}", r.category, r.variant, r.branch)),
    "X_vs_lambda": ("lam", "X",
                    lambda r: (f"n{r.n}", r.category, r.variant, r.branch)),
    "S_vs_n": ("n", "S",
               lambda r: (f"lam{_fmt_lam(r.lam)}", r.category, r.variant,
                          r.branch)),
    "X_vs_p": ("p", "X",
               lambda r: (f"n{r.n}", r.category, r.variant, r.branch)),
    "mu_sat_vs_n": ("n", "mu_sat", lambda r: (r.category, r.variant)),
}


def _available_axes(rows):
    axes = {"n"}
    if any(r.lam is not SATURATED and math.isfinite(r.lam) for r in rows):
        axes.add("lambda")
    for attr, name in (("S", "S"), ("X", "X"), ("p", "p"),
                       ("mu_sat", "mu_sat")):
        if any(math.isfinite(getattr(r, attr)) for r in rows):
            axes.add(name)
    return sorted(axes)


def emit_plot_data(rows, kind, out_dir):
    """Project a result set to whitespace-delimited series files.

    `rows` is a list of ResultRow, or of interval dicts for `timeseries`.
    Returns the written paths. Raises ConfigError if the requested axes
    are absent, listing what is available.
    """
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind '{kind}' "
                          f"(expected one of {', '.join(PLOT_KINDS)})")
    os.makedirs(out_dir, exist_ok=True)

    if kind == "timeseries":
        if not rows or "time_s" not in rows[0]:
            raise ConfigError("timeseries needs an interval dump "
                              "(columns time_s, throughput_mbps, qmin, "
                              "qavg, qmax)")
        path = os.path.join(out_dir, "timeseries.dat")
        with open(path, "w") as fh:
            fh.write("# " + " ".join(INTERVAL_FIELDS) + "\n")
            for row in rows:
                fh.write(" ".join(_fmt(row[k]) for k in INTERVAL_FIELDS)
                         + "\n")
        return [path]

    x_attr, y_attr, series_key = _ROW_KINDS[kind]
    groups = {}
    for r in rows:
        x = getattr(r, x_attr)
        y = getattr(r, y_attr)
        if x is SATURATED or not math.isfinite(float(x)):
            continue
        if not math.isfinite(float(y)):
            continue
        groups.setdefault(series_key(r), []).append((float(x), float(y)))

    if not groups:
        raise ConfigError(
            f"no data for plot kind '{kind}' (needs {x_attr} and {y_attr}); "
            f"available axes: {', '.join(_available_axes(list(rows)))}")

    x_name = "lambda_pps" if x_attr == "lam" else x_attr
    y_name = {"S": "S_mbps", "X": "X_us", "mu_sat": "mu_sat_pps",
              "p": "p"}.get(y_attr, y_attr)
    paths = []
    for key in sorted(groups):
        pts = sorted(set(groups[key]))
        path = os.path.join(out_dir, _series_name(kind, key))
        with open(path, "w") as fh:
            fh.write(f"# {x_name} {y_name}\n")
            for x, y in pts:
                fh.write(f"{_fmt(x)} {_fmt(y)}\n")
        paths.append(path)
    return paths
