"""Serialization tests: deterministic result files, round-trips, plot data."""

import math
import os

import pytest

from plcmac.domain import HOMEPLUG_1_0, SATURATED, ConfigError, Scenario, preset_schedule
from plcmac.reports import (
    INTERVAL_FIELDS,
    PLOT_KINDS,
    RESULT_FIELDS,
    ResultRow,
    emit_plot_data,
    read_intervals,
    read_results,
    write_comparison,
    write_intervals,
    write_results,
)
from plcmac.sim import run_sim


def row(**kw):
    base = dict(n=10, lam=4.0, category="CA3/2", variant="standard",
                engine="analysis", branch="analysis-I0", S=2.4, X=250000.0,
                p=0.9, rho=1.0, mu_sat=4.0, stability="unstable",
                converged=True, wall_time=0.01)
    base.update(kw)
    return ResultRow(**base)


SAMPLE = [
    row(n=50, branch="analysis-I1000", S=2.7),
    row(),
    row(lam=SATURATED, engine="analysis", branch="analysis-sat"),
    row(engine="sim", branch="sim-seed-1", p=math.nan, wall_time=1.5),
]


class TestResults:
    def test_round_trip(self, tmp_path):
        results_path, meta_path = write_results(SAMPLE, str(tmp_path))
        back = read_results(results_path)
        assert len(back) == len(SAMPLE)
        for orig, rt in zip(sorted(SAMPLE, key=ResultRow.sort_key), back):
            assert rt.n == orig.n
            assert rt.lam == orig.lam
            assert rt.category == orig.category
            assert rt.branch == orig.branch
            assert rt.S == orig.S        # repr round-trips floats exactly
            assert rt.X == orig.X
            assert rt.converged == orig.converged
            assert (math.isnan(rt.p) if math.isnan(orig.p)
                    else rt.p == orig.p)
            assert math.isnan(rt.wall_time)  # volatile, not in results.csv
        assert os.path.exists(meta_path)

    def test_rows_sorted_and_deterministic(self, tmp_path):
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        pa, _ = write_results(SAMPLE, str(a_dir))
        pb, _ = write_results(list(reversed(SAMPLE)), str(b_dir))
        assert open(pa).read() == open(pb).read()

    def test_config_echo_and_no_wall_time(self, tmp_path):
        pa, meta = write_results(SAMPLE, str(tmp_path),
                                 config_lines=("n = 10", "engine = both"))
        text = open(pa).read()
        assert text.startswith("# n = 10\n# engine = both\n")
        assert "wall_time" not in text
        meta_text = open(meta).read()
        assert meta_text.startswith("# created ")
        assert "wall_time_s" in meta_text
        assert "1.5" in meta_text

    def test_saturated_lambda_spelled_out(self, tmp_path):
        pa, _ = write_results(SAMPLE, str(tmp_path))
        assert "saturated" in open(pa).read()

    def test_read_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ConfigError, match="not a results file"):
            read_results(str(path))


class TestComparison:
    def test_rel_err_column(self, tmp_path):
        path = write_comparison(
            [(10, 4.0, "CA3/2", "standard", 2.0, 2.1),
             (5, SATURATED, "CA3/2", "standard", 1.0, 0.95)],
            str(tmp_path))
        lines = open(path).read().splitlines()
        assert lines[0] == "n,lambda,category,variant,S_analysis_I0,S_sim_mean,rel_err"
        assert lines[1].startswith("5,saturated,")
        assert lines[1].endswith(repr(abs(0.95 - 1.0) / 1.0))
        assert lines[2].endswith(repr(abs(2.1 - 2.0) / 2.0))


class TestIntervals:
    def test_round_trip(self, tmp_path):
        sc = Scenario(n=2, schedule=preset_schedule("CA3/2"),
                      timings=HOMEPLUG_1_0, lam=5.0)
        st = run_sim(sc, duration=5.0, warmup=0.0, seed=1)
        path = write_intervals(st, str(tmp_path / "iv.csv"),
                               header_lines=("seed = 1",))
        back = read_intervals(path)
        assert len(back) == st.interval_start_s.size
        assert back[0]["time_s"] == st.interval_start_s[0]
        assert back[-1]["throughput_mbps"] == pytest.approx(
            st.interval_throughput[-1])
        assert open(path).read().startswith("# seed = 1\n")

    def test_read_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text("x,y\n1,2\n")
        with pytest.raises(ConfigError, match="not an interval dump"):
            read_intervals(str(path))


class TestPlotData:
    def test_s_vs_lambda_series(self, tmp_path):
        rows = [row(lam=4.0, S=2.4), row(lam=2.0, S=1.2),
                row(lam=3.0, S=1.8, n=5)]
        paths = emit_plot_data(rows, "S_vs_lambda", str(tmp_path))
        assert len(paths) == 2  # one series per n
        names = sorted(os.path.basename(p) for p in paths)
        assert names[0].startswith("S_vs_lambda__n10")
        body = open(sorted(paths)[0]).read().splitlines()
        assert body[0] == "# lambda_pps S_mbps"
        xs = [float(line.split()[0]) for line in body[1:]]
        assert xs == sorted(xs)

    def test_saturated_points_skipped(self, tmp_path):
        rows = [row(lam=SATURATED)]
        with pytest.raises(ConfigError, match="available axes"):
            emit_plot_data(rows, "S_vs_lambda", str(tmp_path))

    def test_mu_sat_vs_n_groups_by_schedule(self, tmp_path):
        rows = [row(n=5, mu_sat=6.0), row(n=10, mu_sat=5.0),
                row(n=5, mu_sat=7.0, category="CA1/0")]
        paths = emit_plot_data(rows, "mu_sat_vs_n", str(tmp_path))
        names = sorted(os.path.basename(p) for p in paths)
        assert names == ["mu_sat_vs_n__ca10_standard.dat",
                         "mu_sat_vs_n__ca32_standard.dat"]

    def test_fractional_rate_slug(self, tmp_path):
        rows = [row(lam=2.5, n=5), row(lam=2.5, n=10)]
        paths = emit_plot_data(rows, "S_vs_n", str(tmp_path))
        assert len(paths) == 1
        assert "lam2p5" in os.path.basename(paths[0])

    def test_timeseries_from_interval_dump(self, tmp_path):
        rows = [dict(time_s=0.0, throughput_mbps=2.0, qmin=0, qavg=1.0,
                     qmax=3),
                dict(time_s=1.0, throughput_mbps=2.1, qmin=0, qavg=1.5,
                     qmax=4)]
        (path,) = emit_plot_data(rows, "timeseries", str(tmp_path))
        body = open(path).read().splitlines()
        assert body[0] == "# " + " ".join(INTERVAL_FIELDS)
        assert len(body) == 3

    def test_timeseries_needs_interval_rows(self, tmp_path):
        with pytest.raises(ConfigError, match="interval dump"):
            emit_plot_data([{"bogus": 1}], "timeseries", str(tmp_path))

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown plot kind"):
            emit_plot_data([row()], "S_vs_time", str(tmp_path))

    def test_kind_list_is_public(self):
        assert "S_vs_lambda" in PLOT_KINDS
        assert "timeseries" in PLOT_KINDS
        assert "lambda" in RESULT_FIELDS
