"""Performance toolkit for the Homeplug/IEEE 1901 contention MAC.

Fixed-point analysis of throughput and service time (with dual-solution
extraction near the stability limit), a slot-synchronous simulator, and an
experiment harness around both.
"""

__version__ = "0.1.0"

from .domain import (ConfigError, Deferral, HOMEPLUG_1_0, INFINITE,
                     PhyTimings, SATURATED, Scenario, StageSchedule, Variant,
                     apply_variant, frame_durations, parse_variant,
                     preset_schedule)
from .kernel import (KernelTable, build_table, expected_slots_exact,
                     load_table, lookup, mc_oracle, p_defer_exact,
                     p_defer_exp_approx, save_table)
from .solver import (BranchOutcome, ConvergenceError, DivergenceError,
                     KernelMode, SolutionPoint, SolutionSet, SolverError,
                     SolverSettings, Stability, find_solutions, mu_sat,
                     parse_kernel_mode, solve_saturated, solve_unsaturated)
from .sim import (SimStats, SlotKind, SlotOutcome, classify_slot,
                  detect_transition, run_sim, run_transitory_probe,
                  stage_race)
from .config import Engine, ExperimentConfig, load_config, parse_engine
from .reports import ResultRow, emit_plot_data, read_results, write_results

__all__ = [name for name in dir() if not name.startswith("_")]
