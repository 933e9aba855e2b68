"""Fixed-point solver tests: closed-form anchors, branch behaviour near the
stability limit, kernel-mode consistency and error paths."""

import math

import pytest

from plcmac.domain import (
    HOMEPLUG_1_0,
    INFINITE,
    SATURATED,
    ConfigError,
    Scenario,
    StageSchedule,
    Variant,
    apply_variant,
    frame_durations,
    preset_schedule,
)
from plcmac.solver import (
    ConvergenceError,
    DivergenceError,
    KernelMode,
    SolverError,
    SolverSettings,
    Stability,
    collision_prob,
    find_solutions,
    kernel_fn_for,
    mean_backoff_slots,
    mu_sat,
    parse_kernel_mode,
    slot_probabilities,
    solve_saturated,
    solve_unsaturated,
)

T = HOMEPLUG_1_0
T_S = frame_durations(T)[0]
CA32 = preset_schedule("CA3/2")
CA10 = preset_schedule("CA1/0")

# Saturated service rate for 50 CA3/2 nodes, frozen from a build whose
# long-run predictions were cross-checked against the event simulator
# (agreement within 0.1%). Guards against silent pipeline regressions.
MU_SAT_50 = 3.9953518061222866


def scenario(n, lam, schedule=CA32):
    return Scenario(n=n, schedule=schedule, timings=T, lam=lam)


class TestClosedForms:
    def test_single_node_saturated(self):
        # No contention: p = 0, only stage 1 is visited, every generic slot
        # is idle, so X = (W1/2) sigma + T_s exactly.
        sol = solve_saturated(scenario(1, SATURATED))
        assert sol.converged
        assert sol.p == 0.0
        assert sol.rho == 1.0
        assert sol.n_t == pytest.approx(1.0, abs=1e-12)
        assert sol.Ew == pytest.approx(3.5, abs=1e-12)
        assert sol.alpha == pytest.approx(T.sigma, abs=1e-12)
        assert sol.X == pytest.approx(3.5 * T.sigma + T_S, abs=1e-9)
        assert sol.S == pytest.approx(T.payload_bits / sol.X, rel=1e-12)

    def test_zero_arrival_rate_is_idle(self):
        sol = solve_unsaturated(scenario(10, 0.0))
        assert sol.S == 0.0
        assert sol.rho == 0.0
        assert math.isinf(sol.I)
        assert sol.X == pytest.approx(3.5 * T.sigma + T_S, abs=1e-9)

    def test_zero_rate_idle_with_deferral_disabled(self):
        sched = apply_variant(CA32, Variant.NO_DEFERRAL)
        sol = solve_unsaturated(scenario(10, 0.0, sched))
        # INFINITE deferral counter: the stage-1 mean is (W+1)/2, not W/2.
        assert sol.Ew == pytest.approx(4.0, abs=1e-12)
        assert sol.X == pytest.approx(4.0 * T.sigma + T_S, abs=1e-9)

    def test_stable_point_carries_offered_load(self):
        lam = 2.0
        sol = solve_unsaturated(scenario(50, lam))
        assert sol.rho < 1.0
        # Below the stability limit the queue drains: per-node throughput
        # equals the offered load lam * L.
        assert sol.S == pytest.approx(lam * T.payload_bits / 1e6, rel=1e-9)


class TestSaturated:
    def test_mu_sat_definition(self):
        sc = scenario(50, SATURATED)
        sol = solve_saturated(sc)
        assert mu_sat(sc) == pytest.approx(1e6 / sol.X, rel=1e-12)

    def test_mu_sat_regression(self):
        assert mu_sat(scenario(50, SATURATED)) == pytest.approx(
            MU_SAT_50, rel=1e-9)

    def test_more_nodes_less_per_node_service_rate(self):
        rates = [mu_sat(scenario(n, SATURATED)) for n in (2, 5, 10, 20, 50)]
        assert all(a > b for a, b in zip(rates, rates[1:]))

    def test_wider_windows_relieve_contention(self):
        # CA1/0 backs off over larger windows, so each attempt is cheaper
        # in collisions and the saturated point carries more per node.
        n = 30
        assert mu_sat(scenario(n, SATURATED, CA10)) > mu_sat(
            scenario(n, SATURATED, CA32))

    def test_variant_ordering_at_high_contention(self):
        n = 50
        rates = {}
        for variant in Variant:
            sched = apply_variant(CA32, variant)
            rates[variant] = mu_sat(scenario(n, SATURATED, sched))
        assert rates[Variant.NO_DEFERRAL] < rates[Variant.STANDARD]
        assert rates[Variant.STANDARD] < rates[Variant.ALWAYS_DEFER]

    def test_converged_metadata(self):
        sol = solve_saturated(scenario(20, SATURATED))
        assert sol.converged
        assert sol.iterations >= 1
        assert sol.residual <= 1e-9

    def test_large_population_pulls_back_into_domain(self):
        # The fresh stage-1 starting guess overshoots the map's domain for
        # large n (p is then essentially 1); the solver must pull back and
        # still land on the congested fixed point.
        sol = solve_saturated(scenario(300, SATURATED))
        assert sol.converged
        assert 0.0 < sol.p < 1.0
        assert mu_sat(scenario(300, SATURATED)) < mu_sat(
            scenario(50, SATURATED))


class TestBranches:
    def test_dual_solutions_near_limit(self):
        mu = mu_sat(scenario(50, SATURATED))
        res = find_solutions(scenario(50, mu + 0.5))
        assert res.dual
        assert len(res.branches) == 2
        assert [b.init_I for b in res.branches] == [0.0, 1000.0]
        assert all(b.solution is not None for b in res.branches)
        s_low, s_high = sorted(s.S for s in res.solutions)
        assert s_high > s_low
        assert res.stability is Stability.UNSTABLE
        assert res.long_term.S == pytest.approx(s_low, rel=1e-12)
        assert res.mu_sat_value == pytest.approx(mu, rel=1e-12)

    def test_branch_roles_near_limit(self):
        # The congested branch is queue-limited (rho pinned at 1); the
        # transitory branch still drains and carries the offered load.
        mu = mu_sat(scenario(50, SATURATED))
        lam = mu + 0.5
        res = find_solutions(scenario(50, lam))
        low, high = sorted(res.solutions, key=lambda s: s.S)
        assert low.rho == pytest.approx(1.0, abs=1e-12)
        assert low.S == pytest.approx(T.payload_bits / low.X, rel=1e-9)
        assert high.rho < 1.0
        assert high.S == pytest.approx(lam * T.payload_bits / 1e6, rel=1e-9)

    def test_single_solution_well_below_limit(self):
        mu = mu_sat(scenario(50, SATURATED))
        res = find_solutions(scenario(50, 0.5 * mu))
        assert not res.dual
        assert len(res.solutions) == 1
        assert res.stability is Stability.STABLE
        assert res.long_term is res.solutions[0]

    def test_deep_saturation_collapses_to_saturated_point(self):
        sc_sat = scenario(50, SATURATED)
        mu = mu_sat(sc_sat)
        sat = solve_saturated(sc_sat)
        res = find_solutions(scenario(50, 3.0 * mu))
        for sol in res.solutions:
            assert sol.X == pytest.approx(sat.X, rel=1e-6)
            assert sol.S == pytest.approx(sat.S, rel=1e-6)

    def test_custom_inits(self):
        res = find_solutions(scenario(50, 2.0), inits=(0.0,))
        assert len(res.branches) == 1
        assert res.branches[0].init_I == 0.0

    def test_all_inits_failing_raises(self):
        settings = SolverSettings(tolerance=1e-15, max_iterations=2)
        with pytest.raises(SolverError, match="every initialization failed"):
            find_solutions(scenario(50, 2.0), settings)


class TestKernelModes:
    def test_table_matches_exact(self):
        sc = scenario(10, SATURATED)
        exact = solve_saturated(sc)
        table = solve_saturated(
            sc, SolverSettings(kernel_mode=KernelMode.TABLE))
        assert table.X == pytest.approx(exact.X, rel=1e-6)
        assert table.S == pytest.approx(exact.S, rel=1e-6)

    def test_exp_approx_close_but_distinct(self):
        sc = scenario(30, SATURATED)
        exact = solve_saturated(sc)
        approx = solve_saturated(
            sc, SolverSettings(kernel_mode=KernelMode.EXP_APPROX))
        assert approx.converged
        assert approx.X != exact.X
        assert abs(1e6 / approx.X - 1e6 / exact.X) < 2.0

    def test_parse_kernel_mode(self):
        assert parse_kernel_mode("exact") is KernelMode.EXACT
        assert parse_kernel_mode("TABLE") is KernelMode.TABLE
        assert parse_kernel_mode("exp") is KernelMode.EXP_APPROX
        assert parse_kernel_mode("exp-approx") is KernelMode.EXP_APPROX
        assert parse_kernel_mode(KernelMode.TABLE) is KernelMode.TABLE
        with pytest.raises(ConfigError):
            parse_kernel_mode("fourier")

    def test_table_mode_needs_schedule_or_table(self):
        with pytest.raises(ConfigError):
            kernel_fn_for(KernelMode.TABLE)

    def test_table_rejects_untabulated_pair(self):
        fn = kernel_fn_for(KernelMode.TABLE, schedule=CA32)
        with pytest.raises(ValueError):
            fn(63, 15, 0.5)


class TestPrimitives:
    def test_slot_probabilities_sum_to_one(self):
        for tau in (0.0, 0.05, 0.3, 0.9, 1.0):
            p_s, p_e, p_c = slot_probabilities(tau, 12)
            assert p_s + p_e + p_c == pytest.approx(1.0, abs=1e-12)
            assert min(p_s, p_e, p_c) >= 0.0

    def test_slot_probabilities_single_node(self):
        p_s, p_e, p_c = slot_probabilities(0.3, 1)
        assert (p_s, p_e, p_c) == (0.0, 1.0, 0.0)

    def test_slot_probabilities_validation(self):
        with pytest.raises(ValueError):
            slot_probabilities(1.2, 5)
        with pytest.raises(ValueError):
            slot_probabilities(0.5, 0)

    def test_collision_prob(self):
        assert collision_prob(0.7, 1) == 0.0
        assert collision_prob(0.25, 2) == pytest.approx(0.25, abs=1e-12)
        grid = [collision_prob(t, 10) for t in (0.1, 0.2, 0.4)]
        assert grid[0] < grid[1] < grid[2]
        assert collision_prob(0.1, 5) < collision_prob(0.1, 50)

    def test_mean_backoff_single_stage_geometric(self):
        # One stage repeats geometrically: Ew = w / (1 - p_fail). With the
        # deferral counter disabled, p_fail = p and w = (W+1)/2.
        sched = StageSchedule(W=(7,), M=(INFINITE,))
        fn = kernel_fn_for(KernelMode.EXACT)
        Ew, slots, p_fail, p_defer = mean_backoff_slots(sched, 0.5, 0.5, fn)
        assert slots == (4.0,)
        assert p_defer == (0.0,)
        assert p_fail == (0.5,)
        assert Ew == pytest.approx(8.0, abs=1e-12)

    def test_mean_backoff_divergence(self):
        sched = StageSchedule(W=(7,), M=(INFINITE,))
        fn = kernel_fn_for(KernelMode.EXACT)
        with pytest.raises(DivergenceError):
            mean_backoff_slots(sched, 1.0, 0.0, fn)

    def test_mean_backoff_validation(self):
        fn = kernel_fn_for(KernelMode.EXACT)
        with pytest.raises(ValueError):
            mean_backoff_slots(CA32, 1.5, 0.5, fn)
        with pytest.raises(ValueError):
            mean_backoff_slots(CA32, 0.5, -0.1, fn)


class TestErrors:
    def test_saturated_scenario_rejected_by_unsaturated_solver(self):
        with pytest.raises(ConfigError):
            solve_unsaturated(scenario(10, SATURATED))

    def test_convergence_error_carries_last_iterate(self):
        settings = SolverSettings(tolerance=1e-15, max_iterations=1)
        with pytest.raises(ConvergenceError) as exc_info:
            solve_saturated(scenario(50, SATURATED), settings)
        last = exc_info.value.last
        assert last is not None
        assert not last.converged
        assert last.iterations == 1

    def test_settings_validation(self):
        with pytest.raises(ConfigError):
            SolverSettings(tolerance=0.0)
        with pytest.raises(ConfigError):
            SolverSettings(damping=0.0)
        with pytest.raises(ConfigError):
            SolverSettings(damping=1.5)
        with pytest.raises(ConfigError):
            SolverSettings(max_iterations=0)
        with pytest.raises(ConfigError):
            SolverSettings(init_I=-1.0)

    def test_full_damping_allowed(self):
        sol = solve_saturated(scenario(5, SATURATED),
                              SolverSettings(damping=1.0))
        assert sol.converged
