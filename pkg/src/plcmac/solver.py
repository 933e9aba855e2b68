"""Renewal-reward fixed point of the contention MAC.

A tagged node attempts transmission with probability tau in a generic slot;
tau in turn fixes the collision and overhearing probabilities, the per-stage
deferral metrics, the mean backoff length, the slot-duration mixture and the
service time, which close the loop back onto tau. The solver iterates that
loop with damping from a configurable starting point. Near the stability
limit the unsaturated system admits two fixed points and the starting idle
estimate (init_I) selects between them.
"""

import enum
import math
from dataclasses import dataclass, replace

from . import kernel as _kernel
from .domain import INFINITE, SATURATED, ConfigError, frame_durations


class KernelMode(enum.Enum):
    EXACT = "exact"
    TABLE = "table"
    EXP_APPROX = "exp"


def parse_kernel_mode(name):
    if isinstance(name, KernelMode):
        return name
    key = str(name).strip().lower()
    aliases = {"exact": KernelMode.EXACT, "table": KernelMode.TABLE,
               "exp": KernelMode.EXP_APPROX, "exp-approx": KernelMode.EXP_APPROX,
               "exp_approx": KernelMode.EXP_APPROX}
    if key in aliases:
        return aliases[key]
    raise ConfigError(f"unknown kernel mode {name!r}; expected exact, table or exp")


class Stability(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


class SolverError(RuntimeError):
    """Solver diagnostic; carries the last iterate when one exists."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ConvergenceError(SolverError):
    """The damped iteration did not settle within max_iterations."""


class DivergenceError(SolverError):
    """The iterate walked into a regime with infinite expected backoff."""


@dataclass(frozen=True)
class SolverSettings:
    init_I: float = 0.0
    tolerance: float = 1e-9
    max_iterations: int = 100_000
    damping: float = 0.5
    kernel_mode: KernelMode = KernelMode.EXACT
    table_step: float = _kernel.DEFAULT_TABLE_STEP
    table: object = None  # optional prebuilt KernelTable for TABLE mode

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance!r}")
        if not 0 < self.damping <= 1:
            raise ConfigError(f"damping must lie in (0, 1], got {self.damping!r}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not self.init_I >= 0:
            raise ConfigError(f"init_I must be >= 0, got {self.init_I!r}")


@dataclass(frozen=True)
class SolutionPoint:
    """Converged analytic outputs for one scenario and one initialization."""

    tau: float
    p: float
    p_b: float
    rho: float
    I: float
    Ew: float
    n_t: float
    alpha: float
    X: float        # µs
    S: float        # Mbps per node
    converged: bool
    iterations: int
    residual: float


def slot_probabilities(tau, n):
    """(p_s, p_e, p_c): the slot-type mixture one backing-off node observes
    among the other n-1 nodes."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    p_e = (1.0 - tau) ** (n - 1)
    if n == 1:
        p_s = 0.0
    else:
        p_s = (n - 1) * tau * (1.0 - tau) ** (n - 2)
    p_c = 1.0 - p_s - p_e
    if p_c < 0.0:
        p_c = 0.0
    return p_s, p_e, p_c


def collision_prob(tau, n):
    """Probability that at least one of the other n-1 nodes transmits."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 1.0 - (1.0 - tau) ** (n - 1)


def kernel_fn_for(mode, schedule=None, table=None, table_step=None):
    """Kernel dispatcher: (W, M, p_b) -> (p_defer, mean slots) for finite M.

    TABLE mode interpolates a precomputed table (built here when not
    supplied); EXP_APPROX replaces only the deferral probability, the mean
    slot count stays exact.
    """
    mode = parse_kernel_mode(mode)
    if mode is KernelMode.EXACT:
        return lambda W, M, p_b: (_kernel.p_defer_exact(W, M, p_b),
                                  _kernel.expected_slots_exact(W, M, p_b))
    if mode is KernelMode.EXP_APPROX:
        return lambda W, M, p_b: (_kernel.p_defer_exp_approx(W, M, p_b),
                                  _kernel.expected_slots_exact(W, M, p_b))
    if table is None:
        if schedule is None:
            raise ConfigError("TABLE mode needs a schedule or a prebuilt table")
        step = _kernel.DEFAULT_TABLE_STEP if table_step is None else table_step
        table = shared_table(schedule, step)
    pair_to_stage = {pair: i + 1 for i, pair in enumerate(table.pairs)}

    def from_table(W, M, p_b):
        stage = pair_to_stage.get((W, M))
        if stage is None:
            raise ValueError(f"(W={W}, M={M}) is not tabulated")
        return _kernel.lookup(table, stage, p_b)

    return from_table


_TABLE_CACHE = {}


def shared_table(schedule, step=_kernel.DEFAULT_TABLE_STEP):
    """Process-wide table cache; schedules hash by value."""
    key = (schedule.W, schedule.M, float(step))
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = _kernel.build_table(schedule, step)
    return _TABLE_CACHE[key]


def mean_backoff_slots(schedule, p, p_b, kernel_fn):
    """Combine per-stage race metrics into the whole-service backoff mean.

    Stage 1 is always visited; a failure (collision or deferral) advances to
    the next stage and the last stage repeats geometrically. Returns
    (Ew, per-stage slots, per-stage failure probabilities, per-stage
    deferral probabilities), stages listed in order 1..m.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    if not 0.0 <= p_b <= 1.0:
        raise ValueError(f"p_b must lie in [0, 1], got {p_b!r}")
    m = schedule.m
    slots = []
    p_defer = []
    p_fail = []
    for i in range(1, m + 1):
        W = schedule.window(i)
        M = schedule.defer_init(i)
        if M is INFINITE:
            d, w = 0.0, (W + 1) / 2.0
        else:
            d, w = kernel_fn(W, M, p_b)
        # failure = collision of an actual attempt, or deferral
        pf = p * (1.0 - d) + d
        slots.append(w)
        p_defer.append(d)
        p_fail.append(pf)
    if p_fail[-1] >= 1.0 - 1e-12:
        raise DivergenceError(
            f"failure probability at the last stage is {p_fail[-1]!r}; "
            "expected backoff diverges")
    visits = [1.0] * m
    for i in range(1, m):
        visits[i] = visits[i - 1] * p_fail[i - 1]
    visits[-1] /= 1.0 - p_fail[-1]
    Ew = sum(v * w for v, w in zip(visits, slots))
    return Ew, tuple(slots), tuple(p_fail), tuple(p_defer)


def service_time(Ew, alpha, n_t, T_s, T_c):
    """Mean head-of-line to delivery time: backoff airtime plus the failed
    attempts and the final success."""
    return Ew * alpha + (n_t - 1.0) * T_c + T_s


def _pipeline(scenario, kernel_fn, t_s, t_c, saturated):
    """One full sweep tau -> all derived fields -> next tau."""
    sched = scenario.schedule
    sigma = scenario.timings.sigma
    n = scenario.n
    lam_us = 0.0 if saturated else scenario.lam / 1e6

    def step(tau):
        p = collision_prob(tau, n)
        p_b = p
        Ew, slots, p_fail, p_def = mean_backoff_slots(sched, p, p_b, kernel_fn)
        if p >= 1.0 - 1e-12:
            raise DivergenceError(f"collision probability reached {p!r}")
        n_t = 1.0 / (1.0 - p)
        p_s, p_e, p_c = slot_probabilities(tau, n)
        alpha = p_s * t_s + p_c * t_c + p_e * sigma
        X = service_time(Ew, alpha, n_t, t_s, t_c)
        if saturated:
            rho, I = 1.0, 0.0
        else:
            rho = min(lam_us * X, 1.0)
            # mean idle slots between a departure and the next arrival;
            # expm1 keeps the small-lam_us*alpha case accurate
            I = max((1.0 - rho) / -math.expm1(-lam_us * alpha), 0.0)
        tau_next = n_t / (Ew + n_t + I)
        fields = dict(p=p, p_b=p_b, rho=rho, I=I, Ew=Ew, n_t=n_t,
                      alpha=alpha, X=X)
        return tau_next, fields

    return step


def _polish(step_fn, tau, damping, rounds=60):
    """Tighten a converged iterate well below the stopping tolerance.

    Runs the damped map with Aitken extrapolation so that two runs landing
    on the same fixed point agree to near machine precision, which is what
    the duplicate-solution comparison needs.
    """

    def damped(x):
        x_next, _ = step_fn(x)
        return damping * x_next + (1.0 - damping) * x

    def residual(x):
        try:
            x_next, _ = step_fn(x)
        except SolverError:
            return math.inf
        return abs(x_next - x)

    best, best_res = tau, residual(tau)
    x = tau
    for _ in range(rounds):
        if best_res < 1e-15:
            break
        x1 = damped(x)
        x2 = damped(x1)
        denom = x2 - 2.0 * x1 + x
        cand = x2 if denom == 0.0 else x - (x1 - x) ** 2 / denom
        if not 0.0 < cand < 1.0:
            cand = x2
        cand_res = residual(cand)
        if cand_res < best_res:
            best, best_res = cand, cand_res
            x = cand
        else:
            x = x2
            r = residual(x)
            if r < best_res:
                best, best_res = x, r
    return best


def _finalize(scenario, step_fn, tau, iterations, residual, converged, saturated):
    _, f = step_fn(tau)
    L = scenario.timings.payload_bits
    S = f["rho"] * L / f["X"]  # bits/µs == Mbps
    return SolutionPoint(tau=tau, p=f["p"], p_b=f["p_b"], rho=f["rho"],
                         I=f["I"], Ew=f["Ew"], n_t=f["n_t"], alpha=f["alpha"],
                         X=f["X"], S=S, converged=converged,
                         iterations=iterations, residual=residual)


def _solve(scenario, settings, saturated):
    t_s, t_c = frame_durations(scenario.timings)
    kernel_fn = kernel_fn_for(settings.kernel_mode, scenario.schedule,
                              settings.table, settings.table_step)
    step_fn = _pipeline(scenario, kernel_fn, t_s, t_c, saturated)

    # Start from a fresh stage-1 view plus the configured idle estimate, so
    # init_I steers which basin the iteration enters.
    I0 = 0.0 if saturated else float(settings.init_I)
    tau = 1.0 / (scenario.schedule.window(1) / 2.0 + 1.0 + I0)
    theta = settings.damping
    residual = math.inf
    for it in range(1, settings.max_iterations + 1):
        try:
            tau_next, _ = step_fn(tau)
        except DivergenceError:
            # The iterate left the map's domain (expected backoff no longer
            # finite). Pull back toward the origin; the domain always
            # reaches down to tau = 0, so this finds it when it exists.
            tau *= 0.5
            if tau < 1e-12:
                raise
            continue
        residual = abs(tau_next - tau)
        tau = theta * tau_next + (1.0 - theta) * tau
        if residual <= settings.tolerance:
            tau = _polish(step_fn, tau, theta)
            return _finalize(scenario, step_fn, tau, it, residual, True,
                             saturated)
    last = _finalize(scenario, step_fn, tau, settings.max_iterations,
                     residual, False, saturated)
    raise ConvergenceError(
        f"no fixed point within {settings.max_iterations} iterations "
        f"(residual {residual:.3e}, tau {tau:.6g})", last=last)


def solve_saturated(scenario, settings=None):
    """Fixed point with every queue permanently backlogged (rho = 1, I = 0)."""
    settings = settings or SolverSettings()
    return _solve(scenario, settings, saturated=True)


def solve_unsaturated(scenario, settings=None):
    """Fixed point of the full system with finite arrival rate.

    The returned solution depends on settings.init_I by design: near the
    stability limit the system is bistable and the starting idle estimate
    selects the basin. lam = 0 short-circuits to the idle solution.
    """
    settings = settings or SolverSettings()
    if scenario.lam == SATURATED:
        raise ConfigError("scenario is saturated; use solve_saturated")
    if scenario.lam == 0.0:
        t_s, t_c = frame_durations(scenario.timings)
        sched = scenario.schedule
        W1 = sched.window(1)
        M1 = sched.defer_init(1)
        Ew = (W1 + 1) / 2.0 if M1 is INFINITE else W1 / 2.0
        X = Ew * scenario.timings.sigma + t_s
        return SolutionPoint(tau=0.0, p=0.0, p_b=0.0, rho=0.0, I=math.inf,
                             Ew=Ew, n_t=1.0, alpha=scenario.timings.sigma,
                             X=X, S=0.0, converged=True, iterations=0,
                             residual=0.0)
    return _solve(scenario, settings, saturated=False)


def mu_sat(scenario, settings=None):
    """Saturated service rate in packets/s; the stability limit on lam."""
    sol = solve_saturated(scenario, settings)
    return 1e6 / sol.X


@dataclass(frozen=True)
class BranchOutcome:
    init_I: float
    solution: object    # SolutionPoint, or None when the branch failed
    error: str = ""


@dataclass(frozen=True)
class SolutionSet:
    branches: tuple            # BranchOutcome per initialization, in order
    solutions: tuple           # de-duplicated SolutionPoints
    stability: Stability
    mu_sat_value: float        # packets/s
    long_term: object          # SolutionPoint or None: operative long-run prediction

    @property
    def dual(self):
        return len(self.solutions) == 2


def _same_solution(a, b, tol):
    fields = ("tau", "p", "p_b", "rho", "I", "Ew", "n_t", "alpha", "X", "S")
    for name in fields:
        va, vb = getattr(a, name), getattr(b, name)
        if math.isinf(va) and math.isinf(vb):
            continue
        if abs(va - vb) > tol * max(1.0, abs(va), abs(vb)):
            return False
    return True


def find_solutions(scenario, settings=None, inits=(0.0, 1000.0)):
    """Solve from a lightly-loaded and a highly-loaded start and classify.

    Returns every distinct converged solution (duplicates merged when all
    fields agree within 10x tolerance). The scenario is STABLE when lam is
    below the saturated service rate; otherwise it is UNSTABLE and the
    long-term behaviour is the lowest-throughput solution.
    """
    settings = settings or SolverSettings()
    branches = []
    for init in inits:
        branch_settings = replace(settings, init_I=float(init))
        try:
            sol = solve_unsaturated(scenario, branch_settings)
            branches.append(BranchOutcome(float(init), sol))
        except SolverError as exc:
            branches.append(BranchOutcome(float(init), None, str(exc)))
    solutions = []
    for b in branches:
        if b.solution is None:
            continue
        if any(_same_solution(b.solution, s, 10.0 * settings.tolerance)
               for s in solutions):
            continue
        solutions.append(b.solution)
    if not solutions:
        raise SolverError("every initialization failed: "
                          + "; ".join(b.error for b in branches))
    mu = mu_sat(scenario, settings)
    stability = Stability.STABLE if scenario.lam < mu else Stability.UNSTABLE
    long_term = min(solutions, key=lambda s: s.S)
    return SolutionSet(branches=tuple(branches), solutions=tuple(solutions),
                       stability=stability, mu_sat_value=mu,
                       long_term=long_term)
