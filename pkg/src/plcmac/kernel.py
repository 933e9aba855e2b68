"""Per-stage backoff/deferral race metrics.

For one backoff stage with window W and deferral initializer M, where every
observed slot is busy independently with probability p_b, this module
evaluates:

  - p_defer_exact(W, M, p_b): probability the deferral counter expires
    before the backoff counter does (the stage advances without an attempt);
  - expected_slots_exact(W, M, p_b): mean number of slots spent at the stage
    before either outcome.

Both are exact combinatorial sums, evaluated per term in log space so large
binomial coefficients never overflow. A Monte-Carlo oracle replays the same
race directly for verification, an interpolation table trades the sums for
a lookup, and a two-exponential race gives a cheap approximation of
p_defer.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import seed_streams, uniform01, uniform_int
from .domain import INFINITE

TABLE_FORMAT_VERSION = 1
DEFAULT_TABLE_STEP = 1e-4


def _validate(W, M, p_b):
    if not 0.0 <= p_b <= 1.0:
        raise ValueError(f"p_b must lie in [0, 1], got {p_b!r}")
    if W < 0 or M < 0 or M > W:
        raise ValueError(f"require 0 <= M <= W, got W={W}, M={M}")


@njit(cache=True)
def _p_defer_core(W, M, p_b):
    if p_b <= 0.0 or W == M:
        return 0.0
    if p_b >= 1.0:
        # every slot busy: draws b <= M drain before the counter expires,
        # larger draws always defer
        return (W - M) / (W + 1.0)
    log_pb = math.log(p_b)
    log_qb = math.log1p(-p_b)
    # A deferring stage sees l idle slots interleaved with M busy ones and
    # then the (M+1)-th busy slot; a draw b = M+k tolerates l <= k-1, so the
    # number of draws admitting a given l is W-M-l.
    total = 0.0
    for l in range(W - M):
        log_term = (math.lgamma(M + l + 1.0) - math.lgamma(l + 1.0)
                    - math.lgamma(M + 1.0)
                    + l * log_qb + (M + 1.0) * log_pb)
        total += (W - M - l) * math.exp(log_term)
    total /= W + 1.0
    if total < 0.0:
        return 0.0
    if total > 1.0:
        return 1.0
    return total


@njit(cache=True)
def _slots_core(W, M, p_b):
    if p_b <= 0.0:
        # no busy slots: plain uniform countdown on {0..W}
        return W / 2.0
    if p_b >= 1.0:
        return (M * (M + 1) / 2.0 + (W - M) * (M + 1.0)) / (W + 1.0)
    log_pb = math.log(p_b)
    log_qb = math.log1p(-p_b)
    # draws b <= M can never defer and run for exactly b slots
    acc = M * (M + 1) / 2.0
    # defer branch: l idle + M busy slots, then the deferring busy slot
    for l in range(W - M):
        log_term = (math.lgamma(M + l + 1.0) - math.lgamma(l + 1.0)
                    - math.lgamma(M + 1.0)
                    + l * log_qb + (M + 1.0) * log_pb)
        acc += (W - M - l) * (l + M + 1.0) * math.exp(log_term)
    # transmit branch: a draw b = M+k expires after exactly M+k slots of
    # which M-l were busy, l in 0..M
    for k in range(1, W - M + 1):
        for l in range(M + 1):
            log_term = (math.lgamma(M + k + 1.0) - math.lgamma(k + l + 1.0)
                        - math.lgamma(M - l + 1.0)
                        + (k + l) * log_qb + (M - l) * log_pb)
            acc += (k + M) * math.exp(log_term)
    acc /= W + 1.0
    if acc < 0.0:
        return 0.0
    if acc > W:
        return float(W)
    return acc


def p_defer_exact(W, M, p_b):
    """Probability that a stage (W, M) ends by deferral when each observed
    slot is busy with probability p_b."""
    _validate(W, M, p_b)
    return _p_defer_core(int(W), int(M), float(p_b))


def expected_slots_exact(W, M, p_b):
    """Mean slots spent waiting at a stage (W, M) before transmitting or
    deferring, with busy-slot probability p_b."""
    _validate(W, M, p_b)
    return _slots_core(int(W), int(M), float(p_b))


def p_defer_exp_approx(W, M, p_b):
    """Deferral probability from a two-exponential race.

    Backoff and deferral countdowns are replaced by exponential clocks with
    rates 2/W and p_b/(M+1); the stage defers when the second clock fires
    first. Rough for large M (small draws can never defer, which the race
    ignores), but cheap.
    """
    if W <= 0:
        raise ValueError("W must be positive, the backoff rate is 2/W")
    if not 0.0 <= p_b <= 1.0:
        raise ValueError(f"p_b must lie in [0, 1], got {p_b!r}")
    if M < 0:
        raise ValueError(f"M must be >= 0, got {M}")
    if p_b == 0.0:
        return 0.0
    beta = 2.0 / W
    gamma = p_b / (M + 1.0)
    return gamma / (beta + gamma)


@njit(cache=True)
def _mc_core(W, M, p_b, trials, streams):
    defers = 0
    total_slots = 0.0
    for _ in range(trials):
        b = uniform_int(streams, 0, W)
        dc = M
        slots = 0
        while b > 0:
            if uniform01(streams, 1) < p_b:
                if dc == 0:
                    slots += 1  # the deferring slot itself counts
                    defers += 1
                    break
                dc -= 1
            b -= 1
            slots += 1
        total_slots += slots
    return defers / trials, total_slots / trials


def mc_oracle(W, M, p_b, trials, seed):
    """Simulate the backoff/deferral race directly.

    Per trial: draw b uniform on {0..W}, set the deferral counter to M, and
    walk slots that are busy with probability p_b. A busy slot with the
    counter at zero ends the trial as a deferral (that slot counts);
    otherwise busy slots decrement both counters and idle slots decrement
    the backoff, until b reaches zero and the trial ends as a transmission.
    Returns (defer frequency, mean elapsed slots over all trials).
    """
    _validate(W, M, p_b)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    streams = seed_streams(seed, 2)
    return _mc_core(int(W), int(M), float(p_b), int(trials), streams)


@dataclass(frozen=True)
class KernelTable:
    """Precomputed (p_defer, mean slots) on a p_b grid, one row per stage.

    Stages with an INFINITE deferral initializer never defer; their rows are
    the constants 0 and (W+1)/2.
    """

    step: float
    grid: np.ndarray
    pairs: tuple           # per-stage (W, M); M is an int or INFINITE
    defer_values: np.ndarray
    slot_values: np.ndarray


def _make_grid(step):
    if not step > 0:
        raise ValueError(f"step must be positive, got {step!r}")
    inv = 1.0 / step
    npts = int(round(inv))
    if npts >= 1 and abs(inv - npts) < 1e-9:
        return np.linspace(0.0, 1.0, npts + 1)
    pts = np.arange(0.0, 1.0, step)
    return np.append(pts, 1.0)


@njit(cache=True)
def _fill_pair(W, M, grid, defer_out, slot_out):
    for g in range(grid.shape[0]):
        defer_out[g] = _p_defer_core(W, M, grid[g])
        slot_out[g] = _slots_core(W, M, grid[g])


def build_table(schedule, step=DEFAULT_TABLE_STEP):
    """Tabulate the exact stage metrics for every stage of a schedule."""
    grid = _make_grid(step)
    m = schedule.m
    defer_values = np.empty((m, grid.size))
    slot_values = np.empty((m, grid.size))
    pairs = []
    done = {}
    for i in range(m):
        W, M = schedule.W[i], schedule.M[i]
        pairs.append((W, M))
        if M is INFINITE:
            defer_values[i] = 0.0
            slot_values[i] = (W + 1) / 2.0
            continue
        if (W, M) in done:
            j = done[(W, M)]
            defer_values[i] = defer_values[j]
            slot_values[i] = slot_values[j]
            continue
        _fill_pair(W, M, grid, defer_values[i], slot_values[i])
        done[(W, M)] = i
    return KernelTable(step=float(step), grid=grid, pairs=tuple(pairs),
                       defer_values=defer_values, slot_values=slot_values)


def lookup(table, stage, p_b):
    """Linearly interpolated (p_defer, mean slots) at a 1-based stage."""
    if not 0.0 <= p_b <= 1.0:
        raise ValueError(f"p_b must lie in [0, 1], got {p_b!r}")
    if not 1 <= stage <= len(table.pairs):
        raise ValueError(f"stage must lie in [1, {len(table.pairs)}], got {stage}")
    row = stage - 1
    d = np.interp(p_b, table.grid, table.defer_values[row])
    s = np.interp(p_b, table.grid, table.slot_values[row])
    return float(d), float(s)


def save_table(table, path):
    """Serialize a KernelTable (INFINITE encoded as M = -1)."""
    W = np.array([w for w, _ in table.pairs], dtype=np.int64)
    M = np.array([-1 if m is INFINITE else m for _, m in table.pairs],
                 dtype=np.int64)
    np.savez(path, version=np.int64(TABLE_FORMAT_VERSION),
             step=np.float64(table.step), grid=table.grid, W=W, M=M,
             defer_values=table.defer_values, slot_values=table.slot_values)


def load_table(path):
    with np.load(path) as z:
        version = int(z["version"])
        if version != TABLE_FORMAT_VERSION:
            raise ValueError(f"table format version {version} not supported "
                             f"(expected {TABLE_FORMAT_VERSION})")
        pairs = tuple((int(w), INFINITE if m < 0 else int(m))
                      for w, m in zip(z["W"], z["M"]))
        return KernelTable(step=float(z["step"]), grid=z["grid"].copy(),
                           pairs=pairs,
                           defer_values=z["defer_values"].copy(),
                           slot_values=z["slot_values"].copy())


def table_cache_name(schedule, step=DEFAULT_TABLE_STEP):
    """Deterministic cache filename for (schedule, step)."""
    w = "-".join(str(x) for x in schedule.W)
    m = "-".join("inf" if x is INFINITE else str(x) for x in schedule.M)
    return f"kerneltable_v{TABLE_FORMAT_VERSION}_W{w}_M{m}_step{step:g}.npz"
