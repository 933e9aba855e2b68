"""Slot-synchronous simulator of n homogeneous contending nodes.

Each slot, every backlogged node whose backoff counter reached zero
transmits; zero transmitters make an idle slot, one a success, two or more a
collision. Non-transmitting backlogged nodes observe the slot: a busy slot
with the deferral counter at zero advances the backoff stage without an
attempt (the deferral counter exists to cut losses early), any other slot
decrements the backoff counter, busy ones also the deferral counter. The
backoff counter deliberately decrements on busy slots as well; that
slot-counting abstraction is what the analytic kernel describes, and
matching it is what validation requires.

Arrivals are per-node continuous-time Poisson processes, queues are large
but finite, and statistics are rolled up per simulated second.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import exponential, seed_streams, uniform01, uniform_int
from .domain import INFINITE, ConfigError, frame_durations


class SlotKind(enum.Enum):
    IDLE = "idle"
    SUCCESS = "success"
    COLLISION = "collision"


@dataclass(frozen=True)
class SlotOutcome:
    kind: SlotKind
    duration: float       # µs
    transmitter_count: int


def classify_slot(transmitter_count, timings):
    """Slot type and duration for a given number of simultaneous attempts."""
    if transmitter_count < 0:
        raise ValueError("transmitter_count must be >= 0")
    t_s, t_c = frame_durations(timings)
    if transmitter_count == 0:
        return SlotOutcome(SlotKind.IDLE, timings.sigma, 0)
    if transmitter_count == 1:
        return SlotOutcome(SlotKind.SUCCESS, t_s, 1)
    return SlotOutcome(SlotKind.COLLISION, t_c, transmitter_count)


@dataclass
class NodeState:
    """Scalar view of one node's simulator record.

    The production slot loop keeps these fields in flat arrays; this type
    documents the record and serves tests and debugging.
    """

    queue_len: int = 0
    stage: int = 1
    bc: int = 0
    dc: object = 0        # int, or INFINITE for never-defer stages
    service_start: float = 0.0


@dataclass(frozen=True)
class SimStats:
    """Long-run averages plus the per-second interval series.

    Throughput numbers are aggregate over all nodes, in Mbps of payload.
    interval k covers simulated seconds [interval_start_s[k],
    interval_start_s[k] + 1); interval_seconds[k] is the slot time actually
    measured in it, which weights the interval throughputs back to
    long_run_throughput exactly.
    """

    sim_duration: float          # s, actual (last slot may overrun)
    warmup: float                # s
    long_run_throughput: float   # Mbps, aggregate payload
    mean_service_time: float     # µs, nan when nothing was delivered
    interval_start_s: np.ndarray
    interval_seconds: np.ndarray
    interval_throughput: np.ndarray
    interval_qmin: np.ndarray
    interval_qavg: np.ndarray
    interval_qmax: np.ndarray
    delivered: np.ndarray        # per node
    arrived: np.ndarray          # per node, drops included
    dropped: np.ndarray          # per node
    final_queue: np.ndarray      # per node
    defer_events: int
    collision_slots: int
    success_slots: int
    idle_slots: int
    total_slots: int


@njit(cache=True)
def _counter_step(bc, dc, busy):
    """One observed slot for a backing-off node.

    Returns (bc, dc, defer). A busy slot with dc == 0 defers: the stage
    advances and bc is not decremented (dc == -1 encodes a never-expiring
    counter). Otherwise busy slots decrement both counters, idle slots just
    the backoff.
    """
    if busy:
        if dc == 0:
            return bc, dc, True
        if dc > 0:
            dc -= 1
    return bc - 1, dc, False


@njit(cache=True)
def _stage_race_core(W, M, p_b, trials, streams):
    defers = 0
    total_slots = 0.0
    for _ in range(trials):
        bc = uniform_int(streams, 0, W)
        dc = M
        slots = 0
        while bc > 0:
            busy = uniform01(streams, 1) < p_b
            nb, nd, defer = _counter_step(bc, dc, busy)
            slots += 1
            if defer:
                defers += 1
                break
            bc, dc = nb, nd
        total_slots += slots
    return defers / trials, total_slots / trials


def stage_race(W, M, p_b, trials, seed):
    """Empirical (defer frequency, mean waiting slots) for a single stage.

    Drives the simulator's own counter-update step against an i.i.d.
    busy-slot process of rate p_b, tying the slot-loop semantics to the
    analytic kernel functions.
    """
    if not 0.0 <= p_b <= 1.0:
        raise ValueError(f"p_b must lie in [0, 1], got {p_b!r}")
    if M is INFINITE or M < 0 or W < 0 or M > W:
        raise ValueError(f"require finite 0 <= M <= W, got W={W}, M={M}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    streams = seed_streams(seed, 2)
    return _stage_race_core(int(W), int(M), float(p_b), int(trials), streams)


@njit(cache=True)
def _slot_loop(n, Wv, Mv, sigma, t_s, t_c, lam_us, saturated, queue_cap,
               preload, duration_us, warmup_us, payload_bits, streams, K):
    m = Wv.shape[0]
    ql = np.zeros(n, np.int64)
    stage = np.ones(n, np.int64)
    bc = np.zeros(n, np.int64)
    dc = np.zeros(n, np.int64)
    service_start = np.zeros(n, np.float64)
    next_arr = np.full(n, np.inf)
    txmask = np.zeros(n, np.bool_)

    for i in range(n):
        if saturated:
            ql[i] = queue_cap
        else:
            ql[i] = preload
            if lam_us > 0.0:
                next_arr[i] = exponential(streams, 2 * i + 1, lam_us)
        if ql[i] > 0:
            stage[i] = 1
            bc[i] = uniform_int(streams, 2 * i, Wv[0])
            dc[i] = Mv[0]
            service_start[i] = 0.0

    int_bits = np.zeros(K)
    int_time = np.zeros(K)
    int_qprod = np.zeros(K)
    int_qmin = np.full(K, np.int64(1) << 62, np.int64)
    int_qmax = np.full(K, -1, np.int64)

    delivered = np.zeros(n, np.int64)
    arrived = np.zeros(n, np.int64)
    dropped = np.zeros(n, np.int64)
    svc_sum = 0.0
    svc_count = 0
    defer_events = 0
    collision_slots = 0
    success_slots = 0
    idle_slots = 0
    total_slots = 0

    now = 0.0
    while now < duration_us:
        tx = 0
        last_tx = -1
        for i in range(n):
            is_tx = ql[i] > 0 and bc[i] == 0
            txmask[i] = is_tx
            if is_tx:
                tx += 1
                last_tx = i
        if tx == 0:
            dur = sigma
            idle_slots += 1
        elif tx == 1:
            dur = t_s
            success_slots += 1
        else:
            dur = t_c
            collision_slots += 1
        end = now + dur
        busy = tx > 0
        measured = end > warmup_us
        k = np.int64(end * 1e-6)
        if k >= K:
            k = K - 1

        # backlogged non-transmitters observe the slot
        for i in range(n):
            if ql[i] > 0 and not txmask[i]:
                nb, nd, defer = _counter_step(bc[i], dc[i], busy)
                if defer:
                    if stage[i] < m:
                        stage[i] += 1
                    s = stage[i] - 1
                    bc[i] = uniform_int(streams, 2 * i, Wv[s])
                    dc[i] = Mv[s]
                    defer_events += 1
                else:
                    bc[i] = nb
                    dc[i] = nd

        if tx == 1:
            j = last_tx
            delivered[j] += 1
            if measured:
                svc_sum += end - service_start[j]
                svc_count += 1
                int_bits[k] += payload_bits
            if saturated:
                ql[j] = queue_cap  # backlog never drains
            else:
                ql[j] -= 1
            if ql[j] > 0:
                stage[j] = 1
                bc[j] = uniform_int(streams, 2 * j, Wv[0])
                dc[j] = Mv[0]
                service_start[j] = end
        elif tx >= 2:
            for i in range(n):
                if txmask[i]:
                    if stage[i] < m:
                        stage[i] += 1
                    s = stage[i] - 1
                    bc[i] = uniform_int(streams, 2 * i, Wv[s])
                    dc[i] = Mv[s]

        # arrivals during this slot join at its end; a packet landing on an
        # empty queue starts service accounting at its arrival instant
        if not saturated and lam_us > 0.0:
            for i in range(n):
                while next_arr[i] <= end:
                    arrived[i] += 1
                    if ql[i] < queue_cap:
                        if ql[i] == 0:
                            service_start[i] = next_arr[i]
                            stage[i] = 1
                            bc[i] = uniform_int(streams, 2 * i, Wv[0])
                            dc[i] = Mv[0]
                        ql[i] += 1
                    else:
                        dropped[i] += 1
                    next_arr[i] += exponential(streams, 2 * i + 1, lam_us)

        if measured:
            int_time[k] += dur
            qsum = 0
            qmn = ql[0]
            qmx = ql[0]
            for i in range(n):
                q = ql[i]
                qsum += q
                if q < qmn:
                    qmn = q
                if q > qmx:
                    qmx = q
            int_qprod[k] += dur * (qsum / n)
            if qmn < int_qmin[k]:
                int_qmin[k] = qmn
            if qmx > int_qmax[k]:
                int_qmax[k] = qmx
        total_slots += 1
        now = end

    return (now, int_bits, int_time, int_qprod, int_qmin, int_qmax,
            delivered, arrived, dropped, ql, svc_sum, svc_count,
            defer_events, collision_slots, success_slots, idle_slots,
            total_slots)


def run_sim(scenario, duration, warmup, seed):
    """Simulate `duration` seconds; collect statistics after `warmup` s.

    Identical (scenario, duration, warmup, seed) inputs reproduce identical
    results. Arrivals beyond queue_cap are dropped and counted.
    """
    if not (duration > warmup >= 0):
        raise ConfigError(f"need duration > warmup >= 0, got "
                          f"duration={duration!r}, warmup={warmup!r}")
    sched = scenario.schedule
    Wv = np.array(sched.W, dtype=np.int64)
    Mv = np.array([-1 if M is INFINITE else M for M in sched.M],
                  dtype=np.int64)
    t_s, t_c = frame_durations(scenario.timings)
    lam_us = 0.0 if scenario.saturated else scenario.lam / 1e6
    streams = seed_streams(seed, 2 * scenario.n)
    K = int(duration) + 2
    (final_us, int_bits, int_time, int_qprod, int_qmin, int_qmax, delivered,
     arrived, dropped, final_queue, svc_sum, svc_count, defer_events,
     collision_slots, success_slots, idle_slots, total_slots) = _slot_loop(
        scenario.n, Wv, Mv, scenario.timings.sigma, t_s, t_c, lam_us,
        scenario.saturated, scenario.queue_cap, scenario.preload,
        duration * 1e6, warmup * 1e6, float(scenario.timings.payload_bits),
        streams, K)

    # Expose only complete one-second bins. The first bin after warmup and
    # the bin the final slot spills into hold partial time; a sliver holding
    # one success slot reads as an absurd rate and breaks change-point scans.
    k0 = int(math.ceil(warmup))
    k1 = int(math.floor(duration)) - 1
    if k1 < k0:
        measured = np.nonzero(int_time > 0.0)[0]
        k0, k1 = int(measured[0]), int(measured[-1])
    sl = slice(k0, k1 + 1)
    time_us = int_time[sl]
    with np.errstate(divide="ignore", invalid="ignore"):
        throughput = np.where(time_us > 0, int_bits[sl] / time_us, 0.0)
        qavg = np.where(time_us > 0, int_qprod[sl] / time_us, 0.0)
    qmin = int_qmin[sl].copy()
    qmax = int_qmax[sl].copy()
    qmin[time_us == 0] = 0
    qmax[time_us == 0] = 0

    return SimStats(
        sim_duration=final_us / 1e6,
        warmup=float(warmup),
        long_run_throughput=float(int_bits.sum() / int_time.sum()),
        mean_service_time=float(svc_sum / svc_count) if svc_count else math.nan,
        interval_start_s=np.arange(k0, k1 + 1, dtype=np.float64),
        interval_seconds=time_us / 1e6,
        interval_throughput=throughput,
        interval_qmin=qmin,
        interval_qavg=qavg,
        interval_qmax=qmax,
        delivered=delivered,
        arrived=arrived,
        dropped=dropped,
        final_queue=final_queue,
        defer_events=int(defer_events),
        collision_slots=int(collision_slots),
        success_slots=int(success_slots),
        idle_slots=int(idle_slots),
        total_slots=int(total_slots),
    )


def detect_transition(series, threshold=3.0):
    """Best mean-shift split of a series, or None.

    Scores every split by the between-segment mean difference over the
    pooled standard deviation; a zero pooled deviation with a nonzero
    difference is a perfect step. Returns the argmax split index when its
    score exceeds the threshold.
    """
    x = np.asarray(series, dtype=np.float64)
    total = x.size
    if total < 2:
        return None
    csum = np.cumsum(x)
    csq = np.cumsum(x * x)
    splits = np.arange(1, total)
    n1 = splits.astype(np.float64)
    n2 = total - n1
    s1 = csum[:-1]
    q1 = csq[:-1]
    m1 = s1 / n1
    m2 = (csum[-1] - s1) / n2
    ss1 = np.maximum(q1 - n1 * m1 * m1, 0.0)
    ss2 = np.maximum((csq[-1] - q1) - n2 * m2 * m2, 0.0)
    pooled = np.sqrt((ss1 + ss2) / max(total - 2, 1))
    diff = np.abs(m1 - m2)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(pooled > 0.0, diff / pooled,
                         np.where(diff > 0.0, np.inf, 0.0))
    best = int(np.argmax(score))
    if score[best] > threshold:
        return int(splits[best])
    return None


def run_transitory_probe(scenario, duration, seed, threshold=3.0):
    """Empty-start run plus change-point detection on interval throughput.

    Returns (SimStats, transition time in s or None). Meant for scenarios
    with preload = 0: when the arrival rate exceeds the saturated service
    rate, the high-throughput start decays into the saturated long-term
    behaviour and the decay instant is reported.
    """
    stats = run_sim(scenario, duration, 0.0, seed)
    idx = detect_transition(stats.interval_throughput, threshold)
    t = None if idx is None else float(stats.interval_start_s[idx])
    return stats, t
