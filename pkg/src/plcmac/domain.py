"""Protocol parameters of the powerline contention MAC: per-stage backoff
schedules, access-category presets, variant transforms, PHY timing sets and
the derived frame durations.

Durations are microseconds throughout; rates are packets per second and are
converted only at reporting boundaries.
"""

import enum
import math
import operator
from dataclasses import dataclass, replace

# Arrival-rate sentinel: every node always has a packet buffered.
SATURATED = math.inf


class ConfigError(ValueError):
    """Invalid protocol, scenario or experiment parameters."""


class Deferral(enum.Enum):
    """Distinguished non-numeric deferral initializer.

    INFINITE means the deferral counter never expires, i.e. the stage never
    defers. Kept as an enum member so arithmetic on M values cannot silently
    treat it as a number.
    """

    INFINITE = "INFINITE"

    def __repr__(self):
        return self.name


INFINITE = Deferral.INFINITE


class Variant(enum.Enum):
    STANDARD = "standard"
    NO_DEFERRAL = "no-defer"
    ALWAYS_DEFER = "always-defer"


def parse_variant(name):
    """Map a CLI/config spelling onto a Variant member."""
    if isinstance(name, Variant):
        return name
    key = str(name).strip().lower().replace("_", "-")
    for v in Variant:
        if key in (v.value, v.name.lower().replace("_", "-")):
            return v
    raise ConfigError(f"unknown variant {name!r}; expected one of "
                      + ", ".join(v.value for v in Variant))


def _as_int(value, what):
    try:
        return operator.index(value)
    except TypeError:
        raise ConfigError(f"{what} must be an integer, got {value!r}") from None


@dataclass(frozen=True)
class StageSchedule:
    """Per-stage contention windows W_i and deferral initializers M_i.

    Stages are indexed i in [1, m]; the accessors below take 1-based stage
    indices. A deferral initializer is a non-negative integer or INFINITE.
    """

    W: tuple
    M: tuple

    def __post_init__(self):
        W = tuple(_as_int(w, "contention window") for w in self.W)
        M = tuple(m if m is INFINITE else _as_int(m, "deferral initializer")
                  for m in self.M)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "M", M)
        if len(W) == 0:
            raise ConfigError("schedule needs at least one stage")
        if len(W) != len(M):
            raise ConfigError(f"W has {len(W)} stages but M has {len(M)}")
        for w, m in zip(W, M):
            if w < 0:
                raise ConfigError(f"contention window must be >= 0, got {w}")
            if m is INFINITE:
                continue
            if m < 0:
                raise ConfigError(f"deferral initializer must be >= 0, got {m}")
            if m > w:
                # the per-stage kernel needs W - M >= 0
                raise ConfigError(f"deferral initializer {m} exceeds window {w}")

    @property
    def m(self):
        """Number of backoff stages."""
        return len(self.W)

    def window(self, stage):
        """Contention-window maximum W_i for 1-based stage index."""
        return self.W[stage - 1]

    def defer_init(self, stage):
        """Deferral initializer M_i for 1-based stage index."""
        return self.M[stage - 1]


@dataclass(frozen=True)
class PhyTimings:
    """Slot, frame and interframe durations (µs) plus payload size.

    data_rate is the nominal PHY rate in bits/µs and is informational only.
    """

    sigma: float
    prs0: float
    prs1: float
    t_fra: float
    t_res: float
    rifs: float
    cifs: float
    payload_bits: int
    data_rate: float = 0.0

    def __post_init__(self):
        for name in ("sigma", "prs0", "prs1", "t_fra", "t_res", "rifs", "cifs"):
            v = getattr(self, name)
            if not (v >= 0):
                raise ConfigError(f"{name} must be non-negative, got {v!r}")
        if self.payload_bits <= 0:
            raise ConfigError("payload_bits must be positive")


# Homeplug 1.0 profile: 1500-byte payload at the 14 Mbps nominal rate.
HOMEPLUG_1_0 = PhyTimings(
    sigma=35.84,
    prs0=35.84,
    prs1=35.84,
    t_fra=1153.5,
    t_res=72.0,
    rifs=26.0,
    cifs=35.84,
    payload_bits=12000,
    data_rate=14.0,
)


@dataclass(frozen=True)
class Scenario:
    """One homogeneous contention setup: n nodes sharing a schedule and a
    PHY profile, each fed by an independent Poisson arrival stream of rate
    lam packets/s (or SATURATED for an always-backlogged source)."""

    n: int
    schedule: StageSchedule
    timings: PhyTimings
    lam: float
    queue_cap: int = 1000
    preload: int = 0

    def __post_init__(self):
        if _as_int(self.n, "n") < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.lam != SATURATED and not (self.lam >= 0):
            raise ConfigError(f"lam must be >= 0 or SATURATED, got {self.lam!r}")
        if _as_int(self.queue_cap, "queue_cap") < 1:
            raise ConfigError(f"queue_cap must be >= 1, got {self.queue_cap}")
        if not 0 <= _as_int(self.preload, "preload") <= self.queue_cap:
            raise ConfigError(
                f"preload must lie in [0, queue_cap], got {self.preload}")

    @property
    def saturated(self):
        return self.lam == SATURATED


def preset_schedule(category):
    """Standard 4-stage schedule for an access-category pair.

    Accepts 'CA3/2' or 'CA1/0' (case-insensitive, separators optional).
    """
    key = str(category).strip().lower().replace("/", "").replace("-", "")
    if key == "ca32":
        return StageSchedule(W=(7, 15, 15, 31), M=(0, 1, 3, 15))
    if key == "ca10":
        return StageSchedule(W=(7, 15, 31, 63), M=(0, 1, 3, 15))
    raise ConfigError(f"unknown access category {category!r}; "
                      "expected CA3/2 or CA1/0")


def apply_variant(schedule, variant):
    """Return the schedule with its deferral behaviour transformed.

    NO_DEFERRAL disables the deferral counter at every stage (M_i becomes
    INFINITE), ALWAYS_DEFER makes every overheard busy pair of slots advance
    the stage (M_i = 0), STANDARD is the identity. Windows and stage count
    are never touched.
    """
    variant = parse_variant(variant)
    if variant is Variant.STANDARD:
        return schedule
    if variant is Variant.NO_DEFERRAL:
        return replace(schedule, M=(INFINITE,) * schedule.m)
    return replace(schedule, M=(0,) * schedule.m)


def frame_durations(timings):
    """(T_s, T_c): channel time of a successful and of a collided frame.

    Both transmissions occupy the two priority slots, the frame itself and
    the full response exchange, so the two durations are equal by
    construction.
    """
    t_s = (timings.prs0 + timings.prs1 + timings.t_fra
           + timings.rifs + timings.t_res + timings.cifs)
    return t_s, t_s
