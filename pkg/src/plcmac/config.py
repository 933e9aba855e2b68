"""Experiment configuration: INI-style files describing sweeps and engines.

The format is deliberately flat (sections of key=value pairs) so configs
diff cleanly. Every key has a CLI flag counterpart for one-off runs.
"""

import configparser
import enum
import math
import os
from dataclasses import dataclass, field

from .domain import (ConfigError, SATURATED, Scenario, Variant, apply_variant,
                     parse_variant, preset_schedule, HOMEPLUG_1_0)
from .solver import KernelMode, parse_kernel_mode

ENV_OUT_DIR = "PLCMAC_OUT"

_SECTIONS = {
    "scenario": {"n", "category", "variant", "lambda", "queue_cap", "preload"},
    "engine": {"mode"},
    "solver": {"init_I", "kernel", "tolerance", "table_step"},
    "sim": {"duration_s", "warmup_s", "seeds"},
    "output": {"dir"},
}


class Engine(enum.Enum):
    ANALYSIS = "analysis"
    SIM = "sim"
    BOTH = "both"


def parse_engine(text):
    try:
        return Engine(text.strip().lower())
    except ValueError:
        raise ConfigError(f"unknown engine '{text}' "
                          f"(expected analysis, sim or both)") from None


def default_out_dir():
    """Output directory default; the environment variable only sets this."""
    return os.environ.get(ENV_OUT_DIR, "results")


def _sweep_values(text, convert, where):
    """Parse '1,2,3', '0.5:4:0.5' (start:stop:step, stop inclusive) or a
    single token. 'saturated' maps to the saturated arrival marker."""
    out = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token.lower() == "saturated":
            out.append(SATURATED)
        elif ":" in token:
            parts = token.split(":")
            if len(parts) != 3:
                raise ConfigError(f"{where}: range needs start:stop:step, "
                                  f"got '{token}'")
            try:
                start, stop, step = (float(p) for p in parts)
            except ValueError:
                raise ConfigError(f"{where}: bad range '{token}'") from None
            if step <= 0 or stop < start:
                raise ConfigError(f"{where}: empty range '{token}'")
            count = int((stop - start) / step + 1e-9) + 1
            out.extend(convert(start + k * step, where)
                       for k in range(count))
        else:
            out.append(convert(token, where))
    if not out:
        raise ConfigError(f"{where}: empty sweep list")
    return tuple(out)


def _to_float(v, where):
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got '{v}'") from None


def _to_int(v, where):
    f = _to_float(v, where)
    if f != int(f):
        raise ConfigError(f"{where}: expected an integer, got '{v}'")
    return int(f)


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment: scenario sweep, engines, solver/sim knobs."""

    n_values: tuple = (1,)
    category: str = "CA3/2"
    variant: Variant = Variant.STANDARD
    lam_values: tuple = (SATURATED,)
    queue_cap: int = 1000
    preload: int = 0
    engine: Engine = Engine.ANALYSIS
    init_I: tuple = (0.0, 1000.0)
    kernel_mode: KernelMode = KernelMode.EXACT
    tolerance: float = 1e-9
    table_step: float = 1e-4
    duration_s: float = 2000.0
    warmup_s: float = 0.0
    seeds: tuple = (1,)
    out_dir: str = field(default_factory=default_out_dir)

    def __post_init__(self):
        if not self.n_values:
            raise ConfigError("[scenario] n: empty sweep list")
        for n in self.n_values:
            if n < 1:
                raise ConfigError(f"[scenario] n: need n >= 1, got {n}")
        if not self.lam_values:
            raise ConfigError("[scenario] lambda: empty sweep list")
        for lam in self.lam_values:
            if lam is not SATURATED and (not math.isfinite(lam) or lam < 0):
                raise ConfigError(f"[scenario] lambda: bad rate {lam}")
        if not self.init_I:
            raise ConfigError("[solver] init_I: empty list")
        if not self.seeds:
            raise ConfigError("[sim] seeds: empty list")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("[sim] seeds: seeds must be distinct")
        if self.queue_cap < 1:
            raise ConfigError("[scenario] queue_cap: need >= 1")
        if not 0 <= self.preload <= self.queue_cap:
            raise ConfigError("[scenario] preload: need 0 <= preload <= cap")
        if not self.duration_s > self.warmup_s >= 0:
            raise ConfigError("[sim] need duration_s > warmup_s >= 0")
        if not 0 < self.tolerance < 1:
            raise ConfigError("[solver] tolerance: need 0 < tol < 1")
        preset_schedule(self.category)  # raises on unknown category

    @property
    def schedule(self):
        return apply_variant(preset_schedule(self.category), self.variant)

    def scenario(self, n, lam):
        return Scenario(n=n, schedule=self.schedule, timings=HOMEPLUG_1_0,
                        lam=lam, queue_cap=self.queue_cap,
                        preload=self.preload)

    def points(self):
        """Cross product of the sweeps, in file order."""
        return [(n, lam) for n in self.n_values for lam in self.lam_values]


def load_config(path):
    """Parse and validate an experiment file. Raises ConfigError with the
    offending section/key (or parser line) on any problem."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (init_I)
    try:
        with open(path) as fh:
            parser.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None

    for sect in parser.sections():
        if sect not in _SECTIONS:
            raise ConfigError(f"[{sect}]: unknown section")
        for key in parser[sect]:
            if key not in _SECTIONS[sect]:
                raise ConfigError(f"[{sect}] {key}: unknown key")

    def get(sect, key, default=None):
        return parser.get(sect, key, fallback=default)

    kwargs = {}
    if get("scenario", "n") is not None:
        kwargs["n_values"] = _sweep_values(get("scenario", "n"), _to_int,
                                           "[scenario] n")
    if get("scenario", "category") is not None:
        kwargs["category"] = get("scenario", "category")
    if get("scenario", "variant") is not None:
        kwargs["variant"] = parse_variant(get("scenario", "variant"))
    if get("scenario", "lambda") is not None:
        kwargs["lam_values"] = _sweep_values(get("scenario", "lambda"),
                                             _to_float, "[scenario] lambda")
    if get("scenario", "queue_cap") is not None:
        kwargs["queue_cap"] = _to_int(get("scenario", "queue_cap"),
                                      "[scenario] queue_cap")
    if get("scenario", "preload") is not None:
        kwargs["preload"] = _to_int(get("scenario", "preload"),
                                    "[scenario] preload")
    if get("engine", "mode") is not None:
        kwargs["engine"] = parse_engine(get("engine", "mode"))
    if get("solver", "init_I") is not None:
        kwargs["init_I"] = _sweep_values(get("solver", "init_I"), _to_float,
                                         "[solver] init_I")
    if get("solver", "kernel") is not None:
        kwargs["kernel_mode"] = parse_kernel_mode(get("solver", "kernel"))
    if get("solver", "tolerance") is not None:
        kwargs["tolerance"] = _to_float(get("solver", "tolerance"),
                                        "[solver] tolerance")
    if get("solver", "table_step") is not None:
        kwargs["table_step"] = _to_float(get("solver", "table_step"),
                                         "[solver] table_step")
    if get("sim", "duration_s") is not None:
        kwargs["duration_s"] = _to_float(get("sim", "duration_s"),
                                         "[sim] duration_s")
    if get("sim", "warmup_s") is not None:
        kwargs["warmup_s"] = _to_float(get("sim", "warmup_s"),
                                       "[sim] warmup_s")
    if get("sim", "seeds") is not None:
        kwargs["seeds"] = _sweep_values(get("sim", "seeds"), _to_int,
                                        "[sim] seeds")
    if get("output", "dir") is not None:
        kwargs["out_dir"] = get("output", "dir")

    return ExperimentConfig(**kwargs)
