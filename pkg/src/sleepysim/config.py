"""Scenario configuration and participation schedules.

A ScenarioConfig fully determines one execution: node count, synchrony
bound, simulation-window parameters (Tf, Tb), corruption bound, horizon,
awake/asleep schedule, adversary, protocol stack, and the master seed.
Schedules are stored as per-node bit rows over timeslots (bit t set =
awake at t) plus a static per-node corrupt flag.
"""

from dataclasses import dataclass, field
from typing import Any, List, Optional, Union

from .codec import encode, stable_seed
from .errors import InvalidConfig, ScheduleEmpty

INFINITE = "inf"

WindowParam = Union[int, str]

PROTOCOLS = ("base", "decaying_compiled", "fluctuating_compiled", "naive_longest")
ADVERSARY_MODES = ("external", "standard")
SCHEDULE_PATTERNS = ("consistent", "increasing", "decaying", "fully_fluctuating")

# Tunables with defaults; unknown keys are config errors.
PARAM_DEFAULTS = {
    "c_view": 4,            # view length = c_view * delta slots
    "c_sample": 1.0,        # VDF chain sampling constant
    "lambda_views": 16,     # epoch scale: alpha = 2 * view_len * lambda_views
    "zn_factor": 64,        # oracle query budget = zn_factor * n per node per slot
    "tf_factor": 10,        # decaying admissibility window Tf = tf_factor * alpha
    "pool_cap": 64,         # max payloads packed into one block
}


@dataclass
class ParticipationSchedule:
    """Awake/asleep matrix plus static corruption flags."""

    n: int
    horizon: int
    awake_rows: List[int]          # per node, bit t = awake at slot t
    corrupt: List[bool]

    def awake_at(self, node: int, t: int) -> bool:
        return bool((self.awake_rows[node] >> t) & 1)

    def awake_set(self, t: int) -> List[int]:
        return [p for p in range(self.n) if (self.awake_rows[p] >> t) & 1]

    def n_t(self, t: int) -> int:
        return sum((self.awake_rows[p] >> t) & 1 for p in range(self.n))

    def corrupt_set(self) -> List[int]:
        return [p for p in range(self.n) if self.corrupt[p]]

    def honest_set(self) -> List[int]:
        return [p for p in range(self.n) if not self.corrupt[p]]

    def awake_slots(self, node: int) -> List[int]:
        row = self.awake_rows[node]
        return [t for t in range(self.horizon) if (row >> t) & 1]

    def last_awake(self, node: int) -> Optional[int]:
        row = self.awake_rows[node]
        return row.bit_length() - 1 if row else None

    def validate(self) -> None:
        if len(self.awake_rows) != self.n or len(self.corrupt) != self.n:
            raise InvalidConfig("schedule", "row count does not match n")
        mask = (1 << self.horizon) - 1
        for p, row in enumerate(self.awake_rows):
            if row & ~mask:
                raise InvalidConfig("schedule", f"node {p} awake beyond horizon")
        for t in range(self.horizon):
            if not any((self.awake_rows[p] >> t) & 1 for p in range(self.n)):
                raise ScheduleEmpty(t)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "horizon": self.horizon,
            "awake_rows": [format(r, "x") for r in self.awake_rows],
            "corrupt": [bool(c) for c in self.corrupt],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParticipationSchedule":
        return cls(
            n=d["n"],
            horizon=d["horizon"],
            awake_rows=[int(r, 16) for r in d["awake_rows"]],
            corrupt=[bool(c) for c in d["corrupt"]],
        )

    @classmethod
    def from_matrix(cls, awake: List[List[bool]], corrupt: List[bool]) -> "ParticipationSchedule":
        n = len(awake)
        horizon = len(awake[0]) if n else 0
        rows = []
        for p in range(n):
            row = 0
            for t, a in enumerate(awake[p]):
                if a:
                    row |= 1 << t
            rows.append(row)
        return cls(n=n, horizon=horizon, awake_rows=rows, corrupt=list(corrupt))


def _clip_window(t: int, t_forward: WindowParam, t_backward: WindowParam, horizon: int):
    lo = 0 if t_forward == INFINITE else max(0, t - int(t_forward))
    hi = horizon - 1 if t_backward == INFINITE else min(horizon - 1, t + int(t_backward))
    return lo, hi


def corrupt_window_count(schedule: ParticipationSchedule, t: int,
                         t_forward: WindowParam, t_backward: WindowParam) -> int:
    """|union of corrupt awake sets over [t - Tf, t + Tb]|, clipped to the horizon."""
    lo, hi = _clip_window(t, t_forward, t_backward, schedule.horizon)
    if hi < lo:
        return 0
    window_mask = ((1 << (hi - lo + 1)) - 1) << lo
    return sum(
        1
        for p in range(schedule.n)
        if schedule.corrupt[p] and (schedule.awake_rows[p] & window_mask)
    )


@dataclass
class AdmissibilityReport:
    rho: float
    t_forward: WindowParam
    t_backward: WindowParam
    bad_slots: List[tuple]  # (t, f, n_t) where f >= rho * n_t

    @property
    def admissible(self) -> bool:
        return not self.bad_slots


def check_admissible(schedule: ParticipationSchedule, t_forward: WindowParam,
                     t_backward: WindowParam, rho: float) -> AdmissibilityReport:
    """List every slot where the corrupt-window bound f(t,Tf,Tb) < rho * n_t fails."""
    bad = []
    horizon = schedule.horizon
    # Per corrupt node, awake at tau counts against every t in [tau - Tb, tau + Tf].
    coverage = [0] * horizon
    for p in range(schedule.n):
        if not schedule.corrupt[p]:
            continue
        row = schedule.awake_rows[p]
        if not row:
            continue
        covered = 0
        for tau in range(horizon):
            if (row >> tau) & 1:
                lo = 0 if t_backward == INFINITE else max(0, tau - int(t_backward))
                hi = horizon - 1 if t_forward == INFINITE else min(horizon - 1, tau + int(t_forward))
                if hi >= lo:
                    covered |= ((1 << (hi - lo + 1)) - 1) << lo
        for t in range(horizon):
            if (covered >> t) & 1:
                coverage[t] += 1
    for t in range(horizon):
        f = coverage[t]
        nt = schedule.n_t(t)
        if f >= rho * nt:
            bad.append((t, f, nt))
    return AdmissibilityReport(rho=rho, t_forward=t_forward, t_backward=t_backward, bad_slots=bad)


@dataclass
class ScenarioConfig:
    """Complete description of one experiment."""

    n: int
    delta: int
    horizon: int
    rho: float = 0.5
    t_forward: WindowParam = INFINITE
    t_backward: WindowParam = INFINITE
    alpha: Optional[int] = None          # epoch length in slots; default 2 * view_len * lambda_views
    lambda_bits: int = 32
    seed: int = 0
    protocol: str = "base"
    adversary_mode: str = "external"
    adversary: dict = field(default_factory=lambda: {"name": "null", "params": {}})
    schedule: Any = None                 # ParticipationSchedule | {"pattern":..., "params":...} | dict
    env_inputs: List[list] = field(default_factory=list)   # [slot, node, payload]
    env_input_spec: Optional[dict] = None                  # {"period":..,"start":..,"count":..}
    expect_violations: bool = False
    capture_at: Optional[list] = None    # [(node, slot)] pi_step capture points
    params: dict = field(default_factory=dict)

    # ---- derived quantities ----

    def view_len(self) -> int:
        return self.param("c_view") * self.delta

    def epoch_len(self) -> int:
        if self.alpha is not None:
            return self.alpha
        return 2 * self.view_len() * self.param("lambda_views")

    def stateless_window(self) -> int:
        if self.protocol == "fluctuating_compiled" and self.t_backward != INFINITE:
            return int(self.t_backward)
        return 2 * self.view_len()

    def param(self, key: str):
        return self.params.get(key, PARAM_DEFAULTS[key])

    def query_budget(self) -> int:
        return self.param("zn_factor") * self.n

    # ---- validation ----

    def validate(self) -> None:
        if self.n < 1:
            raise InvalidConfig("n", "must be >= 1")
        if self.delta < 1:
            raise InvalidConfig("delta", "must be >= 1")
        if self.horizon < 0:
            raise InvalidConfig("horizon", "must be >= 0")
        if not (0.0 < self.rho < 1.0):
            raise InvalidConfig("rho", "must lie in (0, 1)")
        if self.lambda_bits < 8 or self.lambda_bits % 8:
            raise InvalidConfig("lambda_bits", "must be a positive multiple of 8")
        if not (0 <= self.seed < 2 ** 64):
            raise InvalidConfig("seed", "must fit in 64 bits")
        if self.protocol not in PROTOCOLS:
            raise InvalidConfig("protocol", f"unknown protocol {self.protocol!r}")
        if self.adversary_mode not in ADVERSARY_MODES:
            raise InvalidConfig("adversary_mode", f"unknown mode {self.adversary_mode!r}")
        for w, name in ((self.t_forward, "t_forward"), (self.t_backward, "t_backward")):
            if w != INFINITE and (not isinstance(w, int) or w < 0):
                raise InvalidConfig(name, "must be a non-negative integer or 'inf'")
        if self.epoch_len() < 1:
            raise InvalidConfig("alpha", "must be >= 1")
        for key in self.params:
            if key not in PARAM_DEFAULTS:
                raise InvalidConfig("params", f"unknown parameter {key!r}")
        for item in self.env_inputs:
            if len(item) != 3:
                raise InvalidConfig("env_inputs", "entries must be [slot, node, payload]")
            t, p, payload = item
            if not (0 <= t < max(self.horizon, 1)):
                raise InvalidConfig("env_inputs", f"slot {t} outside horizon")
            if not (0 <= p < self.n):
                raise InvalidConfig("env_inputs", f"node {p} outside [0, n)")
            if not isinstance(payload, str):
                raise InvalidConfig("env_inputs", "payload must be a string")
        if isinstance(self.schedule, ParticipationSchedule):
            self.schedule.validate()

    # ---- serialization ----

    _FIELDS = (
        "n", "delta", "horizon", "rho", "t_forward", "t_backward", "alpha",
        "lambda_bits", "seed", "protocol", "adversary_mode", "adversary",
        "schedule", "env_inputs", "env_input_spec", "expect_violations",
        "params",
    )

    def to_dict(self) -> dict:
        d = {}
        for name in self._FIELDS:
            value = getattr(self, name)
            if name == "schedule" and isinstance(value, ParticipationSchedule):
                value = value.to_dict()
            d[name] = value
        d["version"] = 1
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        version = d.pop("version", None)
        if version != 1:
            raise InvalidConfig("version", f"expected 1, got {version!r}")
        unknown = set(d) - set(cls._FIELDS) - {"capture_at"}
        if unknown:
            raise InvalidConfig(sorted(unknown)[0], "unknown config field")
        kwargs = {}
        for name in cls._FIELDS:
            if name in d:
                kwargs[name] = d[name]
        cfg = cls(**kwargs)
        if isinstance(cfg.schedule, dict) and "awake_rows" in cfg.schedule:
            cfg.schedule = ParticipationSchedule.from_dict(cfg.schedule)
        cfg.validate()
        return cfg

    def canonical_bytes(self) -> bytes:
        return encode(self.to_dict())

    def derive_seed(self, *scope) -> int:
        return stable_seed(self.seed, *scope)
