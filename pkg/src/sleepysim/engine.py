"""Deterministic lockstep execution engine.

One execution is a single logical thread: per timeslot the engine resets
oracle slot state, hands out environment inputs (buffering for sleepers),
lets the adversary act on the strictly-earlier transcript, then steps every
awake honest node in id order. All randomness derives from the scenario
seed, so identical configs replay to byte-identical serialized traces.
"""

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .adversaries import AdversaryCtx, gen_schedule, make_strategy
from .blocks import BlockStore
from .codec import config_digest, decode, encode, read_records, stable_seed, write_record
from .compilers import STACK_CLASSES
from .config import ParticipationSchedule, ScenarioConfig
from .errors import CorruptTrace, InvalidConfig
from .net import Network
from .oracles import OracleHub
from .protocol import PiParams
from .wakeness import LinkRegistry

TRACE_VERSION = "sleepysim-trace v1"


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

@dataclass
class Trace:
    meta: dict = field(default_factory=dict)
    sends: List[list] = field(default_factory=list)       # [t, via, signer, kind, digest, bytes, recipients, claimed]
    delivers: List[list] = field(default_factory=list)    # [t, node, digest, signer, send_slot, nominal]
    drops: List[list] = field(default_factory=list)
    env_events: List[list] = field(default_factory=list)  # [slot, node, payload, handed]
    log_events: List[list] = field(default_factory=list)  # [t, node, mode, entries, chain_ids]
    gpe_events: List[list] = field(default_factory=list)  # [t, node, view, block_id, grade]
    bit_events: List[list] = field(default_factory=list)  # [t, holder, owner, slot_index]
    counted_events: List[list] = field(default_factory=list)  # [t, node, senders]
    decided_blocks: List[list] = field(default_factory=list)  # [t, node, block_id, block]
    link_first_sent: Dict[str, int] = field(default_factory=dict)
    oracle_log: List[list] = field(default_factory=list)
    policy_events: List[list] = field(default_factory=list)
    captures: List[dict] = field(default_factory=list)

    def record_send(self, t, via, env, digest, nbytes, recipients):
        payload = env["payload"]
        kind = payload.get("kind", "?")
        self.sends.append([t, via, env["signer"], kind, digest, nbytes, recipients,
                           env["claimed_slot"]])
        if kind == "links":
            for link in payload.get("links", []):
                value = link.get("value")
                if isinstance(value, str) and value not in self.link_first_sent:
                    self.link_first_sent[value] = t

    def record_deliver(self, t, node, digest, signer, send_slot, nominal, body_digest):
        self.delivers.append([t, node, digest, signer, send_slot, nominal, body_digest])

    def record_drop(self, t, node, reason):
        self.drops.append([t, node, reason])

    # -- persistence --

    def _chunks(self) -> List[Tuple[str, object]]:
        return [
            ("meta", self.meta),
            ("sends", self.sends),
            ("delivers", self.delivers),
            ("drops", self.drops),
            ("env", self.env_events),
            ("log", self.log_events),
            ("gpe", self.gpe_events),
            ("bits", self.bit_events),
            ("counted", self.counted_events),
            ("decided", self.decided_blocks),
            ("link_sent", sorted(self.link_first_sent.items())),
            ("oracle", self.oracle_log),
            ("policy", self.policy_events),
            ("captures", self.captures),
        ]

    def serialize(self) -> bytes:
        header = (f"{TRACE_VERSION} config={self.meta.get('config_digest', '?')} "
                  f"seed={self.meta.get('seed', '?')}\n").encode()
        import io
        buf = io.BytesIO()
        buf.write(header)
        for name, chunk in self._chunks():
            write_record(buf, [name, chunk])
        return buf.getvalue()

    def export_lines(self) -> str:
        return "\n".join(encode([name, chunk]).decode() for name, chunk in self._chunks())

    @classmethod
    def deserialize(cls, blob: bytes) -> "Trace":
        import io
        buf = io.BytesIO(blob)
        header = buf.readline().decode(errors="replace")
        if not header.startswith(TRACE_VERSION):
            raise CorruptTrace("bad trace header")
        trace = cls()
        names = {name for name, _ in trace._chunks()}
        try:
            for record in read_records(buf):
                name, chunk = record
                if name not in names:
                    raise CorruptTrace(f"unknown chunk {name!r}")
                if name == "link_sent":
                    trace.link_first_sent = {k: v for k, v in chunk}
                elif name == "meta":
                    trace.meta = chunk
                else:
                    attr = {"env": "env_events", "log": "log_events", "gpe": "gpe_events",
                            "bits": "bit_events", "counted": "counted_events",
                            "decided": "decided_blocks", "oracle": "oracle_log",
                            "policy": "policy_events"}.get(name, name)
                    setattr(trace, attr, chunk)
        except (ValueError, TypeError) as exc:
            raise CorruptTrace(str(exc))
        if not trace.meta:
            raise CorruptTrace("missing meta chunk")
        return trace


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------

def resolve_schedule(config: ScenarioConfig) -> ParticipationSchedule:
    sched = config.schedule
    if isinstance(sched, ParticipationSchedule):
        sched.validate()
        return sched
    if isinstance(sched, dict) and "pattern" in sched:
        params = dict(sched.get("params", {}))
        params.setdefault("n", config.n)
        params.setdefault("horizon", config.horizon)
        out = gen_schedule(sched["pattern"], params, config.derive_seed("schedule"))
        return out
    raise InvalidConfig("schedule", "missing or unrecognized schedule")


def resolve_env_inputs(config: ScenarioConfig,
                       schedule: ParticipationSchedule) -> Dict[int, List[Tuple[int, str]]]:
    """Full environment schedule: explicit inputs plus generated ones."""
    by_slot: Dict[int, List[Tuple[int, str]]] = {}
    for t, node, payload in config.env_inputs:
        by_slot.setdefault(t, []).append((node, payload))
    spec = config.env_input_spec
    if spec:
        period = spec.get("period", config.view_len())
        start = spec.get("start", 0)
        count = spec.get("count", 0)
        prefix = spec.get("prefix", "tx")
        honest = schedule.honest_set()
        for i in range(count):
            slot = start + i * period
            if slot >= config.horizon:
                break
            rng = random.Random(stable_seed(config.seed, "env", i))
            candidates = [p for p in honest if schedule.awake_at(p, slot)]
            if not candidates:
                candidates = honest
            node = rng.choice(candidates)
            by_slot.setdefault(slot, []).append((node, f"{prefix}{i:04d}"))
    for slot in by_slot:
        by_slot[slot].sort(key=lambda x: (x[0], x[1]))
    return by_slot


def environment_deliver(config: ScenarioConfig, t: int,
                        schedule: Optional[ParticipationSchedule] = None) -> List[Tuple[int, str]]:
    """Inputs the environment hands out at slot t, in configured order."""
    if schedule is None:
        schedule = resolve_schedule(config)
    return resolve_env_inputs(config, schedule).get(t, [])


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

class Execution:
    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.config = config
        self.schedule = resolve_schedule(config)
        if self.schedule.n != config.n or self.schedule.horizon != config.horizon:
            raise InvalidConfig("schedule", "schedule shape does not match n/horizon")
        self.trace = Trace()
        corrupt = set(self.schedule.corrupt_set())
        self.hub = OracleHub(
            master_seed=config.seed,
            lambda_bits=config.lambda_bits,
            mode=config.adversary_mode,
            corrupt_set=corrupt,
            query_budget=config.query_budget(),
            awake_fn=self.schedule.awake_at,
        )
        self.net = Network(self.schedule, config.delta, self.hub, trace=self.trace)
        self.params = PiParams(
            delta=config.delta,
            view_len=config.view_len(),
            views_per_epoch=max(1, config.epoch_len() // config.view_len()),
            pool_cap=config.param("pool_cap"),
        )
        self.registry = LinkRegistry(self.hub)
        stack_cls = STACK_CLASSES[config.protocol]
        self.stacks = {}
        for p in self.schedule.honest_set():
            store = BlockStore(self.hub)
            self.stacks[p] = stack_cls(p, self.hub, store, self.params, config,
                                       registry=self.registry)
        self.strategy = make_strategy(config.adversary)
        self.env_schedule = resolve_env_inputs(config, self.schedule)
        self.pending_env: Dict[int, List[Tuple[int, str]]] = {p: [] for p in range(config.n)}
        self._last_log: Dict[int, list] = {p: [] for p in self.stacks}
        self._last_chain: Dict[int, list] = {
            p: [self.stacks[p].state.store.genesis_id] for p in self.stacks}
        self.capture_at = set(map(tuple, config.capture_at or []))

    def run(self) -> Trace:
        config = self.config
        trace = self.trace
        trace.meta = {
            "config": config.to_dict(),
            "config_digest": config_digest(config.to_dict()),
            "seed": config.seed,
            "schedule": self.schedule.to_dict(),
            "protocol": config.protocol,
            "mode": config.adversary_mode,
            "delta": config.delta,
            "alpha": config.epoch_len(),
            "view_len": config.view_len(),
            "lambda_bits": config.lambda_bits,
            "genesis": BlockStore(self.hub).genesis_id,
        }
        for t in range(config.horizon):
            self.hub.begin_slot(t)
            self._hand_env(t)
            self._adversary_slot(t)
            for p in sorted(self.stacks):
                if not self.schedule.awake_at(p, t):
                    continue
                self._honest_step(p, t)
        self._finish()
        return trace

    # -- per-slot pieces --

    def _hand_env(self, t: int) -> None:
        for node, payload in self.env_schedule.get(t, []):
            self.pending_env[node].append((t, payload))

    def _take_env(self, node: int, t: int) -> List[str]:
        pending = self.pending_env[node]
        if not pending:
            return []
        self.pending_env[node] = []
        out = []
        for slot, payload in pending:
            self.trace.env_events.append([slot, node, payload, t])
            out.append(payload)
        return out

    def _adversary_slot(self, t: int) -> None:
        ctx = AdversaryCtx(t, self.config, self.schedule, self.hub, self.net,
                           registry=self.registry)
        for p in ctx.corrupt:
            if self.schedule.awake_at(p, t):
                ctx.inboxes[p] = self.net.deliver(p, t)
                ctx.env_inputs[p] = self._take_env(p, t)
        self.strategy.on_slot(ctx)

    def _honest_step(self, node: int, t: int) -> None:
        deliveries = self.net.deliver(node, t)
        env_inputs = self._take_env(node, t)
        capture = (node, t) in self.capture_at
        stack = self.stacks[node]
        out = stack.step(t, deliveries, env_inputs, capture=capture)
        for env in out.envelopes:
            delay = self.strategy.assign_delay(env, node, t)
            self.net.send(env, "*", t, via=node, delay=delay)
        result = out.result
        if result is not None and result.gpe is not None:
            view, bid, grade = result.gpe
            self.trace.gpe_events.append([t, node, view, bid, grade])
        if result is not None:
            for bid, _ in result.decisions:
                self.trace.decided_blocks.append([t, node, bid, stack.state.store.get(bid)])
        state = stack.state
        last_log = self._last_log[node]
        last_chain = self._last_chain[node]
        if state.log != last_log or state.chain != last_chain:
            extends = (state.log[: len(last_log)] == last_log
                       and state.chain[: len(last_chain)] == last_chain)
            if extends:
                self.trace.log_events.append(
                    [t, node, "delta", state.log[len(last_log):], state.chain[len(last_chain):]])
            else:
                self.trace.log_events.append([t, node, "full", list(state.log), list(state.chain)])
            self._last_log[node] = list(state.log)
            self._last_chain[node] = list(state.chain)
        if out.capture is not None:
            self.trace.captures.append(out.capture)

    def _finish(self) -> None:
        trace = self.trace
        bit_events = []
        for p in sorted(self.stacks):
            for (t, owner, j) in self.stacks[p].bit_events:
                bit_events.append([t, p, owner, j])
        bit_events.sort()
        trace.bit_events = bit_events
        counted = []
        for p in sorted(self.stacks):
            for (t, node, senders) in self.stacks[p].counted_events:
                counted.append([t, node, list(senders)])
        counted.sort()
        trace.counted_events = counted
        trace.oracle_log = [list(e) for e in self.hub.query_log]
        trace.policy_events = [list(e) for e in self.hub.policy_events]
        trace.meta["links"] = [[e.value, e.depth, e.prover] for e in self.registry.links]
        trace.meta["dropped"] = self.net.dropped
        trace.meta["undelivered"] = self.net.undelivered()
        for node, payloads in sorted(self.pending_env.items()):
            for s, payload in payloads:
                trace.env_events.append([s, node, payload, None])
        trace.env_events.sort(key=lambda e: (e[0], e[1], e[2]))


def run_execution(config: ScenarioConfig) -> Trace:
    """Run one scenario to completion and return its trace."""
    return Execution(config).run()


def gpe_round(n: int, corrupt: List[int], seed: int, delta: int = 1,
              adversary: Optional[dict] = None,
              inputs: Optional[Dict[int, str]] = None):
    """One-view graded proposal election harness: all nodes awake for a single
    view, per-node env payloads as inputs. Returns (outcomes, trace) where
    outcomes maps each honest node to its (block id, grade)."""
    c_view = 4
    horizon = c_view * delta
    corrupt_flags = [p in corrupt for p in range(n)]
    schedule = ParticipationSchedule(
        n=n, horizon=horizon,
        awake_rows=[(1 << horizon) - 1] * n,
        corrupt=corrupt_flags,
    )
    honest = [p for p in range(n) if p not in corrupt]
    env = []
    for p in honest:
        payload = inputs.get(p) if inputs else f"input-p{p}"
        env.append([0, p, payload])
    config = ScenarioConfig(
        n=n, delta=delta, horizon=horizon, seed=seed,
        protocol="base", adversary_mode="external",
        adversary=adversary or {"name": "null", "params": {}},
        schedule=schedule, env_inputs=env,
        params={"lambda_views": 1},
    )
    trace = run_execution(config)
    outcomes: Dict[int, Tuple[Optional[str], int]] = {}
    for t, node, view, bid, grade in trace.gpe_events:
        if view == 1:
            outcomes[node] = (bid, grade)
    return outcomes, trace
