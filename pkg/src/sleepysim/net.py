"""Point-to-point synchronous message layer.

Delays are adversary-controllable within [1, delta] and default to delta.
A message's nominal deliver slot is send + delay; recipients asleep at that
slot pick it up at their next awake slot (never dropped). Unverifiable
envelopes are discarded at delivery and counted. The transport identity of
a message is its envelope signer; the physical sender (`via`) must be awake,
which is what lets a standard-mode adversary ship messages signed with
other corrupt nodes' keys.
"""

import hashlib
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

from .codec import encode
from .config import ParticipationSchedule
from .errors import AsleepRecipient, AsleepSender, DelayOutOfRange
from .oracles import OracleHub, signed_body_digest

BROADCAST = "*"


def payload_digest(payload) -> str:
    return hashlib.sha256(encode(payload)).hexdigest()[:16]


@dataclass
class Delivery:
    env: dict
    send_slot: int
    nominal_slot: int
    via: int

    @property
    def payload(self) -> dict:
        return self.env["payload"]

    @property
    def signer(self) -> int:
        return self.env["signer"]


class Network:
    def __init__(self, schedule: ParticipationSchedule, delta: int, hub: OracleHub, trace=None):
        self.schedule = schedule
        self.delta = delta
        self.hub = hub
        self.trace = trace
        self._pending: Dict[int, List[Delivery]] = {p: [] for p in range(schedule.n)}
        self._seen: Dict[int, set] = {p: set() for p in range(schedule.n)}
        self.dropped = 0

    def send(self, env: dict, recipients: Union[str, List[int]], t: int,
             via: Optional[int] = None, delay: Union[None, int, Dict[int, int]] = None) -> None:
        if via is None:
            via = env["signer"]
        if not self.schedule.awake_at(via, t):
            raise AsleepSender(f"node {via} asleep at slot {t}")
        if recipients == BROADCAST:
            recipients = [p for p in range(self.schedule.n) if p != via]
        digest = payload_digest(env["payload"])
        nbytes = len(encode(env))
        for r in recipients:
            d = delay.get(r, self.delta) if isinstance(delay, dict) else (delay if delay else self.delta)
            if not (1 <= d <= self.delta):
                raise DelayOutOfRange(f"delay {d} outside [1, {self.delta}]")
            self._pending[r].append(Delivery(env=env, send_slot=t, nominal_slot=t + d, via=via))
        if self.trace is not None:
            self.trace.record_send(t, via, env, digest, nbytes, sorted(recipients))

    def deliver(self, node: int, t: int) -> List[Delivery]:
        """Drain every message with nominal deliver slot <= t, verified and deduplicated."""
        if not self.schedule.awake_at(node, t):
            raise AsleepRecipient(f"node {node} asleep at slot {t}")
        pending = self._pending[node]
        ready = [d for d in pending if d.nominal_slot <= t]
        if ready:
            self._pending[node] = [d for d in pending if d.nominal_slot > t]
        out = []
        seen = self._seen[node]
        for d in ready:
            if not self.hub.verify_envelope(d.env):
                self.dropped += 1
                if self.trace is not None:
                    self.trace.record_drop(t, node, "bad-signature")
                continue
            key = (d.env["signer"], d.env["tag"])
            if key in seen:
                continue
            seen.add(key)
            out.append(d)
        out.sort(key=lambda d: (d.send_slot, d.signer, payload_digest(d.payload)))
        if self.trace is not None:
            for d in out:
                self.trace.record_deliver(t, node, payload_digest(d.payload), d.signer,
                                          d.send_slot, d.nominal_slot,
                                          signed_body_digest(d.env))
        return out

    def undelivered(self) -> int:
        return sum(len(v) for v in self._pending.values())
