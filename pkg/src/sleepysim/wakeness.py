"""Wakeness vectors backed by verifiable-delay chains.

Every awake node queries the delay oracle once per slot on a batch of chain
tips: its own freshest self-proven value plus a random sample of other
provers' fresh tips. The next slot it signs and broadcasts the outputs as
chain links. A verified depth-j link signed by prover q demonstrates that q
was awake at some slot >= j (the output value cannot exist before slot j,
and only q can sign it under an external adversary), so holders set q's
wakeness bit at index j. The sampled cross-extension is what lets a node's
awakeness become provable through other nodes' chains; without it a
selectively delivered link leaves later holders unable to verify the chain.

The delay function is unkeyed, so two nodes extending the same tip produce
the same output value with distinct signed evidence: links are identified
by (value, prover) pairs over a value-level ancestry DAG. Verification is
cached per execution; each node separately tracks which links it received
and which are ancestry-complete for it, because the second depth-validity
condition is about the holder's own received evidence.
"""

import math
import random
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .codec import stable_seed
from .oracles import OracleHub

GENESIS_TAG = "genesis-vdf"


def genesis_value(hub: OracleHub) -> str:
    return hub.hash_bytes(GENESIS_TAG.encode())


def sample_size(c_sample: float, n: int, t: int) -> int:
    return max(1, math.ceil(c_sample * math.log(n * (t + 2)) ** 2))


@dataclass
class ValueEntry:
    vidx: int
    value: str
    parent_vidx: int
    depth: int


@dataclass
class LinkEntry:
    pidx: int
    vidx: int
    value: str
    depth: int
    prover: int
    evidence: dict
    proof: str


class LinkRegistry:
    """Per-execution registry of globally verified chain links.

    Values form a DAG rooted at the genesis value; first-writer-wins on a
    value's (parent, depth), so a lambda-bit output collision that would
    redefine an existing value is ignored deterministically. Each (value,
    prover) pair is one link with its own signed evidence.
    """

    def __init__(self, hub: OracleHub):
        self.hub = hub
        root = genesis_value(hub)
        self.values: List[ValueEntry] = [ValueEntry(0, root, -1, 0)]
        self.by_value: Dict[str, int] = {root: 0}
        self.links: List[LinkEntry] = []
        self.by_pair: Dict[Tuple[str, int], int] = {}
        self._orphans: Dict[str, List[dict]] = {}

    def register(self, link: dict) -> Optional[int]:
        """Verify and store one wire link; returns its pair index or None."""
        value, inp, proof = link.get("value"), link.get("input"), link.get("proof")
        evidence = link.get("evidence")
        if not (isinstance(value, str) and isinstance(inp, str) and isinstance(evidence, dict)):
            return None
        prover = evidence.get("signer")
        pidx = self.by_pair.get((value, prover))
        if pidx is not None:
            return pidx
        if not isinstance(prover, int) or not self.hub.vdf_verify(prover, inp, value, proof or ""):
            return None
        if not self.hub.verify_envelope(evidence):
            return None
        ev = evidence.get("payload", {})
        if ev.get("kind") != "vdf_evidence" or ev.get("input") != inp or ev.get("value") != value:
            return None
        parent_vidx = self.by_value.get(inp)
        if parent_vidx is None:
            self._orphans.setdefault(inp, []).append(dict(link))
            return None
        vidx = self.by_value.get(value)
        if vidx is None:
            vidx = len(self.values)
            self.values.append(ValueEntry(vidx, value, parent_vidx,
                                          self.values[parent_vidx].depth + 1))
            self.by_value[value] = vidx
            for orphan in self._orphans.pop(value, []):
                self.register(orphan)
        else:
            if self.values[vidx].parent_vidx != parent_vidx:
                return None  # output collision redefining ancestry: ignore
        entry = LinkEntry(
            pidx=len(self.links), vidx=vidx, value=value,
            depth=self.values[vidx].depth, prover=prover,
            evidence=evidence, proof=proof,
        )
        self.links.append(entry)
        self.by_pair[(value, prover)] = entry.pidx
        return entry.pidx

    def depth_value(self, value: str, prover: Optional[int] = None) -> Optional["DepthValue"]:
        """Materialize a full evidence chain for a registered value, using the
        requested prover for the last link and first-registered evidence for
        the rest."""
        vidx = self.by_value.get(value)
        if vidx is None:
            return None
        chain_vidx = []
        cur = vidx
        while cur != 0:
            chain_vidx.append(cur)
            cur = self.values[cur].parent_vidx
        chain_vidx.reverse()
        first_by_vidx: Dict[int, LinkEntry] = {}
        for link in self.links:
            if link.vidx not in first_by_vidx:
                first_by_vidx[link.vidx] = link
        links = []
        for i, v in enumerate(chain_vidx):
            if i == len(chain_vidx) - 1 and prover is not None:
                pidx = self.by_pair.get((value, prover))
                entry = self.links[pidx] if pidx is not None else None
            else:
                entry = first_by_vidx.get(v)
            if entry is None:
                return None
            links.append({
                "input": self.values[self.values[v].parent_vidx].value,
                "value": entry.value,
                "proof": entry.proof,
                "evidence": entry.evidence,
            })
        last = links[-1]["evidence"]["signer"] if links else None
        return DepthValue(value=value, depth=self.values[vidx].depth,
                          prover=last, links=links)


@dataclass
class DepthValue:
    """A chain value together with its full link evidence."""

    value: str
    depth: int
    prover: Optional[int]
    links: List[dict]


def verify_depth_value(candidate: DepthValue, hub: OracleHub,
                       received: Optional[set] = None) -> bool:
    """Check both depth-validity conditions from scratch: the delay chain
    from the genesis value, and per-link signed oracle evidence. When
    `received` is given (the holder's set of received (value, prover) pairs),
    every link must also have reached the holder."""
    if candidate.depth != len(candidate.links):
        return False
    expected_input = genesis_value(hub)
    prover = None
    for link in candidate.links:
        if link.get("input") != expected_input:
            return False
        value, proof, evidence = link.get("value"), link.get("proof"), link.get("evidence")
        if not isinstance(evidence, dict) or not hub.verify_envelope(evidence):
            return False
        prover = evidence["signer"]
        if not hub.vdf_verify(prover, link["input"], value or "", proof or ""):
            return False
        ev = evidence.get("payload", {})
        if ev.get("kind") != "vdf_evidence" or ev.get("input") != link["input"] or ev.get("value") != value:
            return False
        if received is not None and (value, prover) not in received:
            return False
        expected_input = value
    if candidate.links and expected_input != candidate.value:
        return False
    if not candidate.links and candidate.value != genesis_value(hub):
        return False
    return candidate.depth == 0 or prover == candidate.prover


class WakenessTracker:
    """One node's chain receipts, wakeness bits, and per-slot extension.

    A verified depth-j link signed by q proves q awake at some slot >= j, so
    the owner's vector is the filled interval [0, max proven depth]; only the
    per-owner maximum is stored and every increase is a recorded claim."""

    def __init__(self, node: int, n: int, registry: LinkRegistry, hub: OracleHub,
                 master_seed: int, c_sample: float, delta: int, horizon: int):
        self.node = node
        self.n = n
        self.registry = registry
        self.hub = hub
        self.master_seed = master_seed
        self.c_sample = c_sample
        self.delta = delta
        self.horizon = horizon
        self.received_pairs = 0            # bitmask over registry link indices
        self.verified_values = 1           # bitmask over value indices (genesis held)
        self._pending: List[int] = []      # received pair indices awaiting ancestry
        self._unmatched: List[dict] = []   # received links not yet registered
        self.maxdepth: Dict[int, int] = {}  # owner -> deepest proven awakeness
        self.freshest: Dict[int, Tuple[int, str]] = {}  # prover -> (depth, value)
        self.own_tip: Tuple[int, str] = (0, genesis_value(hub))
        self.bit_events: List[tuple] = []  # (t, owner, new max depth)

    # ---- receipt side ----

    def ingest_links(self, payload: dict, t: int) -> None:
        links = payload.get("links")
        if not isinstance(links, list):
            return
        progressed = False
        for link in links:
            pidx = self.registry.register(link)
            if pidx is None:
                self._unmatched.append(link)
                continue
            if not (self.received_pairs >> pidx) & 1:
                self.received_pairs |= 1 << pidx
                self._pending.append(pidx)
                progressed = True
        if progressed or self._unmatched:
            self._settle(t)

    def _settle(self, t: int) -> None:
        if self._unmatched:
            still = []
            for link in self._unmatched:
                pidx = self.registry.register(link)
                if pidx is None:
                    still.append(link)
                elif not (self.received_pairs >> pidx) & 1:
                    self.received_pairs |= 1 << pidx
                    self._pending.append(pidx)
            self._unmatched = still
        moved = True
        while moved:
            moved = False
            rest = []
            for pidx in self._pending:
                entry = self.registry.links[pidx]
                parent_vidx = self.registry.values[entry.vidx].parent_vidx
                if (self.verified_values >> parent_vidx) & 1:
                    self.verified_values |= 1 << entry.vidx
                    self._note_verified(entry, t)
                    moved = True
                else:
                    rest.append(pidx)
            self._pending = rest

    def _note_verified(self, entry: LinkEntry, t: int) -> None:
        owner, depth = entry.prover, entry.depth
        if depth > self.maxdepth.get(owner, -1):
            self.maxdepth[owner] = depth
            self.bit_events.append((t, owner, depth))
        cur = self.freshest.get(owner)
        if cur is None or depth > cur[0]:
            self.freshest[owner] = (depth, entry.value)
        if owner == self.node and depth > self.own_tip[0]:
            self.own_tip = (depth, entry.value)

    # ---- vector queries ----

    def deemed_awake_set(self, lo: int, hi: int) -> List[int]:
        """Owners with some wakeness bit in [lo, hi]; bits fill [0, maxdepth]."""
        if hi < lo:
            return []
        lo = max(lo, 0)
        return sorted(o for o, md in self.maxdepth.items() if md >= lo)

    def vector_of(self, owner: int) -> int:
        md = self.maxdepth.get(owner)
        if md is None:
            return 0
        md = min(md, self.horizon - 1)
        return (1 << (md + 1)) - 1

    def holds_pair(self, value: str, prover: int) -> bool:
        pidx = self.registry.by_pair.get((value, prover))
        if pidx is None or not (self.received_pairs >> pidx) & 1:
            return False
        vidx = self.registry.links[pidx].vidx
        return bool((self.verified_values >> vidx) & 1)

    # ---- extension side ----

    def extend(self, t: int) -> List[dict]:
        """Collect matured oracle responses, sign and publish them as links,
        then issue this slot's batched query on sampled fresh tips."""
        payloads = []
        responses = self.hub.take_vdf_responses(self.node, t)
        if responses:
            links = []
            for out in responses:
                ev_payload = {
                    "kind": "vdf_evidence",
                    "input": out.input,
                    "value": out.value,
                    "proof": out.proof,
                    "slot": t,
                }
                evidence = self.hub.sign(self.node, self.node, ev_payload, t)
                link = {"input": out.input, "value": out.value, "proof": out.proof,
                        "evidence": evidence}
                links.append(link)
                pidx = self.registry.register(link)
                if pidx is not None and not (self.received_pairs >> pidx) & 1:
                    self.received_pairs |= 1 << pidx
                    self._pending.append(pidx)
            self._settle(t)
            payloads.append({"kind": "links", "slot": t, "links": links})
        # Extend the freshest chains held: provers whose tips are within 2*delta
        # of the deepest tip received. Relative freshness keeps cross-extension
        # alive through cohort rotations (the deepest chain keeps growing
        # through whoever sampled it last).
        best = self.own_tip[0]
        for depth, _value in self.freshest.values():
            if depth > best:
                best = depth
        lag = 2 * self.delta
        eligible = []
        for prover in sorted(self.freshest):
            if prover == self.node:
                continue
            depth, value = self.freshest[prover]
            if depth >= best - lag:
                eligible.append((prover, value))
        k = sample_size(self.c_sample, self.n, t)
        if len(eligible) > k:
            rng = random.Random(stable_seed(self.master_seed, "sample", self.node, t))
            eligible = rng.sample(eligible, k)
            eligible.sort()
        inputs = [self.own_tip[1]]
        for _, value in eligible:
            if value not in inputs:
                inputs.append(value)
        self.hub.vdf_eval(self.node, inputs, t)
        return payloads


def extend_chains(tracker: WakenessTracker, t: int) -> List[dict]:
    """Per-slot chain extension: publish matured links, sample fresh provers,
    issue one batched delay query. Returns payloads to broadcast."""
    return tracker.extend(t)


def update_wakeness_vectors(tracker: WakenessTracker, t: int, link_payloads: List[dict]) -> Dict[int, int]:
    """Fold received link messages into the holder's vectors; returns the
    per-owner bitmasks after the update."""
    for payload in link_payloads:
        tracker.ingest_links(payload, t)
    return {owner: tracker.vector_of(owner) for owner in sorted(tracker.maxdepth)}
