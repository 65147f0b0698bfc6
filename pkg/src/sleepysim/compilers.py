"""Black-box protocol wrappers.

Three stacks share the same per-slot shape around the core transition:

* BaseStack runs the view protocol raw (receipt-based counting), for the
  high-participation regime where anyone ever heard from may be counted.
* FluctuatingStack adds wakeness machinery: it updates delay-chain vectors,
  extends chains with sampled fresh tips, and feeds the core only messages
  from senders deemed awake inside the trailing window, realizing the
  stateless-filter contract.
* DecayingStack adds epoch recovery: decide messages are tallied per epoch,
  the log skeleton is rebuilt one epoch per iteration by strict majority
  among senders whose decides extend the previous anchor, and messages
  about blocks that do not extend the appropriate anchor are ignored.

NaiveLongestStack is a deliberately broken control (adopt the longest valid
chain, no majority): simulation attacks succeed against it, which is the
positive control for the attack suite.
"""

import copy
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .blocks import BlockStore
from .codec import encode
from .errors import ConfigError, UnresolvableParent
from .net import Delivery, payload_digest
from .oracles import OracleHub
from .protocol import (AdmitAll, PiParams, PiState, PI_KINDS, StepResult,
                       permissible, pi_step)
from .wakeness import LinkRegistry, WakenessTracker


@dataclass
class StackStep:
    envelopes: List[dict] = field(default_factory=list)
    result: Optional[StepResult] = None
    capture: Optional[dict] = None


def _sorted_admitted(msgs: List[Delivery]) -> List[Delivery]:
    return sorted(msgs, key=lambda m: (m.nominal_slot, m.signer, payload_digest(m.payload)))


class BaseStack:
    """Raw view protocol: count every properly delivered sender."""

    filter_cls = AdmitAll

    def __init__(self, node: int, hub: OracleHub, store: BlockStore, params: PiParams,
                 config, registry: Optional[LinkRegistry] = None):
        self.node = node
        self.hub = hub
        self.params = params
        self.config = config
        self.state = PiState(node=node, store=store)
        self.flt = self.filter_cls()
        self.bit_events: List[tuple] = []
        self.counted_events: List[tuple] = []
        self._last_counted: tuple = ()

    # -- hooks for subclasses --

    def pre_step(self, t: int, deliveries: List[Delivery]) -> Tuple[List[dict], List[Delivery]]:
        """Returns (extra signed envelopes, admitted protocol messages)."""
        return [], [m for m in deliveries if m.payload.get("kind") in PI_KINDS]

    def post_step(self, t: int, result: StepResult) -> List[dict]:
        return []

    def counted_set(self, t: int) -> tuple:
        return ()

    # -- the per-slot driver --

    pi_counted = None  # base and decaying stacks count every admitted sender

    def step(self, t: int, deliveries: List[Delivery], env_inputs: List[str],
             capture: bool = False) -> StackStep:
        extra, admitted = self.pre_step(t, deliveries)
        admitted = _sorted_admitted(admitted)
        counted = self.counted_set(t)
        if counted and counted != self._last_counted:
            self._last_counted = counted
            self.counted_events.append((t, self.node, counted))
        out = StackStep(envelopes=list(extra))
        if capture:
            snap_state = copy.deepcopy(self.state)
            snap_admitted = copy.deepcopy(admitted)
            snap_flt = copy.deepcopy(self.flt)
        result = pi_step(self.state, t, admitted, env_inputs, self.hub, self.params,
                         self.flt, counted=self.pi_counted)
        if capture:
            first = encode([result.to_jsonable(), self.state.to_jsonable()])
            replay = pi_step(snap_state, t, snap_admitted, list(env_inputs), self.hub,
                             self.params, snap_flt, counted=self.pi_counted)
            second = encode([replay.to_jsonable(), snap_state.to_jsonable()])
            out.capture = {
                "node": self.node,
                "slot": t,
                "senders": sorted({m.signer for m in admitted}),
                "counted": list(counted),
                "match": first == second,
            }
        out.result = result
        out.envelopes.extend(result.sends)
        out.envelopes.extend(self.post_step(t, result))
        return out


class FluctuatingStack(BaseStack):
    """Stateless-filtered protocol fed by delay-chain wakeness vectors."""

    def __init__(self, node, hub, store, params, config, registry=None):
        super().__init__(node, hub, store, params, config, registry)
        window = config.stateless_window()
        if window < params.view_len:
            raise ConfigError(f"stateless window {window} shorter than a view ({params.view_len})")
        self.window = window
        self.tracker = WakenessTracker(
            node=node, n=config.n, registry=registry, hub=hub,
            master_seed=config.seed, c_sample=config.param("c_sample"),
            delta=config.delta, horizon=config.horizon,
        )
        self.bit_events = self.tracker.bit_events
        self.pen: List[Delivery] = []

    def pre_step(self, t, deliveries):
        pi_msgs = []
        for m in deliveries:
            kind = m.payload.get("kind")
            if kind == "links":
                self.tracker.ingest_links(m.payload, t)
            elif kind in PI_KINDS:
                pi_msgs.append(m)
        extra = []
        for payload in self.tracker.extend(t):
            extra.append(self.hub.sign(self.node, self.node, payload, t))
        self.pen.extend(pi_msgs)
        deemed = set(self.tracker.deemed_awake_set(t - self.window, t - 1))
        admitted = [m for m in self.pen if m.signer in deemed]
        horizon_cut = t - 2 * self.window
        self.pen = [m for m in self.pen
                    if m.signer not in deemed and m.nominal_slot >= horizon_cut]
        self._deemed = tuple(sorted(deemed))
        self.pi_counted = self._deemed
        return extra, admitted

    def counted_set(self, t):
        return self._deemed


class DecayingFilter:
    """Ignore messages about epoch-e blocks that do not extend the node's
    deepest recovered anchor below epoch e."""

    def __init__(self, anchors: List[Tuple[int, str]], store: BlockStore):
        self.anchors = anchors          # ascending (epoch, block id)
        self.store = store

    def _anchor_below(self, epoch: int) -> Optional[str]:
        best = None
        for e, bid in self.anchors:
            if e < epoch:
                best = bid
            else:
                break
        return best

    def admit_block(self, block: dict, store: BlockStore) -> bool:
        anchor = self._anchor_below(block["epoch"])
        if anchor is None:
            return True
        bid = store.block_id(block)
        store.add(block)
        try:
            return store.extends(bid, anchor)
        except UnresolvableParent:
            return False

    def admit_tip(self, chain_ids: List[str], store: BlockStore) -> bool:
        if not self.anchors:
            return True
        try:
            deepest_epoch = store.get(chain_ids[-1])["epoch"] if len(chain_ids) > 1 else 0
        except UnresolvableParent:
            return False
        present = set(chain_ids)
        for e, bid in self.anchors:
            if e == 0 and bid == store.genesis_id:
                continue
            if e <= deepest_epoch and bid not in present:
                return False
        return True

    def state_key(self):
        return list(self.anchors)


@dataclass
class EpochState:
    anchors: List[Tuple[int, str]]
    appended: List[Tuple[int, str]]
    counted: Dict[int, tuple]


def update_log(chain_ids: List[str], store: BlockStore,
               decide_table: Dict[int, Dict[str, set]]) -> EpochState:
    """Rebuild the epoch-anchor skeleton.

    The node's own decided chain seeds the anchors (decisions are never
    rolled back). Beyond it, iteratively: among decide messages for
    next-epoch blocks extending the deepest anchor, append the block holding
    a strict majority of distinct counted senders; stop on the first epoch
    with no majority.
    """
    anchors: Dict[int, str] = {0: store.genesis_id}
    for bid in chain_ids[1:]:
        anchors[store.get(bid)["epoch"]] = bid
    appended: List[Tuple[int, str]] = []
    counted: Dict[int, tuple] = {}
    while True:
        top_epoch = max(anchors)
        top_anchor = anchors[top_epoch]
        next_epochs = sorted(e for e in decide_table if e > top_epoch)
        progressed = False
        for epoch in next_epochs:
            votes: Dict[str, set] = {}
            for bid, senders in decide_table[epoch].items():
                try:
                    if store.extends(bid, top_anchor):
                        votes[bid] = senders
                except (UnresolvableParent, KeyError):
                    continue
            if not votes:
                continue
            all_senders = set().union(*votes.values())
            counted[epoch] = tuple(sorted(all_senders))
            winner = None
            for bid in sorted(votes):
                if len(votes[bid]) * 2 > len(all_senders):
                    winner = bid
                    break
            if winner is not None:
                anchors[epoch] = winner
                appended.append((epoch, winner))
                progressed = True
            break  # only the immediately next recoverable epoch per iteration
        if not progressed:
            break
    ordered = sorted(anchors.items())
    return EpochState(anchors=ordered, appended=appended, counted=counted)


class DecayingStack(BaseStack):
    """Epoch-recovery wrapper: decide-message majorities anchor the log."""

    def __init__(self, node, hub, store, params, config, registry=None):
        super().__init__(node, hub, store, params, config, registry)
        self.alpha = config.epoch_len()
        if self.alpha < params.view_len:
            raise ConfigError(f"epoch length {self.alpha} shorter than a view ({params.view_len})")
        self.decide_table: Dict[int, Dict[str, set]] = {}
        self.my_decides: List[dict] = []      # {"epoch":…, "block":…}
        self._bit_seen: set = set()
        self.horizon = config.horizon

    def _ingest_decide(self, sender: int, epoch, block, t: int) -> None:
        if not isinstance(epoch, int) or not isinstance(block, dict):
            return
        if block.get("epoch") != epoch:
            return
        if not permissible(block, self.state.store, self.hub, self.params):
            return
        bid = self.state.store.add(block)
        self.decide_table.setdefault(epoch, {}).setdefault(bid, set()).add(sender)

    def pre_step(self, t, deliveries):
        pi_msgs = []
        for m in deliveries:
            kind = m.payload.get("kind")
            if kind == "decide":
                self._ingest_decide(m.signer, m.payload.get("epoch"), m.payload.get("block"), t)
            elif kind == "decide_set":
                items = m.payload.get("items")
                if isinstance(items, list):
                    for item in items:
                        if isinstance(item, dict):
                            self._ingest_decide(m.signer, item.get("epoch"), item.get("block"), t)
            elif kind in PI_KINDS:
                pi_msgs.append(m)
        epoch_state = update_log(self.state.chain, self.state.store, self.decide_table)
        self.epoch_state = epoch_state
        self.flt = DecayingFilter(epoch_state.anchors, self.state.store)
        # Receipt-based wakeness claims: an admitted epoch-e decide from i deems
        # i awake no earlier than e*alpha - 3*alpha (checked at that validity).
        for epoch, senders in epoch_state.counted.items():
            slot_idx = min(epoch * self.alpha, max(self.horizon - 1, 0))
            for s in senders:
                key = (s, epoch)
                if key not in self._bit_seen:
                    self._bit_seen.add(key)
                    self.bit_events.append((t, s, slot_idx))
        return [], pi_msgs

    def counted_set(self, t):
        if not getattr(self, "epoch_state", None) or not self.epoch_state.counted:
            return ()
        last = max(self.epoch_state.counted)
        return self.epoch_state.counted[last]

    def post_step(self, t, result):
        out = []
        for bid, _ in result.decisions:
            block = self.state.store.get(bid)
            item = {"epoch": block["epoch"], "block": block}
            self.my_decides.append(item)
            payload = {"kind": "decide", "epoch": block["epoch"], "slot": t, "block": block}
            out.append(self.hub.sign(self.node, self.node, payload, t))
            self._ingest_decide(self.node, block["epoch"], block, t)
        if self.alpha and t and t % self.alpha == 0 and self.my_decides:
            payload = {"kind": "decide_set", "slot": t, "items": list(self.my_decides)}
            out.append(self.hub.sign(self.node, self.node, payload, t))
        return out


class NaiveLongestStack(BaseStack):
    """Strawman acceptor: the longest valid permissible chain wins outright.

    Exists so the backward/forward simulation attacks demonstrably succeed
    somewhere; it replaces decided prefixes, which the real stacks never do.
    """

    def post_step(self, t, result):
        best = None
        for sender in sorted(self.state.tips):
            ids = self.state.tips[sender]
            key = (len(ids), ids[-1])
            if best is None or key[0] > best[0] or (key[0] == best[0] and key[1] < best[1]):
                best = key
                best_ids = ids
        if best is not None and best[0] > len(self.state.chain):
            self.state.chain = list(best_ids)
            log = []
            for bid in best_ids[1:]:
                for entry in self.state.store.get(bid)["content"]:
                    if entry not in log:
                        log.append(entry)
            self.state.log = log
        return []


STACK_CLASSES = {
    "base": BaseStack,
    "fluctuating_compiled": FluctuatingStack,
    "decaying_compiled": DecayingStack,
    "naive_longest": NaiveLongestStack,
}


def compile_decaying(config) -> type:
    """Stack class for the decaying-participation compiler (epoch recovery)."""
    if config.epoch_len() < config.view_len():
        raise ConfigError("alpha shorter than one view")
    return DecayingStack


def compile_fluctuating(config) -> type:
    """Stack class for the fully-fluctuating compiler (wakeness filtering)."""
    if config.stateless_window() < config.view_len():
        raise ConfigError("stateless window shorter than one view")
    return FluctuatingStack
