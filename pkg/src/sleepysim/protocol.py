"""View-based atomic broadcast core.

Each view spans c_view * delta slots and runs one graded proposal election:
propose (offset 0), echo (offset delta), vote (offset 2*delta), decide
(offset 3*delta). Leadership is a VRF lottery: every awake node proposes
with a per-view ticket and the numerically lowest verified ticket wins.
Votes only go to echo-certified, non-equivocating, chain-extending
proposals; a block is decided on a strict majority of counted votes.
Chains sync through per-view tip broadcasts adopted by majority-supported
prefix. Proposals carry a VRF seed over (propose slot, parent hash), which
is what makes honest log suffixes unpredictable to an adversary that is
not awake when they are broadcast.

The per-slot transition (`pi_step`) is a pure function of the node's state
and the messages admitted by the surrounding wrapper, so a probe can replay
any (node, slot) byte-for-byte from captured inputs.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .blocks import BlockStore, make_block
from .errors import UnresolvableParent
from .oracles import OracleHub

PI_KINDS = ("propose", "echo", "vote", "tip")


@dataclass(frozen=True)
class PiParams:
    delta: int
    view_len: int
    views_per_epoch: int
    pool_cap: int = 64
    augmented: bool = True

    # Views are 1-based so that first-view blocks strictly increase past the
    # genesis coordinates (view = epoch = 0).

    def view_of(self, t: int) -> int:
        return t // self.view_len + 1

    def phase_of(self, t: int) -> Optional[str]:
        off = t % self.view_len
        if off == 0:
            return "propose"
        if off == self.delta:
            return "echo"
        if off == 2 * self.delta:
            return "vote"
        if off == 3 * self.delta:
            return "decide"
        return None

    def propose_slot(self, view: int) -> int:
        return (view - 1) * self.view_len

    def echo_deadline(self, view: int) -> int:
        return self.propose_slot(view) + self.delta

    def epoch_of_view(self, view: int) -> int:
        return (view - 1) // self.views_per_epoch


class AdmitAll:
    """Default compiler filter: every block and tip is admissible."""

    def admit_block(self, block: dict, store: BlockStore) -> bool:
        return True

    def admit_tip(self, chain_ids: List[str], store: BlockStore) -> bool:
        return True

    def state_key(self):
        return None


@dataclass
class ViewState:
    proposals: Dict[int, dict] = field(default_factory=dict)   # proposer -> entry
    proposal_ids: Dict[int, set] = field(default_factory=dict)  # proposer -> distinct block ids
    equivocators: set = field(default_factory=set)
    echo_support: Dict[str, set] = field(default_factory=dict)  # block id -> echoers
    echo_senders: Dict[int, str] = field(default_factory=dict)  # echoer -> block id
    echo_equivocators: set = field(default_factory=set)
    votes: Dict[int, str] = field(default_factory=dict)         # voter -> block id
    vote_equivocators: set = field(default_factory=set)
    participants: set = field(default_factory=set)              # senders of any phase message

    def to_jsonable(self) -> dict:
        return {
            "proposals": {str(k): {"ticket": v["ticket"], "block_id": v["block_id"],
                                   "direct": v["direct"]}
                          for k, v in sorted(self.proposals.items())},
            "proposal_ids": {str(k): sorted(v) for k, v in sorted(self.proposal_ids.items())},
            "equivocators": sorted(self.equivocators),
            "echo_support": {k: sorted(v) for k, v in sorted(self.echo_support.items())},
            "echo_senders": {str(k): v for k, v in sorted(self.echo_senders.items())},
            "echo_equivocators": sorted(self.echo_equivocators),
            "votes": {str(k): v for k, v in sorted(self.votes.items())},
            "vote_equivocators": sorted(self.vote_equivocators),
            "participants": sorted(self.participants),
        }


@dataclass
class PiState:
    node: int
    store: BlockStore
    chain: List[str] = field(default_factory=list)       # block ids, genesis first
    log: List[str] = field(default_factory=list)         # decided payload entries
    pool: List[str] = field(default_factory=list)        # undecided payloads, first seen order
    seen_payloads: set = field(default_factory=set)
    lock: Optional[Tuple[int, str]] = None               # (view, block id)
    views: Dict[int, ViewState] = field(default_factory=dict)
    tips: Dict[int, List[str]] = field(default_factory=dict)   # sender -> chain ids
    tip_slot: Dict[int, int] = field(default_factory=dict)
    verified_blocks: set = field(default_factory=set)    # permissibility cache

    def __post_init__(self):
        if not self.chain:
            self.chain = [self.store.genesis_id]

    def tip_id(self) -> str:
        return self.chain[-1]

    def view_state(self, v: int) -> ViewState:
        vs = self.views.get(v)
        if vs is None:
            vs = self.views[v] = ViewState()
        return vs

    def to_jsonable(self) -> dict:
        return {
            "node": self.node,
            "chain": list(self.chain),
            "log": list(self.log),
            "pool": list(self.pool),
            "lock": list(self.lock) if self.lock else None,
            "views": {str(v): vs.to_jsonable() for v, vs in sorted(self.views.items())},
            "tips": {str(k): v for k, v in sorted(self.tips.items())},
        }


@dataclass
class StepResult:
    sends: List[dict] = field(default_factory=list)      # signed envelopes to broadcast
    decisions: List[Tuple[str, list]] = field(default_factory=list)  # (block id, content)
    gpe: Optional[Tuple[int, Optional[str], int]] = None  # (view, block id, grade)
    adopted: bool = False

    def to_jsonable(self) -> dict:
        return {
            "sends": self.sends,
            "decisions": [[bid, list(content)] for bid, content in self.decisions],
            "gpe": list(self.gpe) if self.gpe else None,
            "adopted": self.adopted,
        }


# ---------------------------------------------------------------------------
# permissibility
# ---------------------------------------------------------------------------

def seed_input(block: dict, params: PiParams) -> list:
    return ["seed", params.propose_slot(block["view"]), block["parent"]]


def make_seed(node: int, t: int, parent_id: Optional[str], hub: OracleHub) -> dict:
    """Per-proposal VRF seed over (propose slot, parent hash)."""
    return hub.vrf_eval(node, node, ["seed", t, parent_id], t)


def permissible(block: dict, store: BlockStore, hub: OracleHub, params: PiParams) -> bool:
    """Locally computable admission predicate: structural validity plus,
    when seed augmentation is on, a verifying proposer VRF seed."""
    bid = store.add(block)
    if block["proposer"] is None:
        return bid == store.genesis_id
    if block["epoch"] != params.epoch_of_view(block["view"]):
        return False
    try:
        if not store.valid(bid):
            return False
    except UnresolvableParent:
        return False
    if params.augmented:
        seed = block.get("seed")
        if not seed:
            return False
        if not hub.vrf_verify(block["proposer"], seed_input(block, params),
                              seed["value"], seed["proof"]):
            return False
    return True


def _chain_ok(state: PiState, ids: List[str], blocks: List[dict], hub: OracleHub,
              params: PiParams) -> bool:
    """Validate a tip chain (ids exclude genesis), caching per-block results."""
    prev = state.store.genesis_id
    for bid, block in zip(ids, blocks):
        if block["parent"] != prev:
            return False
        if bid not in state.verified_blocks:
            if not permissible(block, state.store, hub, params):
                return False
            state.verified_blocks.add(bid)
        prev = bid
    return True


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def _ingest_proposal(state: PiState, view: int, prop_env: dict, nominal: Optional[int],
                     hub: OracleHub, params: PiParams, flt) -> None:
    payload = prop_env["payload"]
    proposer = prop_env["signer"]
    block = payload.get("block")
    ticket = payload.get("ticket")
    if not isinstance(block, dict) or not isinstance(ticket, dict):
        return
    if block.get("proposer") != proposer or block.get("view", -1) > view:
        return
    if not hub.vrf_verify(proposer, ["ticket", view], ticket.get("value", ""), ticket.get("proof", "")):
        return
    parent_block = payload.get("parent_block")
    if isinstance(parent_block, dict):
        state.store.add(parent_block)
    bid = state.store.add(block)
    vs = state.view_state(view)
    vs.participants.add(proposer)
    ids = vs.proposal_ids.setdefault(proposer, set())
    ids.add(bid)
    if len(ids) > 1:
        vs.equivocators.add(proposer)
    if proposer in vs.proposals:
        entry = vs.proposals[proposer]
        if entry["block_id"] == bid and nominal is not None:
            entry["direct"] = entry["direct"] or nominal <= params.echo_deadline(view)
        return
    if not permissible(block, state.store, hub, params):
        return
    if not flt.admit_block(block, state.store):
        return
    vs.proposals[proposer] = {
        "ticket": int(ticket["value"], 16),
        "block_id": bid,
        "env": prop_env,
        "direct": nominal is not None and nominal <= params.echo_deadline(view),
    }


def _ingest_echo(state: PiState, msg_payload: dict, echoer: int, hub: OracleHub,
                 params: PiParams, flt) -> None:
    view = msg_payload.get("view")
    prop_env = msg_payload.get("prop")
    if not isinstance(view, int) or not isinstance(prop_env, dict):
        return
    if not hub.verify_envelope(prop_env):
        return
    _ingest_proposal(state, view, prop_env, None, hub, params, flt)
    proposer = prop_env["signer"]
    vs = state.view_state(view)
    vs.participants.add(echoer)
    entry = vs.proposals.get(proposer)
    if entry is None:
        return
    bid = state.store.block_id(prop_env["payload"]["block"])
    prev = vs.echo_senders.get(echoer)
    if prev is not None and prev != bid:
        vs.echo_equivocators.add(echoer)
        return
    vs.echo_senders[echoer] = bid
    vs.echo_support.setdefault(bid, set()).add(echoer)


def _ingest_vote(state: PiState, payload: dict, voter: int) -> None:
    view, bid = payload.get("view"), payload.get("block_id")
    if not isinstance(view, int) or not isinstance(bid, str):
        return
    vs = state.view_state(view)
    vs.participants.add(voter)
    prev = vs.votes.get(voter)
    if prev is not None:
        if prev != bid:
            vs.vote_equivocators.add(voter)
        return
    vs.votes[voter] = bid


def _ingest_tip(state: PiState, payload: dict, sender: int, nominal: int,
                hub: OracleHub, params: PiParams, flt) -> None:
    chain = payload.get("chain")
    if not isinstance(chain, list):
        return
    pending = payload.get("pending")
    if isinstance(pending, list):
        for entry in pending:
            if isinstance(entry, str) and entry not in state.seen_payloads:
                state.seen_payloads.add(entry)
                state.pool.append(entry)
    ids = []
    for block in chain:
        if not isinstance(block, dict):
            return
        ids.append(state.store.block_id(block))
    if not _chain_ok(state, ids, chain, hub, params):
        return
    full = [state.store.genesis_id] + ids
    if not flt.admit_tip(full, state.store):
        return
    for block in chain:
        state.store.add(block)
    old_slot = state.tip_slot.get(sender, -1)
    if nominal > old_slot or (nominal == old_slot and len(full) > len(state.tips.get(sender, []))):
        state.tips[sender] = full
        state.tip_slot[sender] = nominal


def ingest(state: PiState, msgs, hub: OracleHub, params: PiParams, flt) -> None:
    """Feed admitted messages into the per-view tables, in delivery order."""
    for m in msgs:
        payload = m.payload
        kind = payload.get("kind")
        if kind == "propose":
            view = payload.get("view")
            if isinstance(view, int):
                _ingest_proposal(state, view, m.env, m.nominal_slot, hub, params, flt)
        elif kind == "echo":
            _ingest_echo(state, payload, m.signer, hub, params, flt)
        elif kind == "vote":
            _ingest_vote(state, payload, m.signer)
        elif kind == "tip":
            _ingest_tip(state, payload, m.signer, m.nominal_slot, hub, params, flt)


# ---------------------------------------------------------------------------
# chain adoption and decision bookkeeping
# ---------------------------------------------------------------------------

def _append_decided(state: PiState, ids: List[str], result: StepResult) -> None:
    for bid in ids:
        block = state.store.get(bid)
        state.chain.append(bid)
        added = []
        for entry in block["content"]:
            if entry not in state.log:
                state.log.append(entry)
                added.append(entry)
            state.seen_payloads.add(entry)
        result.decisions.append((bid, added))
    decided = set(state.log)
    state.pool = [x for x in state.pool if x not in decided]


def adopt_from_tips(state: PiState, result: StepResult, counted=None) -> None:
    """Extend the decided chain to the longest prefix supported by a strict
    majority of counted tip senders. When a counted set is given (the
    stateless filter), tips from senders that left it are not counted."""
    if not state.tips:
        return
    if counted is None:
        senders = sorted(state.tips)
    else:
        allowed = set(counted)
        allowed.add(state.node)
        senders = sorted(s for s in state.tips if s in allowed)
    total = len(senders)
    if not total:
        return
    prefix = [state.store.genesis_id]
    while True:
        tally: Dict[str, int] = {}
        h = len(prefix)
        for s in senders:
            ids = state.tips[s]
            if len(ids) > h and ids[:h] == prefix:
                tally[ids[h]] = tally.get(ids[h], 0) + 1
        winner = None
        for bid in sorted(tally):
            if tally[bid] * 2 > total:
                winner = bid
                break
        if winner is None:
            break
        prefix.append(winner)
    if len(prefix) > len(state.chain) and prefix[: len(state.chain)] == state.chain:
        _append_decided(state, prefix[len(state.chain):], result)
        result.adopted = True


# ---------------------------------------------------------------------------
# phase actions
# ---------------------------------------------------------------------------

def _propose_action(state: PiState, t: int, view: int, hub: OracleHub,
                    params: PiParams, flt, result: StepResult) -> None:
    node = state.node
    ticket = hub.vrf_eval(node, node, ["ticket", view], t)
    if state.lock and state.lock[0] == view - 1 and state.lock[1] not in state.chain:
        block = state.store.get(state.lock[1])
    else:
        parent_id = state.tip_id()
        seed = make_seed(node, t, parent_id, hub) if params.augmented else None
        block = make_block(
            content=state.pool[: params.pool_cap],
            parent=parent_id,
            view=view,
            epoch=params.epoch_of_view(view),
            seed=seed,
            proposer=node,
        )
    payload = {
        "kind": "propose",
        "view": view,
        "slot": t,
        "block": block,
        "parent_block": state.store.blocks.get(block["parent"]),
        "ticket": ticket,
    }
    env = hub.sign(node, node, payload, t)
    result.sends.append(env)
    _ingest_proposal(state, view, env, t, hub, params, flt)


def _echo_action(state: PiState, t: int, view: int, hub: OracleHub,
                 result: StepResult) -> None:
    vs = state.view_state(view)
    best = None
    for proposer in sorted(vs.proposals):
        entry = vs.proposals[proposer]
        if not entry["direct"] or proposer in vs.equivocators:
            continue
        key = (entry["ticket"], proposer)
        if best is None or key < best[0]:
            best = (key, entry)
    if best is None:
        return
    entry = best[1]
    payload = {"kind": "echo", "view": view, "slot": t, "prop": entry["env"]}
    result.sends.append(hub.sign(state.node, state.node, payload, t))
    bid = entry["block_id"]
    vs.participants.add(state.node)
    vs.echo_senders[state.node] = bid
    vs.echo_support.setdefault(bid, set()).add(state.node)


def _vote_action(state: PiState, t: int, view: int, hub: OracleHub, params: PiParams,
                 flt, result: StepResult) -> None:
    vs = state.view_state(view)
    echoers = [e for e in vs.echo_senders if e not in vs.echo_equivocators]
    candidates: List[str] = []
    if echoers:
        for bid in sorted(vs.echo_support):
            support = sum(1 for e in vs.echo_support[bid] if e not in vs.echo_equivocators)
            if support * 2 > len(echoers):
                candidates.append(bid)
    else:
        candidates = sorted({e["block_id"] for e in vs.proposals.values() if e["direct"]})
    tip = state.tip_id()
    best = None
    by_id = {e["block_id"]: (e["ticket"], p) for p, e in vs.proposals.items()}
    for bid in candidates:
        meta = by_id.get(bid)
        if meta is None or meta[1] in vs.equivocators:
            continue
        if bid in state.chain:
            continue
        block = state.store.blocks.get(bid)
        if block is None or not flt.admit_block(block, state.store):
            continue
        try:
            if not state.store.extends(bid, tip):
                continue
        except UnresolvableParent:
            continue
        key = (meta[0], meta[1], bid)
        if best is None or key < best[0]:
            best = (key, bid)
    if best is None:
        return
    bid = best[1]
    payload = {"kind": "vote", "view": view, "slot": t, "block_id": bid}
    result.sends.append(hub.sign(state.node, state.node, payload, t))
    vs.participants.add(state.node)
    vs.votes[state.node] = bid


def _decide_action(state: PiState, t: int, view: int, hub: OracleHub, params: PiParams,
                   flt, result: StepResult) -> None:
    vs = state.view_state(view)
    voters = [v for v in vs.votes if v not in vs.vote_equivocators]
    tally: Dict[str, int] = {}
    for v in voters:
        bid = vs.votes[v]
        tally[bid] = tally.get(bid, 0) + 1
    # Majority of heard votes, over everyone heard participating in this
    # view: abstentions (nodes refusing a conflicting candidate) still count
    # in the denominator, so a splinter of voters can never look unanimous.
    denom = len(vs.participants | set(vs.votes))
    winner = None
    for bid in sorted(tally):
        if tally[bid] * 2 > denom:
            winner = bid
            break
    grade = 0
    decided_id = None
    if winner is not None:
        block = state.store.blocks.get(winner)
        if block is not None and flt.admit_block(block, state.store):
            try:
                path = state.store.path(winner)
            except UnresolvableParent:
                path = None
            if path is not None:
                if winner in state.chain:
                    grade, decided_id = 1, winner
                elif path[: len(state.chain)] == state.chain:
                    _append_decided(state, path[len(state.chain):], result)
                    grade, decided_id = 1, winner
    if grade == 1:
        state.lock = None
    else:
        my_vote = vs.votes.get(state.node)
        if my_vote is not None:
            state.lock = (view, my_vote)
            decided_id = my_vote
    result.gpe = (view, decided_id, grade)
    chain_blocks = [state.store.get(bid) for bid in state.chain[1:]]
    tip_payload = {"kind": "tip", "view": view, "slot": t, "chain": chain_blocks,
                   "pending": state.pool[: params.pool_cap]}
    result.sends.append(hub.sign(state.node, state.node, tip_payload, t))
    full = list(state.chain)
    old_slot = state.tip_slot.get(state.node, -1)
    if t > old_slot or len(full) > len(state.tips.get(state.node, [])):
        state.tips[state.node] = full
        state.tip_slot[state.node] = t


# ---------------------------------------------------------------------------
# the per-slot transition
# ---------------------------------------------------------------------------

def pi_step(state: PiState, t: int, admitted, env_inputs: List[str], hub: OracleHub,
            params: PiParams, flt=None, counted=None) -> StepResult:
    """One protocol step: ingest admitted messages, adopt majority tips, then
    run the phase action for this slot. Pure in (state, inputs); all oracle
    access is the deterministic hub."""
    if flt is None:
        flt = AdmitAll()
    result = StepResult()
    for payload in env_inputs:
        if payload not in state.seen_payloads:
            state.seen_payloads.add(payload)
            state.pool.append(payload)
    ingest(state, admitted, hub, params, flt)
    adopt_from_tips(state, result, counted)
    view = params.view_of(t)
    phase = params.phase_of(t)
    if phase == "propose":
        _propose_action(state, t, view, hub, params, flt, result)
    elif phase == "echo":
        _echo_action(state, t, view, hub, result)
    elif phase == "vote":
        _vote_action(state, t, view, hub, params, flt, result)
    elif phase == "decide":
        _decide_action(state, t, view, hub, params, flt, result)
    for v in [v for v in state.views if v < view - 2]:
        del state.views[v]
    return result
