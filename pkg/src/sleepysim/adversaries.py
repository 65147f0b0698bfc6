"""Participation-pattern generators and scripted adversary strategies.

Strategies see a per-slot context that exposes only what the model allows:
messages delivered to awake corrupt nodes (strictly older than the current
slot), their own persistent state, and oracle access mediated by the
key-access policy. Every helper that touches another identity's key simply
returns None when the policy refuses, and the hub records the violation,
which is how "attack blocked" shows up in reports.
"""

import random
from typing import Dict, List, Optional

from .blocks import BlockStore, make_block
from .codec import stable_seed
from .config import INFINITE, ParticipationSchedule, check_admissible
from .errors import PolicyViolation, RateLimited, Unsatisfiable
from .net import BROADCAST
from .oracles import OracleHub
from .protocol import PiParams, seed_input
from .wakeness import WakenessTracker

# ---------------------------------------------------------------------------
# schedule generators
# ---------------------------------------------------------------------------


def _rows(n: int, horizon: int) -> List[int]:
    return [0] * n


def gen_schedule(pattern: str, params: dict, seed: int) -> ParticipationSchedule:
    """Named parametric generators for the four participation settings.

    Common params: n, horizon, corrupt (count). Fluctuating blocks honest
    awake counts inside [2*corrupt+1, n_honest] so every emitted schedule is
    admissible by construction for any window at rho = 1/2.
    """
    n = params["n"]
    horizon = params["horizon"]
    n_corrupt = params.get("corrupt", 0)
    if n_corrupt >= n:
        raise Unsatisfiable("corrupt count must be below n")
    rng = random.Random(stable_seed(seed, "schedule", pattern))
    corrupt_ids = list(range(n - n_corrupt, n))
    honest_ids = list(range(n - n_corrupt))
    corrupt_flags = [p in corrupt_ids for p in range(n)]
    rows = _rows(n, horizon)
    full = (1 << horizon) - 1 if horizon else 0

    if pattern == "consistent":
        awake_honest = params.get("awake_honest", len(honest_ids))
        if awake_honest < 1 or (n_corrupt and awake_honest <= 2 * n_corrupt
                                and params.get("require_admissible")):
            raise Unsatisfiable("not enough consistently awake honest nodes")
        for p in honest_ids[:awake_honest]:
            rows[p] = full
        for p in corrupt_ids:
            rows[p] = full
    elif pattern == "increasing":
        for p in honest_ids:
            rows[p] = full
        for i, p in enumerate(corrupt_ids):
            wake = min(horizon, (i + 1) * max(1, horizon // (n_corrupt + 1)))
            rows[p] = (full >> wake) << wake
    elif pattern == "decaying":
        min_honest = 2 * n_corrupt + 1
        if min_honest > len(honest_ids):
            raise Unsatisfiable("decaying pattern needs n_honest >= 2*corrupt+1")
        sleepers = len(honest_ids) - min_honest
        for i, p in enumerate(honest_ids):
            if i < min_honest:
                rows[p] = full
            else:
                rank = i - min_honest
                asleep_from = max(1, ((rank + 1) * horizon) // (sleepers + 1))
                rows[p] = (1 << asleep_from) - 1
        corrupt_until = params.get("corrupt_until", max(1, horizon // 4))
        for i, p in enumerate(corrupt_ids):
            until = max(1, corrupt_until - i * max(1, corrupt_until // (n_corrupt + 1)))
            rows[p] = (1 << until) - 1
    elif pattern == "fully_fluctuating":
        dwell = params.get("dwell", 8)
        # Cohorts above n/2 keep every decide adoptable by the next cohort.
        min_honest = max(2 * n_corrupt + 1, n // 2 + 1)
        if min_honest > len(honest_ids):
            raise Unsatisfiable("fluctuating pattern needs n_honest >= max(2*corrupt+1, n/2+1)")
        t = 0
        while t < horizon:
            span = min(dwell, horizon - t)
            block_mask = ((1 << span) - 1) << t
            k = rng.randint(min_honest, len(honest_ids))
            for p in rng.sample(honest_ids, k):
                rows[p] |= block_mask
            for p in corrupt_ids:
                if rng.random() < params.get("corrupt_rate", 0.5):
                    rows[p] |= block_mask
            t += span
    else:
        raise Unsatisfiable(f"unknown pattern {pattern!r}")

    schedule = ParticipationSchedule(n=n, horizon=horizon, awake_rows=rows,
                                     corrupt=corrupt_flags)
    schedule.validate()
    req = params.get("require_admissible")
    if req:
        tf, tb, rho = req
        tf = INFINITE if tf == INFINITE else int(tf)
        tb = INFINITE if tb == INFINITE else int(tb)
        report = check_admissible(schedule, tf, tb, rho)
        if not report.admissible:
            raise Unsatisfiable(
                f"{pattern} schedule inadmissible at {len(report.bad_slots)} slots"
            )
    return schedule


# ---------------------------------------------------------------------------
# adversary context
# ---------------------------------------------------------------------------


class AdversaryCtx:
    """Read/act surface handed to a strategy once per slot."""

    def __init__(self, t: int, config, schedule: ParticipationSchedule,
                 hub: OracleHub, net, registry=None):
        self.t = t
        self.config = config
        self.schedule = schedule
        self.hub = hub
        self.net = net
        self.registry = registry
        self.inboxes: Dict[int, list] = {}
        self.corrupt = schedule.corrupt_set()
        self.honest = schedule.honest_set()
        self.env_inputs: Dict[int, list] = {}

    def awake_corrupt(self) -> List[int]:
        return [p for p in self.corrupt if self.schedule.awake_at(p, self.t)]

    def rng(self, *scope) -> random.Random:
        return random.Random(stable_seed(self.config.seed, "adv", self.t, *scope))

    def sign(self, identity: int, payload, via: int, claimed_slot=None) -> Optional[dict]:
        try:
            return self.hub.sign(via, identity, payload, self.t, claimed_slot)
        except PolicyViolation:
            return None

    def vrf(self, identity: int, input_obj, via: int) -> Optional[dict]:
        try:
            return self.hub.vrf_eval(via, identity, input_obj, self.t)
        except PolicyViolation:
            return None

    def vdf(self, via: int, inputs: List[str]):
        try:
            return self.hub.vdf_eval(via, inputs, self.t)
        except RateLimited:
            return None

    def send(self, env: Optional[dict], recipients, via: int, delay=None) -> bool:
        if env is None:
            return False
        self.net.send(env, recipients, self.t, via=via, delay=delay)
        return True


class AdversaryStrategy:
    """Base: read-only causality is structural (ctx only carries pre-slot data)."""

    name = "null"

    def __init__(self, params: Optional[dict] = None):
        self.params = params or {}

    def on_slot(self, ctx: AdversaryCtx) -> None:
        return

    def assign_delay(self, env: dict, via: int, t: int):
        """Delay spec for honest messages; None means the default delta."""
        return None


class NullAdversary(AdversaryStrategy):
    name = "null"


class _ChainView:
    """Adversary-side bookkeeping of observed blocks and decide votes."""

    def __init__(self, hub: OracleHub, params: PiParams):
        self.store = BlockStore(hub)
        self.params = params
        self.hub = hub
        self.best_tip: List[str] = [self.store.genesis_id]
        self.decides: Dict[int, Dict[str, set]] = {}

    def observe(self, deliveries) -> None:
        for m in deliveries:
            payload = m.payload
            kind = payload.get("kind")
            if kind == "tip" and isinstance(payload.get("chain"), list):
                ids = [self.store.genesis_id]
                ok = True
                prev = self.store.genesis_id
                for block in payload["chain"]:
                    if not isinstance(block, dict) or block.get("parent") != prev:
                        ok = False
                        break
                    prev = self.store.add(block)
                    ids.append(prev)
                if ok and len(ids) > len(self.best_tip):
                    self.best_tip = ids
            elif kind == "decide" and isinstance(payload.get("block"), dict):
                bid = self.store.add(payload["block"])
                epoch = payload["block"].get("epoch")
                if isinstance(epoch, int):
                    self.decides.setdefault(epoch, {}).setdefault(bid, set()).add(m.signer)
            elif kind == "propose" and isinstance(payload.get("block"), dict):
                self.store.add(payload["block"])
                pb = payload.get("parent_block")
                if isinstance(pb, dict):
                    self.store.add(pb)


def _fake_block(store: BlockStore, parent_id: str, view: int, params: PiParams,
                proposer: int, seed: Optional[dict], tag: str) -> dict:
    return make_block(
        content=[f"fake-{tag}-v{view}"],
        parent=parent_id,
        view=view,
        epoch=params.epoch_of_view(view),
        seed=seed,
        proposer=proposer,
    )


class EquivocateLeader(AdversaryStrategy):
    """Corrupt proposers equivocate (or propose selectively) with extreme
    per-recipient delays, and follow the wakeness machinery so compiled
    protocols still count them. A standard Byzantine stressor."""

    name = "equivocate"

    def __init__(self, params=None):
        super().__init__(params)
        self.view = None
        self.trackers: Dict[int, WakenessTracker] = {}

    def _pi_params(self, config) -> PiParams:
        return PiParams(
            delta=config.delta,
            view_len=config.view_len(),
            views_per_epoch=max(1, config.epoch_len() // config.view_len()),
        )

    def on_slot(self, ctx: AdversaryCtx) -> None:
        config = ctx.config
        params = self._pi_params(config)
        if self.view is None:
            self.view = _ChainView(ctx.hub, params)
        wakeness = self.params.get("wakeness", True)
        for p in ctx.awake_corrupt():
            self.view.observe(ctx.inboxes.get(p, []))
        if wakeness and ctx.registry is not None:
            for p in ctx.awake_corrupt():
                tracker = self.trackers.get(p)
                if tracker is None:
                    tracker = self.trackers[p] = WakenessTracker(
                        node=p, n=config.n, registry=ctx.registry, hub=ctx.hub,
                        master_seed=stable_seed(config.seed, "advtrk", p),
                        c_sample=config.param("c_sample"), delta=config.delta,
                        horizon=config.horizon)
                for m in ctx.inboxes.get(p, []):
                    if m.payload.get("kind") == "links":
                        tracker.ingest_links(m.payload, ctx.t)
                for payload in tracker.extend(ctx.t):
                    env = ctx.sign(p, payload, via=p)
                    ctx.send(env, BROADCAST, via=p)
        t = ctx.t
        if t % params.view_len != 0:
            return
        view = params.view_of(t)
        style = self.params.get("style", "equivocate")
        parent_ids = self.view.best_tip
        parent_id = parent_ids[-1]
        for p in ctx.awake_corrupt():
            ticket = ctx.vrf(p, ["ticket", view], via=p)
            seed_a = ctx.vrf(p, seed_input({"view": view, "parent": parent_id}, params), via=p)
            if ticket is None or seed_a is None:
                continue
            block_a = _fake_block(self.view.store, parent_id, view, params, p, seed_a, f"a{p}")
            prop_a = {"kind": "propose", "view": view, "slot": t, "block": block_a,
                      "parent_block": self.view.store.blocks.get(parent_id), "ticket": ticket}
            env_a = ctx.sign(p, prop_a, via=p)
            honest = sorted(ctx.honest)
            half = honest[: len(honest) // 2]
            rest = honest[len(honest) // 2:]
            if style == "selective":
                ctx.send(env_a, half, via=p, delay=1)
            elif style == "honest":
                ctx.send(env_a, BROADCAST, via=p)
            else:
                block_b = _fake_block(self.view.store, parent_id, view, params, p, seed_a, f"b{p}")
                prop_b = {"kind": "propose", "view": view, "slot": t, "block": block_b,
                          "parent_block": self.view.store.blocks.get(parent_id), "ticket": ticket}
                env_b = ctx.sign(p, prop_b, via=p)
                ctx.send(env_a, half, via=p, delay=1)
                ctx.send(env_b, rest, via=p, delay=config.delta)


class KeyTransferForwardSim(AdversaryStrategy):
    """Forward simulation strengthened by key transfer: one awake agent signs
    protocol traffic under every corrupt identity, fabricating current-view
    participation of corrupt nodes that went to sleep long ago. A block
    extending the agent's fresh view of the chain gets a fabricated vote from
    every corrupt identity, sent to the late-waking victim only, out-voting
    the thin live honest cohort at the victim's next decide. In external mode
    every cross-key signature raises a policy violation and only the agent's
    own single vote goes out, which no longer reaches a majority."""

    name = "key_transfer"

    def __init__(self, params=None):
        super().__init__(params)
        self.view = None
        self.done = False

    def on_slot(self, ctx: AdversaryCtx) -> None:
        config = ctx.config
        params = PiParams(delta=config.delta, view_len=config.view_len(),
                          views_per_epoch=max(1, config.epoch_len() // config.view_len()))
        if self.view is None:
            self.view = _ChainView(ctx.hub, params)
        for p in ctx.awake_corrupt():
            self.view.observe(ctx.inboxes.get(p, []))
        strike = self.params["strike_slot"]
        victim = self.params["victim"]
        if ctx.t != strike or self.done:
            return
        self.done = True
        agent = next(iter(ctx.awake_corrupt()), None)
        if agent is None:
            return
        store = self.view.store
        real = self.view.best_tip
        parent = real[-1]
        target_view = self.params.get("target_view", params.view_of(ctx.t + 1))
        proposer = None
        seed = None
        for q in sorted(ctx.corrupt):
            seed = ctx.vrf(q, seed_input({"view": target_view, "parent": parent}, params),
                           via=agent)
            if seed is not None:
                proposer = q
                break
        if proposer is None:
            return
        fake = _fake_block(store, parent, target_view, params, proposer, seed, f"kt{proposer}")
        fake_id = store.add(fake)
        chain_blocks = [store.get(b) for b in real[1:]] + [fake]
        for q in sorted(ctx.corrupt):
            vote = ctx.sign(q, {"kind": "vote", "view": target_view, "slot": ctx.t,
                                "block_id": fake_id}, via=agent)
            ctx.send(vote, [victim], via=agent, delay=1)
            tip = ctx.sign(q, {"kind": "tip", "view": target_view, "slot": ctx.t,
                               "chain": chain_blocks}, via=agent)
            ctx.send(tip, [victim], via=agent, delay=1)
            decide = ctx.sign(q, {"kind": "decide", "epoch": fake["epoch"], "slot": ctx.t,
                                  "block": fake}, via=agent)
            ctx.send(decide, [victim], via=agent, delay=1)


class ForwardSimulation(AdversaryStrategy):
    """Pre-computed forward simulation, legal for an external adversary: the
    corrupt cohort, before going to sleep, fabricates a continuation of the
    chain it currently knows and addresses it to a still-sleeping victim
    (the buffer is the delayed delivery). Works against naive rules; the
    epoch-recovery compiler outvotes the single stale fork level."""

    name = "forward_sim"

    def __init__(self, params=None):
        super().__init__(params)
        self.view = None
        self.done = False

    def on_slot(self, ctx: AdversaryCtx) -> None:
        config = ctx.config
        params = PiParams(delta=config.delta, view_len=config.view_len(),
                          views_per_epoch=max(1, config.epoch_len() // config.view_len()))
        if self.view is None:
            self.view = _ChainView(ctx.hub, params)
        for p in ctx.awake_corrupt():
            self.view.observe(ctx.inboxes.get(p, []))
        if ctx.t != self.params["strike_slot"] or self.done:
            return
        self.done = True
        victim = self.params["victim"]
        fake_len = self.params.get("fake_len", 4)
        store = self.view.store
        awake = ctx.awake_corrupt()
        if not awake:
            return
        base = self.view.best_tip
        parent = base[-1]
        base_view = store.get(parent)["view"] if parent != store.genesis_id else 0
        fake_ids = list(base)
        for i in range(fake_len):
            view = base_view + 1 + i
            proposer = awake[i % len(awake)]
            seed = ctx.vrf(proposer, seed_input({"view": view, "parent": parent}, params),
                           via=proposer)
            if seed is None:
                continue
            block = _fake_block(store, parent, view, params, proposer, seed, f"fs{proposer}")
            parent = store.add(block)
            fake_ids.append(parent)
        chain_blocks = [store.get(b) for b in fake_ids[1:]]
        for q in awake:
            tip = ctx.sign(q, {"kind": "tip", "view": params.view_of(ctx.t), "slot": ctx.t,
                               "chain": chain_blocks}, via=q)
            ctx.send(tip, [victim], via=q)
            for block in chain_blocks:
                if block["content"] and block["content"][0].startswith("fake-"):
                    env = ctx.sign(q, {"kind": "decide", "epoch": block["epoch"],
                                       "slot": ctx.t, "block": block}, via=q)
                    ctx.send(env, [victim], via=q)


class BackwardSimulation(AdversaryStrategy):
    """Late-waking corrupt cohort fabricates a long private history from
    genesis. The chain is valid and permissible in isolation (own seeds) but
    cannot carry fresh depth proofs for early slots, and under the
    wakeness-filtered protocol it loses the counted majority. The naive
    longest-chain control adopts it."""

    name = "backward_sim"

    def __init__(self, params=None):
        super().__init__(params)
        self.view = None
        self.done = False
        self.trackers: Dict[int, WakenessTracker] = {}

    def on_slot(self, ctx: AdversaryCtx) -> None:
        config = ctx.config
        params = PiParams(delta=config.delta, view_len=config.view_len(),
                          views_per_epoch=max(1, config.epoch_len() // config.view_len()))
        if self.view is None:
            self.view = _ChainView(ctx.hub, params)
        for p in ctx.awake_corrupt():
            self.view.observe(ctx.inboxes.get(p, []))
        if ctx.registry is not None:
            for p in ctx.awake_corrupt():
                tracker = self.trackers.get(p)
                if tracker is None:
                    tracker = self.trackers[p] = WakenessTracker(
                        node=p, n=config.n, registry=ctx.registry, hub=ctx.hub,
                        master_seed=stable_seed(config.seed, "advtrk", p),
                        c_sample=config.param("c_sample"), delta=config.delta,
                        horizon=config.horizon)
                for m in ctx.inboxes.get(p, []):
                    if m.payload.get("kind") == "links":
                        tracker.ingest_links(m.payload, ctx.t)
                for payload in tracker.extend(ctx.t):
                    env = ctx.sign(p, payload, via=p)
                    ctx.send(env, BROADCAST, via=p)
        if ctx.t != self.params["strike_slot"] or self.done:
            return
        self.done = True
        victim = self.params["victim"]
        fake_len = self.params.get("fake_len", 8)
        awake = ctx.awake_corrupt()
        if not awake:
            return
        store = self.view.store
        parent = store.genesis_id
        fake_ids = [parent]
        for view in range(1, fake_len + 1):
            proposer = awake[view % len(awake)]
            seed = ctx.vrf(proposer, seed_input({"view": view, "parent": parent}, params),
                           via=proposer)
            if seed is None:
                continue
            block = _fake_block(store, parent, view, params, proposer, seed, f"bs{proposer}")
            parent = store.add(block)
            fake_ids.append(parent)
        chain_blocks = [store.get(b) for b in fake_ids[1:]]
        for q in awake:
            tip = ctx.sign(q, {"kind": "tip", "view": params.view_of(ctx.t), "slot": ctx.t,
                               "chain": chain_blocks}, via=q)
            ctx.send(tip, [victim], via=q)
        # Bogus early-depth claims: links whose parents never existed.
        agent = awake[0]
        bogus = []
        for j in range(2, 5):
            ev = ctx.sign(agent, {"kind": "vdf_evidence", "input": f"{j:064x}",
                                  "value": f"{j + 1:064x}", "proof": "00", "slot": ctx.t},
                          via=agent)
            bogus.append({"input": f"{j:064x}", "value": f"{j + 1:064x}", "proof": "00",
                          "evidence": ev})
        env = ctx.sign(agent, {"kind": "links", "slot": ctx.t, "links": bogus}, via=agent)
        ctx.send(env, [victim], via=agent)


STRATEGIES = {
    "null": NullAdversary,
    "equivocate": EquivocateLeader,
    "key_transfer": KeyTransferForwardSim,
    "forward_sim": ForwardSimulation,
    "backward_sim": BackwardSimulation,
}


def make_strategy(spec: dict) -> AdversaryStrategy:
    name = spec.get("name", "null")
    cls = STRATEGIES.get(name)
    if cls is None:
        raise Unsatisfiable(f"unknown adversary strategy {name!r}")
    return cls(spec.get("params", {}))
