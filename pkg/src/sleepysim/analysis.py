"""Post-hoc trace checkers and metrics.

Everything here recomputes from the persisted trace alone: prefix
consistency of honest logs, bounded-delay inclusion of inputs, decision
latency, communication, synchrony and policy scans, depth-timing of chain
values, and d-validity of wakeness vectors.
"""

import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .blocks import BlockStore, block_bytes
from .codec import encode
from .config import ParticipationSchedule
from .errors import CorruptTrace
from .oracles import OracleHub


def _schedule_of(trace) -> ParticipationSchedule:
    return ParticipationSchedule.from_dict(trace.meta["schedule"])


def _honest_of(trace) -> List[int]:
    sched = _schedule_of(trace)
    return sched.honest_set()


def log_series(trace) -> Dict[int, List[Tuple[int, list, list]]]:
    """Per-node reconstruction: list of (slot, log, chain) after each change."""
    genesis = trace.meta.get("genesis")
    series: Dict[int, List[Tuple[int, list, list]]] = {}
    current_log: Dict[int, list] = {}
    current_chain: Dict[int, list] = {}
    for t, node, mode, entries, chain_ids in trace.log_events:
        log = current_log.setdefault(node, [])
        chain = current_chain.setdefault(node, [genesis])
        if mode == "delta":
            log = log + list(entries)
            chain = chain + list(chain_ids)
        else:
            log = list(entries)
            chain = list(chain_ids)
        current_log[node] = log
        current_chain[node] = chain
        series.setdefault(node, []).append((t, log, chain))
    return series


def log_at(series, node: int, t: int) -> Tuple[list, list]:
    """Node's (log, chain) as of slot t (post-step)."""
    log: list = []
    chain: list = []
    for slot, lg, ch in series.get(node, []):
        if slot <= t:
            log, chain = lg, ch
        else:
            break
    return log, chain


# ---------------------------------------------------------------------------
# safety and liveness
# ---------------------------------------------------------------------------

@dataclass
class SafetyReport:
    violations: List[tuple] = field(default_factory=list)  # (t, i, j, index)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_safety(trace) -> SafetyReport:
    """Prefix consistency of every honest pair's logs at every slot."""
    honest = set(_honest_of(trace))
    current: Dict[int, list] = {}
    report = SafetyReport()
    series_events = [e for e in trace.log_events if e[1] in honest]
    for t, node, mode, entries, _chain in series_events:
        if mode == "delta":
            new = current.get(node, []) + list(entries)
        else:
            new = list(entries)
        current[node] = new
        for other, other_log in sorted(current.items()):
            if other == node:
                continue
            m = min(len(new), len(other_log))
            for idx in range(m):
                if new[idx] != other_log[idx]:
                    report.violations.append((t, node, other, idx))
                    break
    return report


def scan_monotonicity(trace) -> List[tuple]:
    """Honest log replacements (a decided prefix was rolled back)."""
    honest = set(_honest_of(trace))
    return [(t, node) for t, node, mode, _e, _c in trace.log_events
            if mode == "full" and node in honest]


@dataclass
class LivenessReport:
    misses: List[tuple] = field(default_factory=list)     # (payload, handed, node)
    unchecked: List[tuple] = field(default_factory=list)  # deadline beyond horizon

    @property
    def ok(self) -> bool:
        return not self.misses


def _first_inclusion(trace, honest) -> Dict[int, Dict[str, int]]:
    first: Dict[int, Dict[str, int]] = {p: {} for p in honest}
    current: Dict[int, list] = {}
    for t, node, mode, entries, _chain in trace.log_events:
        if node not in first:
            continue
        if mode == "delta":
            added = list(entries)
            current[node] = current.get(node, []) + added
        else:
            added = list(entries)
            current[node] = list(entries)
        for payload in added:
            first[node].setdefault(payload, t)
    return first


def check_liveness(trace, ell: int) -> LivenessReport:
    """Every input handed to an awake honest node at slot t must be in every
    honest log at every slot >= t + ell where that node is awake."""
    sched = _schedule_of(trace)
    honest = set(sched.honest_set())
    horizon = sched.horizon
    first = _first_inclusion(trace, honest)
    report = LivenessReport()
    for slot, node, payload, handed in trace.env_events:
        if node not in honest or handed is None:
            continue
        deadline = handed + ell
        if deadline >= horizon:
            report.unchecked.append((payload, handed))
            continue
        for j in sorted(honest):
            row = sched.awake_rows[j] >> deadline
            if not row:
                continue  # never awake after the deadline
            first_awake = deadline + (row & -row).bit_length() - 1
            got = first[j].get(payload)
            if got is None or got > first_awake:
                report.misses.append((payload, handed, j))
    return report


@dataclass
class LatencyStats:
    mean_slots: Optional[float]
    median_slots: Optional[float]
    p95_slots: Optional[float]
    delta: int
    decided: int
    censored: int
    per_input: List[tuple] = field(default_factory=list)

    @property
    def mean_delta_units(self) -> Optional[float]:
        return None if self.mean_slots is None else self.mean_slots / self.delta


def latency_stats(trace) -> LatencyStats:
    """Per-input latency: handover slot to the first slot where every honest
    node awake at that slot reports the input in its log."""
    sched = _schedule_of(trace)
    honest = sorted(sched.honest_set())
    delta = trace.meta["delta"]
    first = _first_inclusion(trace, set(honest))
    horizon = sched.horizon
    latencies = []
    per_input = []
    censored = 0
    for slot, node, payload, handed in trace.env_events:
        if node not in first or handed is None:
            continue
        decided_slot = None
        for s in range(handed, horizon):
            ok = True
            anyone = False
            for j in honest:
                if (sched.awake_rows[j] >> s) & 1:
                    anyone = True
                    got = first[j].get(payload)
                    if got is None or got > s:
                        ok = False
                        break
            if ok and anyone:
                decided_slot = s
                break
        if decided_slot is None:
            censored += 1
            per_input.append((payload, handed, None))
        else:
            latencies.append(decided_slot - handed)
            per_input.append((payload, handed, decided_slot - handed))
    if latencies:
        mean = statistics.fmean(latencies)
        median = statistics.median(latencies)
        p95 = sorted(latencies)[max(0, int(0.95 * len(latencies)) - 1)]
    else:
        mean = median = p95 = None
    return LatencyStats(mean_slots=mean, median_slots=median, p95_slots=p95,
                        delta=delta, decided=len(latencies), censored=censored,
                        per_input=per_input)


# ---------------------------------------------------------------------------
# transport, policy, and oracle scans
# ---------------------------------------------------------------------------

def comm_stats(trace) -> dict:
    """Bits on the wire by message kind; point-to-point cost counts each
    recipient separately."""
    horizon = trace.meta["schedule"]["horizon"]
    by_kind: Dict[str, int] = {}
    links_series = [0] * max(horizon, 1)
    for t, _via, _signer, kind, _digest, nbytes, recipients, _claimed in trace.sends:
        bits = nbytes * 8 * len(recipients)
        by_kind[kind] = by_kind.get(kind, 0) + bits
        if kind == "links" and t < len(links_series):
            links_series[t] += bits
    total = sum(by_kind.values())
    wakeness_mean = statistics.fmean(links_series) if links_series else 0.0
    return {
        "total_bits": total,
        "by_kind": dict(sorted(by_kind.items())),
        "wakeness_bits_per_slot_mean": wakeness_mean,
        "wakeness_bits_series": links_series,
    }


def scan_synchrony(trace) -> List[tuple]:
    """A delivery must happen at the recipient's first awake slot at or after
    the nominal slot; equivalently no awake slot in [nominal, drain)."""
    sched = _schedule_of(trace)
    out = []
    for t, node, digest, _signer, send_slot, nominal, _body in trace.delivers:
        if nominal > send_slot + trace.meta["delta"]:
            out.append(("delay", t, node, digest))
            continue
        row = sched.awake_rows[node]
        for s in range(nominal, t):
            if (row >> s) & 1:
                out.append(("late", t, node, digest))
                break
    return out


def scan_no_loss(trace) -> List[tuple]:
    """Every send must reach every recipient that is awake at some slot in
    [send + delta, horizon)."""
    sched = _schedule_of(trace)
    delta = trace.meta["delta"]
    horizon = sched.horizon
    delivered = {(node, digest, signer)
                 for _t, node, digest, signer, _s, _n, _b in trace.delivers}
    dropped_nodes = {node for _t, node, _r in trace.drops}
    out = []
    for t, _via, signer, _kind, digest, _nbytes, recipients, _claimed in trace.sends:
        for r in recipients:
            lo = t + delta
            if lo >= horizon:
                continue
            if not (sched.awake_rows[r] >> lo):
                continue
            if (r, digest, signer) not in delivered and r not in dropped_nodes:
                out.append((t, r, digest))
    return out


def scan_no_asleep_action(trace) -> List[tuple]:
    """No physical send, oracle query, or honest log change while asleep."""
    sched = _schedule_of(trace)
    out = []
    for t, via, _signer, kind, digest, _b, _r, _c in trace.sends:
        if not sched.awake_at(via, t):
            out.append(("send", t, via, digest))
    for t, _oracle, caller, _owner, digest in trace.oracle_log:
        if not sched.awake_at(caller, t):
            out.append(("oracle", t, caller, digest))
    for t, node, _mode, _e, _c in trace.log_events:
        if not sched.awake_at(node, t):
            out.append(("log", t, node, ""))
    return out


def scan_policy(trace) -> dict:
    """Cross-key oracle usage; must be empty in external mode."""
    cross = [e for e in trace.oracle_log
             if e[1] in ("sign", "vrf") and e[2] != e[3]]
    return {
        "cross_key_queries": len(cross),
        "policy_violations": len(trace.policy_events),
    }


def scan_unforgeability(trace) -> List[tuple]:
    """Every delivered (verified) envelope must match a logged sign query of
    its claimed signer: accepted-but-never-signed means a forgery."""
    signed = {(owner, digest) for _t, oracle, _caller, owner, digest in trace.oracle_log
              if oracle == "sign"}
    out = []
    for t, node, _digest, signer, _s, _n, body in trace.delivers:
        if (signer, body) not in signed:
            out.append((t, node, signer, body))
    return out


def scan_depth_timing(trace) -> List[tuple]:
    """A verified depth-d value may not be first sent before slot d, and its
    prover must have an awake slot >= d - 1."""
    sched = _schedule_of(trace)
    out = []
    for value, depth, prover in trace.meta.get("links", []):
        first = trace.link_first_sent.get(value)
        if first is not None and first < depth:
            out.append(("early", value, depth, first))
        if prover >= 0:
            row = sched.awake_rows[prover] >> max(depth - 1, 0)
            if not row:
                out.append(("prover-asleep", value, depth, prover))
    return out


# ---------------------------------------------------------------------------
# wakeness validity
# ---------------------------------------------------------------------------

@dataclass
class ValidityReport:
    d: int
    soundness: List[tuple] = field(default_factory=list)
    completeness: List[tuple] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.soundness and not self.completeness


def check_d_valid(trace, d: Optional[int] = None, completeness: Optional[bool] = None,
                  allowance: Optional[int] = None) -> ValidityReport:
    """d-validity of recorded wakeness claims.

    Soundness: a bit at index j for owner q requires q awake at some slot
    >= j - d. Fluctuating traces are checked at d = 0 (the chain value
    cannot exist before slot j and only q can sign its last link); decaying
    traces at d = 3 * alpha (receipt-based epoch claims).

    Completeness (fluctuating only): chain depth can grow at most one per
    slot and crossing the network costs the synchrony bound, so the deepest
    expressible claim at slot j is the observed production frontier P*(j).
    An honest owner awake at j and j+1 (one slot to query the freshest held
    tip, one to ship the response) must, at every honest holder awake from
    j + allowance + 2 on, be deemed awake at index >= P*(j) - allowance:
    within the propagation allowance of the frontier. Warm-up slots below
    3 * allowance are skipped.
    """
    sched = _schedule_of(trace)
    protocol = trace.meta.get("protocol")
    delta = trace.meta["delta"]
    if d is None:
        d = 3 * trace.meta["alpha"] if protocol == "decaying_compiled" else 0
    if completeness is None:
        completeness = protocol == "fluctuating_compiled"
    if allowance is None:
        allowance = delta + 1
    report = ValidityReport(d=d)
    last_awake = {p: sched.last_awake(p) for p in range(sched.n)}
    for t, holder, owner, j in trace.bit_events:
        la = last_awake.get(owner)
        if la is None or la < j - d:
            report.soundness.append((t, holder, owner, j))
    if not completeness:
        return report
    import bisect
    honest = sched.honest_set()
    # Events arrive in increasing (depth, t) per (holder, owner) since only
    # maxima are recorded; first event with depth >= j gives the claim time.
    by_pair: Dict[Tuple[int, int], Tuple[list, list]] = {}
    for t, holder, owner, j in trace.bit_events:
        depths, times = by_pair.setdefault((holder, owner), ([], []))
        depths.append(j)
        times.append(t)
    horizon = sched.horizon
    warmup = 3 * allowance
    # Production frontier: deepest link first shipped by any slot <= j.
    depth_of = {value: depth for value, depth, _p in trace.meta.get("links", [])}
    frontier = [0] * max(horizon, 1)
    for value, t in trace.link_first_sent.items():
        d = depth_of.get(value)
        if d is not None and 0 <= t < horizon and d > frontier[t]:
            frontier[t] = d
    for s in range(1, horizon):
        frontier[s] = max(frontier[s], frontier[s - 1])
    for q in honest:
        row = sched.awake_rows[q]
        for j in range(warmup, horizon - (allowance + 2)):
            if (row >> j) & 3 != 3:
                continue  # owner needs slots j (query) and j+1 (ship)
            target = frontier[j] - allowance
            if target <= 0:
                continue
            for h in honest:
                if h == q:
                    continue
                hrow = sched.awake_rows[h] >> (j + allowance + 2)
                if not hrow:
                    continue
                deadline = j + allowance + 2 + (hrow & -hrow).bit_length() - 1
                pair = by_pair.get((h, q))
                got = None
                if pair is not None:
                    i = bisect.bisect_left(pair[0], target)
                    if i < len(pair[0]):
                        got = pair[1][i]
                if got is None or got > deadline:
                    report.completeness.append((q, j, h, deadline))
    return report


# ---------------------------------------------------------------------------
# integrity and the assembled report
# ---------------------------------------------------------------------------

def verify_integrity(trace) -> None:
    """Recompute decided block identities against recorded ids."""
    seed = trace.meta.get("seed")
    lam = trace.meta.get("lambda_bits", 32)
    if not isinstance(seed, int):
        raise CorruptTrace("missing seed in meta")
    hub = OracleHub(master_seed=seed, lambda_bits=lam)
    for t, node, bid, block in trace.decided_blocks:
        if hub.hash_bytes(block_bytes(block)) != bid:
            raise CorruptTrace(f"block record at slot {t} node {node} fails hash check")


@dataclass
class Report:
    config_digest: str
    seed: int
    protocol: str
    mode: str
    safety_violations: int
    safety_locations: list
    monotonicity_violations: int
    liveness_misses: int
    liveness_unchecked: int
    latency_mean_delta: Optional[float]
    latency_p95_delta: Optional[float]
    decided_inputs: int
    censored_inputs: int
    comm_total_bits: int
    wakeness_bits_per_slot: float
    synchrony_violations: int
    asleep_actions: int
    cross_key_queries: int
    policy_violations: int
    depth_timing_violations: int
    wakeness_soundness_violations: int
    wakeness_completeness_violations: int
    attack: str
    ell: Optional[int] = None

    def to_dict(self) -> dict:
        return dict(sorted(self.__dict__.items()))

    def to_json(self) -> str:
        return encode(self.to_dict()).decode()


def build_report(trace, ell: Optional[int] = None) -> Report:
    safety = check_safety(trace)
    mono = scan_monotonicity(trace)
    ell_val = ell if ell is not None else 80 * trace.meta["delta"]
    liveness = check_liveness(trace, ell_val)
    lat = latency_stats(trace)
    comm = comm_stats(trace)
    sync = scan_synchrony(trace)
    asleep = scan_no_asleep_action(trace)
    policy = scan_policy(trace)
    depth = scan_depth_timing(trace)
    validity = check_d_valid(trace)
    violated = len(safety.violations) > 0
    return Report(
        config_digest=trace.meta.get("config_digest", "?"),
        seed=trace.meta.get("seed", 0),
        protocol=trace.meta.get("protocol", "?"),
        mode=trace.meta.get("mode", "?"),
        safety_violations=len(safety.violations),
        safety_locations=[list(v) for v in safety.violations[:16]],
        monotonicity_violations=len(mono),
        liveness_misses=len(liveness.misses),
        liveness_unchecked=len(liveness.unchecked),
        latency_mean_delta=lat.mean_delta_units,
        latency_p95_delta=None if lat.p95_slots is None else lat.p95_slots / lat.delta,
        decided_inputs=lat.decided,
        censored_inputs=lat.censored,
        comm_total_bits=comm["total_bits"],
        wakeness_bits_per_slot=comm["wakeness_bits_per_slot_mean"],
        synchrony_violations=len(sync),
        asleep_actions=len(asleep),
        cross_key_queries=policy["cross_key_queries"],
        policy_violations=policy["policy_violations"],
        depth_timing_violations=len(depth),
        wakeness_soundness_violations=len(validity.soundness),
        wakeness_completeness_violations=len(validity.completeness),
        attack="succeeded" if violated else "blocked",
        ell=ell_val,
    )


def unpredictability_probe(trace, t: int, alpha_slots: int, node: int,
                           guess_chain: List[str]) -> bool:
    """True iff the guess strictly extends the node's decided chain at slot t
    and is a prefix of it at slot t + alpha."""
    series = log_series(trace)
    _log_t, chain_t = log_at(series, node, t)
    _log_f, chain_f = log_at(series, node, t + alpha_slots)
    if len(guess_chain) <= len(chain_t):
        return False
    if guess_chain[: len(chain_t)] != chain_t:
        return False
    if len(guess_chain) > len(chain_f):
        return False
    return chain_f[: len(guess_chain)] == guess_chain
