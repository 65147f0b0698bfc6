"""Independent brute-force oracles for certifying expected test values.

These share only the oracle PRFs with production code (so hashes agree) and
recompute everything else by explicit enumeration on tiny instances.
"""

from typing import Dict, List, Optional, Tuple

from .config import INFINITE, ParticipationSchedule


def brute_window_count(schedule: ParticipationSchedule, t: int, t_forward, t_backward) -> int:
    """f(t, Tf, Tb) by literal set union over the clipped window."""
    lo = 0 if t_forward == INFINITE else max(0, t - int(t_forward))
    hi = schedule.horizon - 1 if t_backward == INFINITE else min(schedule.horizon - 1,
                                                                 t + int(t_backward))
    members = set()
    for tau in range(lo, hi + 1):
        for p in range(schedule.n):
            if schedule.corrupt[p] and schedule.awake_at(p, tau):
                members.add(p)
    return len(members)


def brute_ancestor(bid: str, ancestor: str, parents: Dict[str, Optional[str]]) -> bool:
    """Path-enumeration ground truth for extends()."""
    cur = bid
    while cur is not None:
        if cur == ancestor:
            return True
        cur = parents[cur]
    return False


def brute_gpe_validity(n: int, corrupt: List[int], seeds: range,
                       adversary: Optional[dict] = None) -> Tuple[float, int]:
    """Empirical frequency of views where every honest node outputs grade 1
    on a block whose content was some honest node's input."""
    from .engine import gpe_round

    honest = [p for p in range(n) if p not in corrupt]
    inputs = {p: f"input-p{p}" for p in honest}
    wins = 0
    total = 0
    for seed in seeds:
        outcomes, trace = gpe_round(n, corrupt, seed, adversary=adversary, inputs=inputs)
        total += 1
        if len(outcomes) < len(honest):
            continue
        ids = {bid for bid, _g in outcomes.values()}
        grades = {g for _b, g in outcomes.values()}
        if len(ids) != 1 or grades != {1}:
            continue
        bid = next(iter(ids))
        if bid is None:
            continue
        block = None
        for _t, _node, b, blk in trace.decided_blocks:
            if b == bid:
                block = blk
                break
        if block is None:
            continue
        if any(inputs[p] in block["content"] for p in honest):
            wins += 1
    return wins / total if total else 0.0, total
