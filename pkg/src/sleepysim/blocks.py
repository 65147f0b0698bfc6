"""Hash-chained block model and chain predicates.

Blocks are plain dicts so they can ride inside signed message payloads.
Identity is the oracle hash of a documented byte layout: length-prefixed
fields in declared order (content entries, parent hash, view, epoch, seed
value, proposer). Genesis has empty content, null parent, view = epoch = 0,
empty seed, and no proposer.
"""

import struct
from typing import Dict, List, Optional

from .errors import UnresolvableParent
from .oracles import OracleHub


def make_block(content, parent: Optional[str], view: int, epoch: int,
               seed: Optional[dict], proposer: Optional[int]) -> dict:
    return {
        "content": list(content),
        "parent": parent,
        "view": view,
        "epoch": epoch,
        "seed": seed,
        "proposer": proposer,
    }


def genesis_block() -> dict:
    return make_block([], None, 0, 0, None, None)


def block_bytes(block: dict) -> bytes:
    """Canonical byte layout. Each field is length- or fixed-width encoded:

    [u32 entry count][u32 len + utf8]*  content, in order
    [u32 len + utf8]                    parent hash hex ("" for genesis)
    [i64][i64]                          view, epoch
    [u32 len + utf8]                    seed value hex ("" when absent)
    [i64]                               proposer (-1 when absent)
    """
    out = bytearray()
    content = block["content"]
    out += struct.pack(">I", len(content))
    for entry in content:
        raw = entry.encode("utf-8")
        out += struct.pack(">I", len(raw)) + raw
    parent = (block["parent"] or "").encode()
    out += struct.pack(">I", len(parent)) + parent
    out += struct.pack(">qq", block["view"], block["epoch"])
    seed = block["seed"]["value"].encode() if block.get("seed") else b""
    out += struct.pack(">I", len(seed)) + seed
    proposer = block["proposer"]
    out += struct.pack(">q", -1 if proposer is None else proposer)
    return bytes(out)


class BlockStore:
    """Content-addressed block set with memoized heights and validity."""

    def __init__(self, hub: OracleHub):
        self.hub = hub
        self.blocks: Dict[str, dict] = {}
        self._height: Dict[str, int] = {}
        self._valid: Dict[str, bool] = {}
        g = genesis_block()
        self.genesis_id = hub.hash_bytes(block_bytes(g))
        self.blocks[self.genesis_id] = g
        self._height[self.genesis_id] = 0
        self._valid[self.genesis_id] = True

    def block_id(self, block: dict) -> str:
        return self.hub.hash_bytes(block_bytes(block))

    def add(self, block: dict) -> str:
        bid = self.block_id(block)
        if bid not in self.blocks:
            self.blocks[bid] = block
        return bid

    def get(self, bid: str) -> dict:
        try:
            return self.blocks[bid]
        except KeyError:
            raise UnresolvableParent(bid)

    def height(self, bid: str) -> int:
        h = self._height.get(bid)
        if h is not None:
            return h
        path = []
        cur = bid
        while cur not in self._height:
            path.append(cur)
            parent = self.get(cur)["parent"]
            if parent is None:
                raise UnresolvableParent(cur)
            cur = parent
        h = self._height[cur]
        for node in reversed(path):
            h += 1
            self._height[node] = h
        return self._height[bid]

    def path(self, bid: str) -> List[str]:
        """Block ids from genesis to bid, inclusive."""
        out = [bid]
        cur = bid
        while cur != self.genesis_id:
            cur = self.get(cur)["parent"]
            if cur is None:
                raise UnresolvableParent(bid)
            out.append(cur)
        out.reverse()
        return out

    def extends(self, bid: str, ancestor: str) -> bool:
        """True iff bid == ancestor or ancestor lies on bid's path to genesis."""
        if bid == ancestor:
            return True
        ha = self.height(ancestor)
        hb = self.height(bid)
        if hb < ha:
            return False
        cur = bid
        for _ in range(hb - ha):
            cur = self.get(cur)["parent"]
        return cur == ancestor

    def conflicts(self, a: str, b: str) -> bool:
        return not self.extends(a, b) and not self.extends(b, a)

    def valid(self, bid: str) -> bool:
        """Ancestor validity plus strictly increasing (epoch, view) along the chain."""
        known = self._valid.get(bid)
        if known is not None:
            return known
        block = self.get(bid)
        parent_id = block["parent"]
        if parent_id is None:
            ok = bid == self.genesis_id
        elif not self.valid(parent_id):
            ok = False
        else:
            parent = self.get(parent_id)
            ok = parent["epoch"] < block["epoch"] or (
                parent["view"] < block["view"] and parent["epoch"] == block["epoch"]
            )
        self._valid[bid] = ok
        return ok
