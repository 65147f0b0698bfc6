"""Idealized cryptographic oracles as seeded random functions.

Signing, VRF, and VDF oracles are keyed PRFs over a per-execution master
seed, so every output is a fixed lambda-bit hex string fully determined by
(oracle id, key owner, input, master seed). The key-access policy
distinguishes the external adversary (every node may only query under its
own identity) from the standard one (corrupt nodes may use any corrupt
node's key). The delay oracle answers one batch per node per slot, with
responses becoming visible at the next slot.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .codec import encode
from .errors import AsleepCaller, BudgetExceeded, PolicyViolation, RateLimited


def key_access_allowed(mode: str, caller: int, key_owner: int, corrupt_set: Set[int]) -> bool:
    """External: self-keys only. Standard: self, or corrupt caller using a corrupt key."""
    if caller == key_owner:
        return True
    if mode == "standard":
        return caller in corrupt_set and key_owner in corrupt_set
    return False


def signed_body_digest(env: dict) -> str:
    """Digest of the signed body, matching the sign query log entries."""
    return hashlib.sha256(encode([env["payload"], env["claimed_slot"]])).hexdigest()[:16]


@dataclass
class VdfOutput:
    value: str
    proof: str
    input: str
    query_slot: int
    response_slot: int
    caller: int


@dataclass
class OracleHub:
    master_seed: int
    lambda_bits: int = 32
    mode: str = "external"
    corrupt_set: Set[int] = field(default_factory=set)
    query_budget: int = 0                 # 0 = unlimited (standalone/unit-test use)
    awake_fn: Optional[Callable[[int, int], bool]] = None

    def __post_init__(self):
        self._key = self.master_seed.to_bytes(8, "big")
        self._digest_size = self.lambda_bits // 8
        self._slot = -1
        self._vdf_called: Set[int] = set()
        self._vdf_pending: Dict[int, List[VdfOutput]] = {}
        self._budget_used: Dict[int, int] = {}
        self.query_log: List[tuple] = []    # (slot, oracle, caller, key_owner, digest)
        self.policy_events: List[tuple] = []  # (slot, oracle, caller, key_owner)
        self.sign_index: Set[Tuple[int, str]] = set()  # (key_owner, digest) for forgery scans

    # ---- primitive PRF ----

    def _prf(self, oracle_id: str, key_owner, data: bytes) -> str:
        h = hashlib.blake2b(key=self._key, digest_size=self._digest_size)
        h.update(oracle_id.encode())
        h.update(b"\x00")
        h.update(b"" if key_owner is None else str(key_owner).encode())
        h.update(b"\x00")
        h.update(data)
        return h.hexdigest()

    def hash_bytes(self, data: bytes) -> str:
        """Seeded random-oracle hash of raw bytes."""
        return self._prf("hash", None, data)

    def hash(self, obj) -> str:
        """Seeded random-oracle hash of a canonical-encoded object."""
        return self._prf("hash", None, encode(obj))

    # ---- slot bookkeeping ----

    def begin_slot(self, t: int) -> None:
        self._slot = t
        self._vdf_called.clear()
        self._budget_used.clear()

    def _check_caller(self, caller: int, t: int) -> None:
        if self.awake_fn is not None and not self.awake_fn(caller, t):
            raise AsleepCaller(f"node {caller} asleep at slot {t}")

    def _charge(self, caller: int, amount: int = 1) -> None:
        if not self.query_budget:
            return
        used = self._budget_used.get(caller, 0) + amount
        if used > self.query_budget:
            raise BudgetExceeded(f"node {caller} exceeded {self.query_budget} queries in one slot")
        self._budget_used[caller] = used

    def _check_policy(self, oracle: str, caller: int, key_owner: int, t: int) -> None:
        if not key_access_allowed(self.mode, caller, key_owner, self.corrupt_set):
            self.policy_events.append((t, oracle, caller, key_owner))
            raise PolicyViolation(
                f"{self.mode} adversary: node {caller} may not query {oracle} under key of {key_owner}"
            )

    # ---- signing ----

    def sign(self, caller: int, key_owner: int, payload, t: int, claimed_slot: Optional[int] = None) -> dict:
        """Produce a signed envelope. Honest senders claim the true slot."""
        self._check_caller(caller, t)
        self._check_policy("sign", caller, key_owner, t)
        self._charge(caller)
        if claimed_slot is None:
            claimed_slot = t
        body = encode([payload, claimed_slot])
        tag = self._prf("sig", key_owner, body)
        digest = hashlib.sha256(body).hexdigest()[:16]
        self.query_log.append((t, "sign", caller, key_owner, digest))
        self.sign_index.add((key_owner, digest))
        return {"payload": payload, "signer": key_owner, "tag": tag, "claimed_slot": claimed_slot}

    def verify_envelope(self, env: dict) -> bool:
        try:
            body = encode([env["payload"], env["claimed_slot"]])
            return env["tag"] == self._prf("sig", env["signer"], body)
        except (KeyError, TypeError):
            return False

    def was_signed(self, env: dict) -> bool:
        """True iff a matching sign query was actually issued (forgery scan)."""
        body = encode([env["payload"], env["claimed_slot"]])
        return (env["signer"], hashlib.sha256(body).hexdigest()[:16]) in self.sign_index

    # ---- VRF ----

    def vrf_eval(self, caller: int, key_owner: int, input_obj, t: int) -> dict:
        self._check_caller(caller, t)
        self._check_policy("vrf", caller, key_owner, t)
        self._charge(caller)
        data = encode(input_obj)
        self.query_log.append((t, "vrf", caller, key_owner, hashlib.sha256(data).hexdigest()[:16]))
        return {
            "value": self._prf("vrf", key_owner, data),
            "proof": self._prf("vrfpi", key_owner, data),
        }

    def vrf_verify(self, key_owner: int, input_obj, value: str, proof: str) -> bool:
        data = encode(input_obj)
        return value == self._prf("vrf", key_owner, data) and proof == self._prf("vrfpi", key_owner, data)

    # ---- VDF ----

    def vdf_eval(self, caller: int, inputs: Sequence[str], t: int,
                 key_owner: Optional[int] = None) -> List[VdfOutput]:
        """One batched delay query per identity per slot; outputs usable from
        t+1. Like the other oracles the delay function is keyed, so distinct
        identities extending the same value produce distinct chains."""
        self._check_caller(caller, t)
        if key_owner is None:
            key_owner = caller
        self._check_policy("vdf", caller, key_owner, t)
        if key_owner in self._vdf_called:
            raise RateLimited(f"node {key_owner} already called the delay oracle at slot {t}")
        self._vdf_called.add(key_owner)
        self._charge(caller, max(1, len(inputs)))
        outs = []
        for inp in inputs:
            data = inp.encode()
            outs.append(VdfOutput(
                value=self._prf("vdf", key_owner, data),
                proof=self._prf("vdfpi", key_owner, data),
                input=inp,
                query_slot=t,
                response_slot=t + 1,
                caller=key_owner,
            ))
            self.query_log.append((t, "vdf", caller, key_owner, inp[:16]))
        self._vdf_pending.setdefault(key_owner, []).extend(outs)
        return outs

    def take_vdf_responses(self, node: int, t: int) -> List[VdfOutput]:
        """Pop responses whose response slot has been reached."""
        pending = self._vdf_pending.get(node)
        if not pending:
            return []
        ready = [o for o in pending if o.response_slot <= t]
        if ready:
            self._vdf_pending[node] = [o for o in pending if o.response_slot > t]
        return ready

    def vdf_verify(self, key_owner: int, inp: str, value: str, proof: str) -> bool:
        data = inp.encode()
        return (value == self._prf("vdf", key_owner, data)
                and proof == self._prf("vdfpi", key_owner, data))
