"""Canonical serialization helpers.

Every hashed, signed, or traced object goes through the same canonical
encoding (sorted-key compact JSON, UTF-8) so byte-identical replay holds
across runs and platforms. Trace files are length-prefixed records of the
same encoding, after a one-line text header.
"""

import hashlib
import json
import struct
from typing import Any, BinaryIO, Iterator


def encode(obj: Any) -> bytes:
    """Canonical byte encoding of a JSON-able object."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def decode(data: bytes) -> Any:
    return json.loads(data.decode("utf-8"))


def write_record(fh: BinaryIO, obj: Any) -> None:
    blob = encode(obj)
    fh.write(struct.pack(">I", len(blob)))
    fh.write(blob)


def read_records(fh: BinaryIO) -> Iterator[Any]:
    while True:
        head = fh.read(4)
        if not head:
            return
        if len(head) < 4:
            raise ValueError("truncated record header")
        (size,) = struct.unpack(">I", head)
        blob = fh.read(size)
        if len(blob) < size:
            raise ValueError("truncated record body")
        yield decode(blob)


def stable_seed(*items: Any) -> int:
    """Reproducible 64-bit integer derived from arbitrary repr-able items."""
    s = "|".join(map(repr, items)).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(s, digest_size=8).digest(), "big")


def config_digest(config_dict: dict) -> str:
    """Seed-inclusive fingerprint of a scenario config (plain sha256, not oracle-keyed)."""
    return hashlib.sha256(encode(config_dict)).hexdigest()[:16]
