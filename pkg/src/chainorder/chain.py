"""Private hash chains and the association send/accept lifecycle.

Every user owns exactly one chain and is its only writer. A chain shares the
summary hash of its latest block with another chain by *sending* an
association; the receiver *accepts* it by packaging the hash into its next
block. Accepted references are the only cross-chain links, and they are what
the order engine later turns into a happens-before relation.
"""

from __future__ import annotations

import hashlib
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import (
    DuplicateAssociation,
    EmptyChain,
    SelfAssociation,
    UnknownBlock,
    UnknownChain,
    UnknownReference,
)

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)

ChainId = str
Digest = bytes


def sha256(data: bytes) -> Digest:
    return hashlib.sha256(data).digest()


def payload_digest(data: bytes | str) -> Digest:
    """Hash of a user's private payload; only this digest enters the chain."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return sha256(data)


def check_chain_id(chain_id: object) -> ChainId:
    if not isinstance(chain_id, str) or not chain_id:
        raise ValueError(f"chain id must be a nonempty string, got {chain_id!r}")
    if not all(c.isprintable() and not c.isspace() for c in chain_id):
        raise ValueError(f"chain id must contain only visible characters, got {chain_id!r}")
    return chain_id


def check_digest(value: object, what: str = "digest") -> Digest:
    if not isinstance(value, bytes) or len(value) != DIGEST_SIZE:
        raise ValueError(f"{what} must be {DIGEST_SIZE} bytes")
    return value


@dataclass(frozen=True)
class AssociationRef:
    """An accepted reference to a specific block of another chain."""

    from_chain: ChainId
    from_block_hash: Digest

    def sort_key(self) -> tuple[bytes, bytes]:
        return self.from_chain.encode("utf-8"), self.from_block_hash


@dataclass(frozen=True)
class PendingAssociation:
    """A sent association that the receiver has not yet packaged."""

    from_chain: ChainId
    from_block_hash: Digest
    to_chain: ChainId
    sent_at: int

    def as_ref(self) -> AssociationRef:
        return AssociationRef(self.from_chain, self.from_block_hash)


@dataclass(frozen=True)
class Block:
    chain: ChainId
    height: int
    prev_hash: Digest
    payload_hash: Digest
    accepted: tuple[AssociationRef, ...]
    summary_hash: Digest
    # untrusted decoration: never hashed, never read by ordering
    local_timestamp: Optional[int] = None

    def recompute_hash(self) -> Digest:
        return _digest_encoding(
            self.chain, self.height, self.prev_hash, self.payload_hash, self.accepted
        )


def _encode_id(chain_id: ChainId) -> bytes:
    raw = chain_id.encode("utf-8")
    return struct.pack(">I", len(raw)) + raw


def encode_block(
    chain: ChainId,
    height: int,
    prev_hash: Digest,
    payload_hash: Digest,
    accepted: Iterable[AssociationRef],
) -> bytes:
    """Canonical byte encoding of a block summary.

    Layout: length-prefixed chain id (u32 BE), height (u64 BE), prev_hash,
    payload_hash, ref count (u32 BE), then each ref as length-prefixed chain
    id plus 32-byte hash, refs sorted by (chain id bytes, hash bytes).
    """
    refs = sorted(accepted, key=AssociationRef.sort_key)
    parts = [
        _encode_id(chain),
        struct.pack(">Q", height),
        prev_hash,
        payload_hash,
        struct.pack(">I", len(refs)),
    ]
    for ref in refs:
        parts.append(_encode_id(ref.from_chain))
        parts.append(ref.from_block_hash)
    return b"".join(parts)


def _digest_encoding(chain, height, prev_hash, payload_hash, accepted) -> Digest:
    return sha256(encode_block(chain, height, prev_hash, payload_hash, accepted))


def hash_block(
    chain: ChainId,
    height: int,
    prev_hash: Digest,
    payload_hash: Digest,
    accepted: Iterable[AssociationRef],
) -> Digest:
    """Summary hash of a block: SHA-256 of its canonical encoding."""
    accepted = list(accepted)
    _check_refs(chain, accepted)
    check_digest(prev_hash, "prev_hash")
    check_digest(payload_hash, "payload_hash")
    if height < 0:
        raise ValueError("height must be nonnegative")
    return _digest_encoding(chain, height, prev_hash, payload_hash, accepted)


def _check_refs(chain: ChainId, accepted: list[AssociationRef]) -> None:
    seen = set()
    for ref in accepted:
        if ref.from_chain == chain:
            raise SelfAssociation(f"block of chain {chain!r} cannot accept its own hash")
        check_digest(ref.from_block_hash, "from_block_hash")
        if ref in seen:
            raise DuplicateAssociation(
                f"duplicate reference to {ref.from_chain}:{ref.from_block_hash.hex()[:12]}"
            )
        seen.add(ref)


@dataclass
class Chain:
    """A user-owned hash chain. Only its owner appends to it."""

    id: ChainId
    blocks: list[Block] = field(default_factory=list)
    forgotten: set[int] = field(default_factory=set)
    _by_hash: dict[Digest, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        check_chain_id(self.id)
        self._by_hash = {b.summary_hash: b.height for b in self.blocks}

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def latest(self) -> Block:
        if not self.blocks:
            raise EmptyChain(f"chain {self.id!r} has no blocks")
        return self.blocks[-1]

    def height_of(self, summary_hash: Digest) -> Optional[int]:
        h = self._by_hash.get(summary_hash)
        if h is None or h >= len(self.blocks) or self.blocks[h].summary_hash != summary_hash:
            return None
        return h


@dataclass
class NetworkSnapshot:
    """All chains at one instant plus associations still in flight."""

    chains: dict[ChainId, Chain] = field(default_factory=dict)
    pending: list[PendingAssociation] = field(default_factory=list)

    @classmethod
    def with_chains(cls, ids: Iterable[ChainId]) -> "NetworkSnapshot":
        snap = cls()
        for chain_id in ids:
            snap.add_chain(chain_id)
        return snap

    def add_chain(self, chain_id: ChainId) -> Chain:
        check_chain_id(chain_id)
        if chain_id in self.chains:
            raise ValueError(f"duplicate chain id {chain_id!r}")
        chain = self.chains[chain_id] = Chain(chain_id)
        return chain

    def chain(self, chain_id: ChainId) -> Chain:
        try:
            return self.chains[chain_id]
        except KeyError:
            raise UnknownChain(f"unknown chain {chain_id!r}") from None

    def resolve(self, ref: AssociationRef) -> Optional[Block]:
        chain = self.chains.get(ref.from_chain)
        if chain is None:
            return None
        h = chain.height_of(ref.from_block_hash)
        return None if h is None else chain.blocks[h]

    def pending_for(self, to: ChainId) -> list[PendingAssociation]:
        return [p for p in self.pending if p.to_chain == to]

    def block_count(self) -> int:
        return sum(len(c) for c in self.chains.values())


def append_block(
    chain: Chain,
    payload_hash: Digest,
    accepted: Iterable[AssociationRef] = (),
    *,
    snapshot: Optional[NetworkSnapshot] = None,
    local_timestamp: Optional[int] = None,
) -> Block:
    """Extend ``chain`` by one block and return it.

    When ``snapshot`` is given every reference must resolve in it.
    """
    accepted = sorted(accepted, key=AssociationRef.sort_key)
    if snapshot is not None:
        for ref in accepted:
            if snapshot.resolve(ref) is None:
                raise UnknownReference(
                    f"{ref.from_chain}:{ref.from_block_hash.hex()} does not resolve"
                )
    height = len(chain.blocks)
    prev_hash = chain.blocks[-1].summary_hash if chain.blocks else ZERO_DIGEST
    summary = hash_block(chain.id, height, prev_hash, payload_hash, accepted)
    block = Block(
        chain=chain.id,
        height=height,
        prev_hash=prev_hash,
        payload_hash=payload_hash,
        accepted=tuple(accepted),
        summary_hash=summary,
        local_timestamp=local_timestamp,
    )
    chain.blocks.append(block)
    chain._by_hash[summary] = height
    return block


def send_association(
    snapshot: NetworkSnapshot, from_chain: ChainId, to_chain: ChainId, tick: int
) -> PendingAssociation:
    """Offer ``from_chain``'s latest summary hash to ``to_chain``."""
    if from_chain == to_chain:
        raise SelfAssociation(f"chain {from_chain!r} cannot associate with itself")
    source = snapshot.chain(from_chain)
    snapshot.chain(to_chain)
    pending = PendingAssociation(from_chain, source.latest.summary_hash, to_chain, tick)
    snapshot.pending.append(pending)
    return pending


def accept_pending(
    snapshot: NetworkSnapshot,
    to: ChainId,
    payload_hash: Digest,
    *,
    tick: Optional[int] = None,
    local_timestamp: Optional[int] = None,
) -> Block:
    """Package every acceptable pending association for ``to`` into a new block.

    With ``tick`` given, only associations sent strictly before it qualify;
    later ones stay pending. Duplicate hashes collapse to one reference.
    """
    chain = snapshot.chain(to)
    taken, kept = [], []
    for p in snapshot.pending:
        if p.to_chain == to and (tick is None or p.sent_at < tick):
            taken.append(p)
        else:
            kept.append(p)
    refs = list(dict.fromkeys(p.as_ref() for p in taken))
    block = append_block(
        chain, payload_hash, refs, snapshot=snapshot, local_timestamp=local_timestamp
    )
    snapshot.pending = kept
    return block


def drop_pending(snapshot: NetworkSnapshot, to: ChainId) -> int:
    """Decline every pending association addressed to ``to``."""
    snapshot.chain(to)
    before = len(snapshot.pending)
    snapshot.pending = [p for p in snapshot.pending if p.to_chain != to]
    return before - len(snapshot.pending)


def forget_payload(chain: Chain, height: int) -> Chain:
    """Discard the private payload behind a block; every hash stays in place."""
    if not 0 <= height < len(chain.blocks):
        raise UnknownBlock(f"chain {chain.id!r} has no block at height {height}")
    chain.forgotten.add(height)
    return chain


# --- verification -----------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    chain: ChainId
    height: Optional[int]
    detail: str = ""

    def __str__(self) -> str:
        where = self.chain if self.height is None else f"{self.chain}:{self.height}"
        return f"{where} {self.kind}" + (f": {self.detail}" if self.detail else "")


def verify_chain(chain: Chain) -> list[Violation]:
    """Check heights, genesis, hash linkage and summary hashes.

    Linkage is checked against the *recomputed* hash of the predecessor, so a
    tampered field shows up at its own height and at the next one.
    Returns an empty list when the chain is intact.
    """
    out: list[Violation] = []
    recomputed_prev: Optional[Digest] = None
    for k, block in enumerate(chain.blocks):
        if block.chain != chain.id:
            out.append(Violation("chain_id", chain.id, k, f"block claims chain {block.chain!r}"))
        if block.height != k:
            out.append(Violation("height", chain.id, k, f"stored height {block.height}"))
        if k == 0:
            if block.prev_hash != ZERO_DIGEST:
                out.append(Violation("genesis_prev_hash", chain.id, k, "genesis prev_hash not zero"))
        elif block.prev_hash != recomputed_prev:
            out.append(Violation("prev_hash", chain.id, k, "does not match predecessor"))
        seen = set()
        for ref in block.accepted:
            if ref.from_chain == block.chain:
                out.append(Violation("self_reference", chain.id, k))
            if ref in seen:
                out.append(Violation("duplicate_reference", chain.id, k))
            seen.add(ref)
        try:
            recomputed = block.recompute_hash()
        except (TypeError, struct.error):
            recomputed = None
        if recomputed != block.summary_hash:
            out.append(Violation("summary_hash", chain.id, k, "does not match recomputation"))
        recomputed_prev = recomputed
    for h in sorted(chain.forgotten):
        if not 0 <= h < len(chain.blocks):
            out.append(Violation("forgotten_range", chain.id, h, "forgotten height out of range"))
    return out


def _hash_index(snapshot: NetworkSnapshot) -> dict[tuple[ChainId, Digest], int]:
    index = {}
    for cid, chain in snapshot.chains.items():
        for k, block in enumerate(chain.blocks):
            index[(cid, block.summary_hash)] = k
    return index


def verify_snapshot(snapshot: NetworkSnapshot) -> list[Violation]:
    """Verify every chain, every cross reference, and acyclicity.

    References are resolved by the stored summary hash of the target block;
    the target's recomputed hash must also agree. Pending associations must
    point at existing blocks too.
    """
    out: list[Violation] = []
    for cid in sorted(snapshot.chains):
        chain = snapshot.chains[cid]
        if chain.id != cid:
            out.append(Violation("chain_id", cid, None, f"keyed under {cid!r} but named {chain.id!r}"))
        out.extend(verify_chain(chain))

    index = _hash_index(snapshot)
    preds: dict[tuple[ChainId, int], list[tuple[ChainId, int]]] = defaultdict(list)
    for cid in sorted(snapshot.chains):
        for k, block in enumerate(snapshot.chains[cid].blocks):
            if k > 0:
                preds[(cid, k)].append((cid, k - 1))
            for ref in block.accepted:
                h = index.get((ref.from_chain, ref.from_block_hash))
                if h is None:
                    out.append(Violation(
                        "unresolved_reference", cid, k,
                        f"{ref.from_chain}:{ref.from_block_hash.hex()[:16]} not found",
                    ))
                    continue
                target = snapshot.chains[ref.from_chain].blocks[h]
                if target.recompute_hash() != ref.from_block_hash:
                    out.append(Violation(
                        "reference_hash", cid, k,
                        f"{ref.from_chain}:{h} recomputes to a different hash",
                    ))
                preds[(cid, k)].append((ref.from_chain, h))

    for p in snapshot.pending:
        if (p.from_chain, p.from_block_hash) not in index:
            out.append(Violation(
                "unresolved_pending", p.from_chain, None,
                f"pending to {p.to_chain} carries unknown hash {p.from_block_hash.hex()[:16]}",
            ))
        if p.to_chain not in snapshot.chains:
            out.append(Violation("unresolved_pending", p.from_chain, None, f"unknown receiver {p.to_chain!r}"))
        if p.to_chain == p.from_chain:
            out.append(Violation("self_reference", p.from_chain, None, "pending to itself"))

    stuck = _cyclic_nodes(snapshot, preds)
    if stuck:
        first = ", ".join(f"{c}:{h}" for c, h in stuck[:6])
        out.append(Violation("cycle", stuck[0][0], stuck[0][1], f"{len(stuck)} blocks on or behind a cycle ({first})"))
    return out


def _cyclic_nodes(snapshot, preds) -> list[tuple[ChainId, int]]:
    nodes = [(cid, k) for cid in sorted(snapshot.chains) for k in range(len(snapshot.chains[cid]))]
    succs = defaultdict(list)
    indeg = {n: 0 for n in nodes}
    for node, ps in preds.items():
        for p in ps:
            succs[p].append(node)
            indeg[node] += 1
    ready = [n for n in nodes if indeg[n] == 0]
    done = 0
    while ready:
        n = ready.pop()
        done += 1
        for s in succs[n]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
    if done == len(nodes):
        return []
    return sorted(n for n in nodes if indeg[n] > 0)

