"""Emergent time order over a network snapshot.

The happens-before DAG has one node per block and is generated by two kinds
of edges: intra-chain succession and accepted associations (referenced block
to accepting block). Nothing about it is decided when blocks are written; it
is derived afterwards from whatever snapshot a reader holds.

Reachability is answered from per-node ancestor bitsets (Python ints), so
``precedes`` is O(1) after a single pass over the DAG.
"""

from __future__ import annotations

import enum
import heapq
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Mapping, NamedTuple, Optional

from .chain import ChainId, NetworkSnapshot, verify_snapshot
from .errors import (
    CyclicReferences,
    InvalidSnapshot,
    InvalidWindow,
    NotOrdered,
    Overflow,
    TooLarge,
    UnknownEvent,
    UnknownReference,
)

DEFAULT_COUNT_BOUND = 20


class EventId(NamedTuple):
    """Creation of block ``height`` on ``chain``."""

    chain: ChainId
    height: int

    def __str__(self) -> str:
        return f"{self.chain}:{self.height}"

    @classmethod
    def parse(cls, text: str) -> "EventId":
        chain, sep, height = text.rpartition(":")
        if not sep or not chain or not height.isdigit():
            raise ValueError(f"expected chain:height, got {text!r}")
        return cls(chain, int(height))


def event_key(e: EventId) -> tuple[bytes, int]:
    """Tie-break key: chain id bytes ascending, then height ascending."""
    return e.chain.encode("utf-8"), e.height


class OrderRelation(enum.Enum):
    BEFORE = "before"
    AFTER = "after"
    CONCURRENT = "concurrent"
    EQUAL = "equal"


class HappensBeforeDag:
    """Immutable DAG over block-creation events.

    Node indices follow the canonical tie-break order, so sorting indices
    sorts events. Construction rejects cycles.
    """

    def __init__(self, nodes: Iterable[EventId], edges: Iterable[tuple[EventId, EventId]]):
        self.nodes = frozenset(EventId(*n) for n in nodes)
        self.edges = frozenset((EventId(*a), EventId(*b)) for a, b in edges)
        self.order = sorted(self.nodes, key=event_key)
        self.index = {e: i for i, e in enumerate(self.order)}
        n = len(self.order)
        self.succs: list[list[int]] = [[] for _ in range(n)]
        self.preds: list[list[int]] = [[] for _ in range(n)]
        for a, b in self.edges:
            if a not in self.index or b not in self.index:
                raise UnknownEvent(f"edge {a}->{b} names an event outside the node set")
            self.succs[self.index[a]].append(self.index[b])
            self.preds[self.index[b]].append(self.index[a])
        for lst in self.succs:
            lst.sort()
        for lst in self.preds:
            lst.sort()
        self.topo = self._kahn()

    def _kahn(self) -> list[int]:
        indeg = [len(p) for p in self.preds]
        heap = [i for i, d in enumerate(indeg) if d == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            i = heapq.heappop(heap)
            out.append(i)
            for s in self.succs[i]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    heapq.heappush(heap, s)
        if len(out) != len(self.order):
            stuck = [str(self.order[i]) for i, d in enumerate(indeg) if d > 0]
            raise CyclicReferences(f"cycle among {len(stuck)} events: {', '.join(stuck[:8])}")
        return out

    def __len__(self) -> int:
        return len(self.order)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HappensBeforeDag):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.nodes, self.edges))

    def __repr__(self) -> str:
        return f"HappensBeforeDag({len(self.nodes)} nodes, {len(self.edges)} edges)"

    def cross_edges(self) -> list[tuple[EventId, EventId]]:
        return sorted(
            ((a, b) for a, b in self.edges if a.chain != b.chain),
            key=lambda e: (event_key(e[0]), event_key(e[1])),
        )

    def chains(self) -> list[ChainId]:
        return sorted({e.chain for e in self.nodes}, key=lambda c: c.encode("utf-8"))

    @cached_property
    def ancestors(self) -> list[int]:
        """Bitset per node index of every strict ancestor."""
        anc = [0] * len(self.order)
        for i in self.topo:
            acc = 0
            for p in self.preds[i]:
                acc |= anc[p] | (1 << p)
            anc[i] = acc
        return anc

    def require(self, e: EventId) -> int:
        try:
            return self.index[e]
        except (KeyError, TypeError):
            raise UnknownEvent(f"unknown event {e}") from None


def build_dag(snapshot: NetworkSnapshot, verify: bool = True) -> HappensBeforeDag:
    """Derive the happens-before DAG from a snapshot.

    With ``verify`` (the default) the snapshot must pass ``verify_snapshot``.
    Without it, references are resolved by stored hash and a cycle raises
    ``CyclicReferences``.
    """
    if verify:
        violations = verify_snapshot(snapshot)
        if violations:
            raise InvalidSnapshot(violations)
    index = {}
    nodes = []
    for cid, chain in snapshot.chains.items():
        for k, block in enumerate(chain.blocks):
            index[(cid, block.summary_hash)] = k
            nodes.append(EventId(cid, k))
    edges = []
    for cid, chain in snapshot.chains.items():
        for k, block in enumerate(chain.blocks):
            if k > 0:
                edges.append((EventId(cid, k - 1), EventId(cid, k)))
            for ref in block.accepted:
                h = index.get((ref.from_chain, ref.from_block_hash))
                if h is None:
                    raise UnknownReference(f"{cid}:{k} references an unknown block of {ref.from_chain!r}")
                edges.append((EventId(ref.from_chain, h), EventId(cid, k)))
    return HappensBeforeDag(nodes, edges)


def precedes(dag: HappensBeforeDag, a: EventId, b: EventId) -> OrderRelation:
    ia, ib = dag.require(a), dag.require(b)
    if ia == ib:
        return OrderRelation.EQUAL
    anc = dag.ancestors
    if anc[ib] >> ia & 1:
        return OrderRelation.BEFORE
    if anc[ia] >> ib & 1:
        return OrderRelation.AFTER
    return OrderRelation.CONCURRENT


def canonical_order(dag: HappensBeforeDag) -> list[EventId]:
    """Kahn order taking the smallest (chain id, height) among ready events."""
    return [dag.order[i] for i in dag.topo]


def linear_extensions(
    dag: HappensBeforeDag,
    limit: int,
    should_stop: Optional[Callable[[int], bool]] = None,
) -> list[list[EventId]]:
    """Every linear extension, lexicographic in the canonical tie-break.

    Raises ``Overflow`` (carrying the first ``limit`` extensions) as soon as a
    ``limit + 1``-th one is found. ``should_stop`` is polled with the running
    count after each extension; returning true ends enumeration early and
    returns what was found so far.
    """
    if limit < 1:
        raise ValueError("limit must be at least 1")
    n = len(dag.order)
    if n == 0:
        return [[]]
    indeg = [len(p) for p in dag.preds]
    ready = {i for i in range(n) if indeg[i] == 0}
    found: list[list[EventId]] = []
    seq: list[int] = []
    # frame: [candidates, next position]
    stack = [[sorted(ready), 0]]
    while stack:
        frame = stack[-1]
        cands, pos = frame
        if pos > 0:
            prev = cands[pos - 1]
            seq.pop()
            for s in dag.succs[prev]:
                if indeg[s] == 0:
                    ready.discard(s)
                indeg[s] += 1
            ready.add(prev)
        if pos == len(cands):
            stack.pop()
            continue
        c = cands[pos]
        frame[1] = pos + 1
        seq.append(c)
        ready.discard(c)
        for s in dag.succs[c]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.add(s)
        if len(seq) == n:
            if len(found) == limit:
                raise Overflow(limit, found)
            found.append([dag.order[i] for i in seq])
            if should_stop is not None and should_stop(len(found)):
                return found
        else:
            stack.append([sorted(ready), 0])
    return found


def count_linear_extensions(dag: HappensBeforeDag, max_nodes: int = DEFAULT_COUNT_BOUND) -> int:
    """Exact number of linear extensions.

    Dynamic programming over downsets (bitmask memo), run per weakly connected
    component; component counts combine with a multinomial coefficient.
    """
    n = len(dag.order)
    if n > max_nodes:
        raise TooLarge(f"{n} events exceeds the exact-count bound of {max_nodes}")
    total = 1
    placed = 0
    for comp in _components(dag):
        total *= _count_component(dag, comp) * math.comb(placed + len(comp), len(comp))
        placed += len(comp)
    return total


def _components(dag: HappensBeforeDag) -> list[list[int]]:
    seen = [False] * len(dag.order)
    comps = []
    for start in range(len(dag.order)):
        if seen[start]:
            continue
        seen[start] = True
        comp, todo = [], [start]
        while todo:
            v = todo.pop()
            comp.append(v)
            for w in dag.succs[v] + dag.preds[v]:
                if not seen[w]:
                    seen[w] = True
                    todo.append(w)
        comps.append(sorted(comp))
    return comps


def _count_component(dag: HappensBeforeDag, comp: list[int]) -> int:
    local = {v: i for i, v in enumerate(comp)}
    pred_mask = [0] * len(comp)
    for v in comp:
        for p in dag.preds[v]:
            pred_mask[local[v]] |= 1 << local[p]
    full = (1 << len(comp)) - 1
    # ways[mask] = number of ways to order the events outside ``mask``
    memo = {full: 1}

    def ways(mask: int) -> int:
        hit = memo.get(mask)
        if hit is not None:
            return hit
        acc = 0
        for i, pm in enumerate(pred_mask):
            if not mask >> i & 1 and pm & mask == pm:
                acc += ways(mask | 1 << i)
        memo[mask] = acc
        return acc

    return ways(0)


def has_unique_extension(dag: HappensBeforeDag) -> bool:
    """True iff every adjacent pair of the canonical order is ordered."""
    seq = canonical_order(dag)
    return all(
        precedes(dag, a, b) is OrderRelation.BEFORE for a, b in zip(seq, seq[1:])
    )


def comparability_ratio(dag: HappensBeforeDag) -> Fraction:
    """Fraction of cross-chain event pairs that the DAG orders.

    A DAG with no cross-chain pairs counts as fully ordered.
    """
    by_chain: dict[ChainId, int] = {}
    for e in dag.order:
        by_chain[e.chain] = by_chain.get(e.chain, 0) + 1
    n = len(dag.order)
    total_pairs = (n * n - sum(c * c for c in by_chain.values())) // 2
    if total_pairs == 0:
        return Fraction(1)
    own_mask: dict[ChainId, int] = {}
    for i, e in enumerate(dag.order):
        own_mask[e.chain] = own_mask.get(e.chain, 0) | (1 << i)
    anc = dag.ancestors
    ordered = sum((anc[i] & ~own_mask[e.chain]).bit_count() for i, e in enumerate(dag.order))
    return Fraction(ordered, total_pairs)


@dataclass(frozen=True)
class ChainGranularity:
    block_count: int
    mean_interval: Optional[Fraction]
    max_interval: Optional[int]


@dataclass(frozen=True)
class GranularityReport:
    per_chain: dict[ChainId, ChainGranularity]
    comparability_ratio: Fraction


def granularity(snapshot: NetworkSnapshot, dag: HappensBeforeDag) -> GranularityReport:
    """Per-chain block spacing plus the network-wide comparability ratio.

    Spacing uses block ``local_timestamp`` values when every block of the
    chain has one, otherwise unit spacing per block. Chains with fewer than
    two blocks have no interval.
    """
    per_chain = {}
    for cid in sorted(snapshot.chains, key=lambda c: c.encode("utf-8")):
        blocks = snapshot.chains[cid].blocks
        if all(b.local_timestamp is not None for b in blocks):
            stamps = [b.local_timestamp for b in blocks]
        else:
            stamps = list(range(len(blocks)))
        gaps = [b - a for a, b in zip(stamps, stamps[1:])]
        if gaps:
            per_chain[cid] = ChainGranularity(len(blocks), Fraction(sum(gaps), len(gaps)), max(gaps))
        else:
            per_chain[cid] = ChainGranularity(len(blocks), None, None)
    return GranularityReport(per_chain, comparability_ratio(dag))


def mainstream_score(
    dag: HappensBeforeDag,
    window: Optional[Mapping[ChainId, tuple[int, int]]] = None,
) -> dict[ChainId, int]:
    """How often each chain's blocks were accepted by other chains.

    ``window`` maps a chain to an inclusive height range; only referenced
    blocks inside it count. Chains absent from the window are unrestricted.
    """
    chains = dag.chains()
    if window is not None:
        for cid, rng in window.items():
            if cid not in chains:
                raise InvalidWindow(f"window names unknown chain {cid!r}")
            try:
                lo, hi = rng
            except (TypeError, ValueError):
                raise InvalidWindow(f"window for {cid!r} must be a (low, high) pair") from None
            if not (isinstance(lo, int) and isinstance(hi, int)) or lo < 0 or hi < lo:
                raise InvalidWindow(f"window for {cid!r} must satisfy 0 <= low <= high, got {rng!r}")
    scores = {c: 0 for c in chains}
    for src, _ in dag.cross_edges():
        if window is not None and src.chain in window:
            lo, hi = window[src.chain]
            if not lo <= src.height <= hi:
                continue
        scores[src.chain] += 1
    return scores


def order_certificate(dag: HappensBeforeDag, a: EventId, b: EventId) -> list[EventId]:
    """An explicit edge path from ``a`` to ``b``.

    Raises ``NotOrdered`` unless ``a`` happened before (or is) ``b``.
    """
    ia, ib = dag.require(a), dag.require(b)
    if ia == ib:
        return [a]
    anc = dag.ancestors
    if not anc[ib] >> ia & 1:
        raise NotOrdered(f"{a} does not happen before {b}")
    allowed = anc[ib] | (1 << ib)
    parent = {ia: -1}
    queue = deque([ia])
    while queue:
        v = queue.popleft()
        if v == ib:
            break
        for s in dag.succs[v]:
            if s not in parent and allowed >> s & 1:
                parent[s] = v
                queue.append(s)
    path = []
    v = ib
    while v != -1:
        path.append(dag.order[v])
        v = parent[v]
    return path[::-1]


def check_certificate(snapshot: NetworkSnapshot, path: list[EventId]) -> bool:
    """Validate a certificate hop by hop against the snapshot's hashes.

    Each hop must be a prev_hash link on one chain or an accepted association
    whose hash equals the source block's summary hash.
    """
    if not path:
        return False
    try:
        blocks = [snapshot.chains[e.chain].blocks[e.height] for e in path]
    except (KeyError, IndexError):
        return False
    for (x, bx), (y, by) in zip(zip(path, blocks), zip(path[1:], blocks[1:])):
        if bx.recompute_hash() != bx.summary_hash:
            return False
        if x.chain == y.chain:
            if y.height != x.height + 1 or by.prev_hash != bx.summary_hash:
                return False
        elif not any(
            r.from_chain == x.chain and r.from_block_hash == bx.summary_hash for r in by.accepted
        ):
            return False
    return True
