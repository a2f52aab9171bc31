"""Deterministic tick-based simulation of a network of private chains.

Two interaction regimes are modelled:

* ``fixed_rule``: a periodic schedule says which chain creates a block at
  which phase and whom it then sends its new hash to.
* ``autonomous``: every tick each chain independently creates a block with
  its own probability and, when it does, sends the new hash to one uniformly
  chosen other chain.

A creating chain always packages every pending association that was sent at
a strictly earlier tick, so each accepted reference points at a block from an
earlier tick. All randomness comes from one xoshiro256** stream seeded from
the config; draws happen per tick, per chain in sorted id order: one float
for the creation decision, then (only if a block was created and there is
more than one chain) one bounded integer for the partner.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Union

from .chain import (
    ChainId,
    NetworkSnapshot,
    accept_pending,
    check_chain_id,
    payload_digest,
    send_association,
)
from .errors import ChainOrderError, InvalidConfig, InvalidTrace
from .order import EventId, build_dag, comparability_ratio
from .rng import MASK64, Xoshiro256

FIXED_RULE = "fixed_rule"
AUTONOMOUS = "autonomous"


@dataclass(frozen=True)
class ScheduleEntry:
    phase: int
    from_chain: ChainId
    to_chain: Optional[ChainId] = None


@dataclass(frozen=True)
class FixedRule:
    """At tick ``t`` the entries with ``phase == t % period`` fire.

    Each chain named in a firing entry creates one block, then sends to every
    ``to_chain`` listed for it (entries without a receiver only create).
    """

    period: int
    schedule: tuple[ScheduleEntry, ...]


@dataclass(frozen=True)
class Autonomous:
    block_prob: dict[ChainId, float]
    partner: str = "uniform"


@dataclass(frozen=True)
class SimConfig:
    chains: tuple[ChainId, ...]
    ticks: int
    policy: str
    seed: int = 0
    fixed_rule: Optional[FixedRule] = None
    autonomous: Optional[Autonomous] = None

    def validate(self) -> "SimConfig":
        if not self.chains:
            raise InvalidConfig("at least one chain is required")
        for c in self.chains:
            try:
                check_chain_id(c)
            except ValueError as exc:
                raise InvalidConfig(str(exc)) from None
        if len(set(self.chains)) != len(self.chains):
            raise InvalidConfig("chain ids must be unique")
        if not isinstance(self.ticks, int) or self.ticks < 1:
            raise InvalidConfig(f"ticks must be >= 1, got {self.ticks!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed <= MASK64:
            raise InvalidConfig(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        known = set(self.chains)
        if self.policy == FIXED_RULE:
            if self.fixed_rule is None or self.autonomous is not None:
                raise InvalidConfig("fixed_rule policy needs exactly the fixed_rule section")
            rule = self.fixed_rule
            if not isinstance(rule.period, int) or rule.period < 1:
                raise InvalidConfig(f"period must be >= 1, got {rule.period!r}")
            for e in rule.schedule:
                if not isinstance(e.phase, int) or not 0 <= e.phase < rule.period:
                    raise InvalidConfig(f"phase {e.phase!r} outside [0, {rule.period})")
                if e.from_chain not in known or (e.to_chain is not None and e.to_chain not in known):
                    raise InvalidConfig(f"schedule entry {e} names an unknown chain")
                if e.from_chain == e.to_chain:
                    raise InvalidConfig(f"schedule entry {e} sends to itself")
        elif self.policy == AUTONOMOUS:
            if self.autonomous is None or self.fixed_rule is not None:
                raise InvalidConfig("autonomous policy needs exactly the autonomous section")
            probs = self.autonomous.block_prob
            if set(probs) != known:
                raise InvalidConfig("block_prob must give a probability for every chain")
            for c, p in probs.items():
                if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
                    raise InvalidConfig(f"block_prob[{c!r}] = {p!r} is not in [0, 1]")
            if self.autonomous.partner != "uniform":
                raise InvalidConfig(f"unsupported partner rule {self.autonomous.partner!r}")
        else:
            raise InvalidConfig(f"unknown policy {self.policy!r}")
        return self


def autonomous_config(chains, ticks: int, block_prob: float, seed: int = 0) -> SimConfig:
    chains = tuple(chains)
    return SimConfig(
        chains=chains,
        ticks=ticks,
        policy=AUTONOMOUS,
        seed=seed,
        autonomous=Autonomous({c: block_prob for c in chains}),
    )


# --- trace ------------------------------------------------------------------


@dataclass(frozen=True)
class BlockCreated:
    tick: int
    chain: ChainId
    height: int


@dataclass(frozen=True)
class AssociationSent:
    tick: int
    from_chain: ChainId
    to_chain: ChainId


@dataclass(frozen=True)
class AssociationAccepted:
    tick: int
    to_chain: ChainId
    from_chain: ChainId
    from_height: int


@dataclass(frozen=True)
class AssociationDropped:
    tick: int
    to_chain: ChainId
    from_chain: ChainId


SimEvent = Union[BlockCreated, AssociationSent, AssociationAccepted, AssociationDropped]


@dataclass
class SimTrace:
    """Audit log of a run; ``chains`` lists every chain, even idle ones."""

    chains: tuple[ChainId, ...] = ()
    events: list[SimEvent] = field(default_factory=list)


def sim_payload(chain: ChainId, height: int):
    """Stand-in private payload digest for simulated blocks."""
    return payload_digest(f"sim:{chain}:{height}")


# --- run --------------------------------------------------------------------


def _create(snapshot, trace, chain, tick, sends):
    block = accept_pending(
        snapshot, chain, sim_payload(chain, len(snapshot.chains[chain])),
        tick=tick, local_timestamp=tick,
    )
    for ref in block.accepted:
        from_height = snapshot.resolve(ref).height
        trace.events.append(AssociationAccepted(tick, chain, ref.from_chain, from_height))
    trace.events.append(BlockCreated(tick, chain, block.height))
    for to in sends:
        send_association(snapshot, chain, to, tick)
        trace.events.append(AssociationSent(tick, chain, to))


def run(
    config: SimConfig, progress: Optional[Callable[[int], None]] = None
) -> tuple[NetworkSnapshot, SimTrace]:
    """Execute ``config.ticks`` rounds and return the final snapshot and trace."""
    config.validate()
    order = sorted(config.chains, key=lambda c: c.encode("utf-8"))
    snapshot = NetworkSnapshot.with_chains(order)
    trace = SimTrace(chains=tuple(order))

    if config.policy == FIXED_RULE:
        rule = config.fixed_rule
        by_phase: dict[int, dict[ChainId, list[ChainId]]] = {}
        for e in rule.schedule:
            targets = by_phase.setdefault(e.phase, {}).setdefault(e.from_chain, [])
            if e.to_chain is not None and e.to_chain not in targets:
                targets.append(e.to_chain)
        for tick in range(config.ticks):
            firing = by_phase.get(tick % rule.period, {})
            for chain in order:
                if chain in firing:
                    _create(snapshot, trace, chain, tick, sorted(firing[chain]))
            if progress is not None:
                progress(tick)
    else:
        rng = Xoshiro256(config.seed)
        probs = config.autonomous.block_prob
        for tick in range(config.ticks):
            for chain in order:
                if rng.random() >= probs[chain]:
                    continue
                others = [c for c in order if c != chain]
                sends = [others[rng.below(len(others))]] if others else []
                _create(snapshot, trace, chain, tick, sends)
            if progress is not None:
                progress(tick)
    return snapshot, trace


def replay(trace: SimTrace) -> NetworkSnapshot:
    """Rebuild the snapshot from trace events alone."""
    try:
        snapshot = NetworkSnapshot.with_chains(trace.chains)
    except ValueError as exc:
        raise InvalidTrace(str(exc)) from None
    staged: dict[ChainId, set[tuple[ChainId, int]]] = {}
    last_tick = None
    for n, ev in enumerate(trace.events):
        where = f"event {n} ({type(ev).__name__})"
        if last_tick is not None and ev.tick < last_tick:
            raise InvalidTrace(f"{where}: tick {ev.tick} goes backwards")
        last_tick = ev.tick
        try:
            _replay_event(snapshot, staged, ev, where)
        except InvalidTrace:
            raise
        except ChainOrderError as exc:
            raise InvalidTrace(f"{where}: {exc}") from None
    leftover = {c: s for c, s in staged.items() if s}
    if leftover:
        raise InvalidTrace(f"accepted associations never packaged into a block: {leftover}")
    return snapshot


def _replay_event(snapshot, staged, ev, where):
    if isinstance(ev, AssociationSent):
        send_association(snapshot, ev.from_chain, ev.to_chain, ev.tick)
    elif isinstance(ev, AssociationAccepted):
        source = snapshot.chain(ev.from_chain)
        if not 0 <= ev.from_height < len(source):
            raise InvalidTrace(f"{where}: {ev.from_chain} has no block {ev.from_height}")
        want = source.blocks[ev.from_height].summary_hash
        if not any(
            p.to_chain == ev.to_chain and p.from_chain == ev.from_chain
            and p.from_block_hash == want and p.sent_at < ev.tick
            for p in snapshot.pending
        ):
            raise InvalidTrace(f"{where}: no earlier matching send to {ev.to_chain}")
        staged.setdefault(ev.to_chain, set()).add((ev.from_chain, ev.from_height))
    elif isinstance(ev, BlockCreated):
        chain = snapshot.chain(ev.chain)
        if ev.height != len(chain):
            raise InvalidTrace(f"{where}: expected height {len(chain)}, got {ev.height}")
        eligible = {
            (p.from_chain, snapshot.resolve(p.as_ref()).height)
            for p in snapshot.pending
            if p.to_chain == ev.chain and p.sent_at < ev.tick
        }
        if eligible != staged.get(ev.chain, set()):
            raise InvalidTrace(f"{where}: accepted set does not match pending associations")
        staged[ev.chain] = set()
        accept_pending(
            snapshot, ev.chain, sim_payload(ev.chain, ev.height),
            tick=ev.tick, local_timestamp=ev.tick,
        )
    elif isinstance(ev, AssociationDropped):
        before = len(snapshot.pending)
        snapshot.pending = [
            p for p in snapshot.pending
            if not (p.to_chain == ev.to_chain and p.from_chain == ev.from_chain)
        ]
        if len(snapshot.pending) == before:
            raise InvalidTrace(f"{where}: nothing pending from {ev.from_chain} to {ev.to_chain}")
    else:
        raise InvalidTrace(f"{where}: unknown event type")


def ground_truth_order(trace: SimTrace):
    """Block creations in the order the simulator performed them."""
    return [EventId(ev.chain, ev.height) for ev in trace.events if isinstance(ev, BlockCreated)]


def _ratio_for_seed(args) -> tuple[int, Fraction]:
    config, seed = args
    snapshot, _ = run(replace(config, seed=seed))
    return seed, comparability_ratio(build_dag(snapshot, verify=False))


def sweep(config: SimConfig, seeds, jobs: int = 1) -> dict[int, Fraction]:
    """Comparability ratio per seed; independent runs fan out over ``jobs`` processes."""
    config.validate()
    work = [(config, s) for s in seeds]
    if jobs <= 1:
        results = map(_ratio_for_seed, work)
        return dict(results)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return dict(pool.map(_ratio_for_seed, work))
