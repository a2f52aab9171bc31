import dataclasses
import random

import pytest

from chainorder.chain import verify_snapshot
from chainorder.errors import InvalidConfig, InvalidTrace
from chainorder.fileio import save_snapshot, save_trace
from chainorder.order import EventId as E, build_dag, comparability_ratio, linear_extensions
from chainorder.scenarios import established_rules, free_interaction, one_based
from chainorder.sim import (
    AUTONOMOUS,
    AssociationAccepted,
    AssociationDropped,
    AssociationSent,
    Autonomous,
    BlockCreated,
    FixedRule,
    ScheduleEntry,
    SimConfig,
    SimTrace,
    autonomous_config,
    ground_truth_order,
    replay,
    run,
)
from oracles import respects


def chains(n):
    return [f"N{i}" for i in range(n)]


class TestRun:
    def test_round_robin_unique_order(self):
        snap, trace = run(established_rules())
        exts = linear_extensions(build_dag(snap), 10)
        assert len(exts) == 1
        assert exts[0] == ground_truth_order(trace)
        assert [one_based(e) for e in exts[0][:4]] == ["C1", "A1", "B1", "C2"]

    def test_zero_probability_creates_nothing(self):
        snap, trace = run(autonomous_config(chains(3), 20, 0.0))
        assert snap.block_count() == 0
        assert not any(isinstance(e, BlockCreated) for e in trace.events)
        assert set(snap.chains) == set(chains(3))

    def test_deterministic(self):
        cfg = autonomous_config(chains(5), 60, 0.4, seed=99)
        (s1, t1), (s2, t2) = run(cfg), run(cfg)
        assert save_snapshot(s1) == save_snapshot(s2)
        assert save_trace(t1) == save_trace(t2)

    def test_seed_matters(self):
        a, _ = run(autonomous_config(chains(5), 60, 0.4, seed=1))
        b, _ = run(autonomous_config(chains(5), 60, 0.4, seed=2))
        assert save_snapshot(a) != save_snapshot(b)

    def test_timestamps_are_ticks(self):
        snap, trace = run(established_rules())
        for ev in trace.events:
            if isinstance(ev, BlockCreated):
                assert snap.chains[ev.chain].blocks[ev.height].local_timestamp == ev.tick

    def test_progress_callback(self):
        seen = []
        run(established_rules(ticks=5), progress=seen.append)
        assert seen == [0, 1, 2, 3, 4]

    def test_single_chain_never_sends(self):
        snap, trace = run(autonomous_config(["solo"], 10, 1.0))
        assert len(snap.chains["solo"]) == 10
        assert not any(isinstance(e, AssociationSent) for e in trace.events)

    def test_full_rate_round_robin_is_totally_ordered(self):
        # every chain accepts at least one association each period
        cfg = SimConfig(
            chains=("A", "B", "C", "D"), ticks=24, policy="fixed_rule",
            fixed_rule=FixedRule(4, tuple(
                ScheduleEntry(i, c, n) for i, (c, n) in enumerate(zip("ABCD", "BCDA"))
            )),
        )
        snap, _ = run(cfg)
        assert comparability_ratio(build_dag(snap)) == 1


@pytest.mark.parametrize("bad", [
    dict(chains=()),
    dict(chains=("A", "A")),
    dict(ticks=0),
    dict(seed=-1),
    dict(policy="gossip"),
    dict(autonomous=Autonomous({"A": 1.5, "B": 0.2})),
    dict(autonomous=Autonomous({"A": 0.5})),
    dict(fixed_rule=FixedRule(2, ())),
])
def test_invalid_config(bad):
    cfg = dataclasses.replace(autonomous_config(["A", "B"], 5, 0.5), **bad)
    with pytest.raises(InvalidConfig):
        run(cfg)


@pytest.mark.parametrize("entry", [ScheduleEntry(3, "A", "B"), ScheduleEntry(0, "A", "A"), ScheduleEntry(0, "A", "Q")])
def test_invalid_schedule(entry):
    cfg = SimConfig(("A", "B"), 5, "fixed_rule", fixed_rule=FixedRule(2, (entry,)))
    with pytest.raises(InvalidConfig):
        cfg.validate()


class TestReplay:
    @pytest.mark.parametrize("cfg", [
        established_rules(), free_interaction(), autonomous_config(chains(6), 80, 0.35, seed=5),
    ])
    def test_round_trip(self, cfg):
        snap, trace = run(cfg)
        assert replay(trace) == snap
        assert save_snapshot(replay(trace)) == save_snapshot(snap)

    def test_empty(self):
        snap = replay(SimTrace())
        assert snap.chains == {} and snap.pending == []

    def test_accept_before_send(self):
        trace = SimTrace(("A", "B"), [
            BlockCreated(0, "A", 0),
            AssociationAccepted(1, "B", "A", 0),
            BlockCreated(1, "B", 0),
        ])
        with pytest.raises(InvalidTrace):
            replay(trace)

    def test_same_tick_accept_rejected(self):
        trace = SimTrace(("A", "B"), [
            BlockCreated(0, "A", 0),
            AssociationSent(0, "A", "B"),
            AssociationAccepted(0, "B", "A", 0),
            BlockCreated(0, "B", 0),
        ])
        with pytest.raises(InvalidTrace):
            replay(trace)

    def test_missing_accept_detected(self):
        trace = SimTrace(("A", "B"), [
            BlockCreated(0, "A", 0),
            AssociationSent(0, "A", "B"),
            BlockCreated(1, "B", 0),
        ])
        with pytest.raises(InvalidTrace):
            replay(trace)

    def test_ticks_must_not_go_back(self):
        trace = SimTrace(("A",), [BlockCreated(3, "A", 0), BlockCreated(2, "A", 1)])
        with pytest.raises(InvalidTrace):
            replay(trace)

    def test_drop(self):
        trace = SimTrace(("A", "B"), [
            BlockCreated(0, "A", 0),
            AssociationSent(0, "A", "B"),
            AssociationDropped(1, "B", "A"),
            BlockCreated(1, "B", 0),
        ])
        snap = replay(trace)
        assert snap.pending == [] and snap.chains["B"].blocks[0].accepted == ()
        with pytest.raises(InvalidTrace):
            replay(SimTrace(("A", "B"), [AssociationDropped(0, "B", "A")]))


class TestGroundTruth:
    def test_sequence(self):
        trace = SimTrace(("A", "B"), [
            BlockCreated(0, "A", 0), AssociationSent(0, "A", "B"),
            BlockCreated(0, "B", 0), BlockCreated(1, "A", 1),
        ])
        assert ground_truth_order(trace) == [E("A", 0), E("B", 0), E("A", 1)]

    def test_empty(self):
        assert ground_truth_order(SimTrace()) == []

    def test_is_one_of_the_extensions(self):
        snap, trace = run(free_interaction())
        assert ground_truth_order(trace) in linear_extensions(build_dag(snap), 10)

    @pytest.mark.parametrize("seed", range(10))
    def test_causality_and_soundness(self, seed):
        rng = random.Random(seed)
        cfg = autonomous_config(chains(rng.randint(3, 8)), rng.randint(10, 120),
                                rng.choice([0.1, 0.3, 0.7]), seed=seed)
        snap, trace = run(cfg)
        assert verify_snapshot(snap) == []
        dag = build_dag(snap)
        assert respects(ground_truth_order(trace), dag.edges)
        created_at = {E(e.chain, e.height): e.tick for e in trace.events if isinstance(e, BlockCreated)}
        for a, b in dag.cross_edges():
            assert created_at[a] < created_at[b]
