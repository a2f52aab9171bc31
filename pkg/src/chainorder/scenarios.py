"""Ready-made schedules for two small three-chain networks.

``established_rules`` is a strict round robin (C, then A, then B, each
accepting the previous creator's hash) that leaves exactly one admissible
total order of its 14 blocks. ``free_interaction`` is an irregular 11-block
pattern in which one pair of blocks is left unordered, so exactly two total
orders are admissible.
"""

from .sim import FIXED_RULE, FixedRule, ScheduleEntry, SimConfig


def established_rules(ticks: int = 14) -> SimConfig:
    schedule = (
        ScheduleEntry(0, "C", "A"),
        ScheduleEntry(1, "A", "B"),
        ScheduleEntry(2, "B", "C"),
    )
    return SimConfig(
        chains=("A", "B", "C"),
        ticks=ticks,
        policy=FIXED_RULE,
        fixed_rule=FixedRule(period=3, schedule=schedule),
    )


def free_interaction() -> SimConfig:
    schedule = (
        ScheduleEntry(0, "A", "C"),
        ScheduleEntry(1, "C", "B"),
        ScheduleEntry(2, "B", "A"),
        ScheduleEntry(3, "A", "B"),
        ScheduleEntry(4, "B", "C"),
        ScheduleEntry(5, "C", "A"),
        ScheduleEntry(6, "A", "C"),
        ScheduleEntry(7, "C", "B"),
        # A creates again without hearing from anyone: this block and C's
        # block of the same tick stay concurrent
        ScheduleEntry(7, "A", "B"),
        ScheduleEntry(8, "B", "A"),
        ScheduleEntry(9, "A"),
    )
    return SimConfig(
        chains=("A", "B", "C"),
        ticks=10,
        policy=FIXED_RULE,
        fixed_rule=FixedRule(period=10, schedule=schedule),
    )


def one_based(event) -> str:
    """Label an event the way the chain owner counts blocks: first block is 1."""
    return f"{event.chain}{event.height + 1}"
