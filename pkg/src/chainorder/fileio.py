"""JSON file formats (snapshot, trace, config, report) and DOT export.

Serialization is canonical: keys are emitted in a fixed order, chains are
sorted by id, digests are lowercase hex, and output ends with one newline.
Saving a loaded snapshot therefore reproduces the original bytes.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from typing import Any, Iterable, Optional

from .chain import (
    AssociationRef,
    Block,
    Chain,
    NetworkSnapshot,
    PendingAssociation,
    check_chain_id,
    verify_snapshot,
)
from .errors import InvalidSnapshot, ParseError
from .order import EventId, GranularityReport, HappensBeforeDag, event_key
from .sim import (
    AUTONOMOUS,
    FIXED_RULE,
    AssociationAccepted,
    AssociationDropped,
    AssociationSent,
    Autonomous,
    BlockCreated,
    FixedRule,
    ScheduleEntry,
    SimConfig,
    SimTrace,
)

SNAPSHOT_VERSION = 1
TRACE_VERSION = 1
REPORT_VERSION = 1

_HEX64 = re.compile(r"[0-9a-f]{64}")


def _dump(doc: Any) -> bytes:
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _parse_json(data: bytes | str) -> Any:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from None
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None


class _Reader:
    """Typed field access that reports the JSON path of whatever is wrong."""

    def __init__(self, doc: Any, path: str = ""):
        self.doc = doc
        self.path = path

    def fail(self, message: str, key: str = ""):
        raise ParseError(message, self._join(key))

    def _join(self, key) -> str:
        if key == "":
            return self.path
        if isinstance(key, int):
            return f"{self.path}[{key}]"
        return f"{self.path}.{key}" if self.path else key

    def obj(self, key) -> "_Reader":
        value = self._get(key)
        if not isinstance(value, dict):
            self.fail("expected an object", key)
        return _Reader(value, self._join(key))

    def items(self, key) -> list["_Reader"]:
        value = self._get(key)
        if not isinstance(value, list):
            self.fail("expected an array", key)
        sub = self._join(key)
        return [_Reader(v, f"{sub}[{i}]") for i, v in enumerate(value)]

    def has(self, key) -> bool:
        return isinstance(self.doc, dict) and key in self.doc

    def _get(self, key):
        if not isinstance(self.doc, dict):
            raise ParseError("expected an object", self.path)
        if key not in self.doc:
            self.fail("missing field", key)
        return self.doc[key]

    def int(self, key, minimum: Optional[int] = 0) -> int:
        value = self._get(key)
        if not isinstance(value, int) or isinstance(value, bool):
            self.fail("expected an integer", key)
        if minimum is not None and value < minimum:
            self.fail(f"must be >= {minimum}", key)
        return value

    def number(self, key) -> float:
        value = self._get(key)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            self.fail("expected a number", key)
        return value

    def str(self, key) -> str:
        value = self._get(key)
        if not isinstance(value, str):
            self.fail("expected a string", key)
        return value

    def chain_id(self, key) -> str:
        value = self.str(key)
        try:
            return check_chain_id(value)
        except ValueError as exc:
            self.fail(str(exc), key)

    def chain_id_value(self) -> str:
        if not isinstance(self.doc, str):
            self.fail("expected a string")
        try:
            return check_chain_id(self.doc)
        except ValueError as exc:
            self.fail(str(exc))

    def digest(self, key) -> bytes:
        value = self.str(key)
        if not _HEX64.fullmatch(value):
            self.fail("expected 64 lowercase hex characters", key)
        return bytes.fromhex(value)


# --- snapshot ---------------------------------------------------------------


def _chain_sort(ids: Iterable[str]) -> list[str]:
    return sorted(ids, key=lambda c: c.encode("utf-8"))


def snapshot_to_dict(snapshot: NetworkSnapshot) -> dict:
    chains = []
    for cid in _chain_sort(snapshot.chains):
        chain = snapshot.chains[cid]
        blocks = []
        for b in chain.blocks:
            doc = {
                "height": b.height,
                "prev_hash": b.prev_hash.hex(),
                "payload_hash": b.payload_hash.hex(),
                "summary_hash": b.summary_hash.hex(),
                "accepted": [
                    {"from_chain": r.from_chain, "from_block_hash": r.from_block_hash.hex()}
                    for r in b.accepted
                ],
            }
            if b.local_timestamp is not None:
                doc["local_timestamp"] = b.local_timestamp
            blocks.append(doc)
        chains.append({"id": cid, "forgotten": sorted(chain.forgotten), "blocks": blocks})
    pending = [
        {
            "from_chain": p.from_chain,
            "from_block_hash": p.from_block_hash.hex(),
            "to_chain": p.to_chain,
            "sent_at": p.sent_at,
        }
        for p in snapshot.pending
    ]
    return {"format_version": SNAPSHOT_VERSION, "chains": chains, "pending": pending}


def save_snapshot(snapshot: NetworkSnapshot) -> bytes:
    return _dump(snapshot_to_dict(snapshot))


def snapshot_from_dict(doc: Any) -> NetworkSnapshot:
    r = _Reader(doc)
    if not isinstance(doc, dict):
        r.fail("expected an object")
    version = r.int("format_version")
    if version != SNAPSHOT_VERSION:
        r.fail(f"unsupported version {version}", "format_version")
    snapshot = NetworkSnapshot()
    for cr in r.items("chains"):
        cid = cr.chain_id("id")
        if cid in snapshot.chains:
            cr.fail(f"duplicate chain id {cid!r}", "id")
        blocks = []
        for br in cr.items("blocks"):
            accepted = tuple(
                AssociationRef(ar.chain_id("from_chain"), ar.digest("from_block_hash"))
                for ar in br.items("accepted")
            )
            stamp = br.int("local_timestamp", minimum=None) if br.has("local_timestamp") else None
            blocks.append(Block(
                chain=cid,
                height=br.int("height"),
                prev_hash=br.digest("prev_hash"),
                payload_hash=br.digest("payload_hash"),
                accepted=accepted,
                summary_hash=br.digest("summary_hash"),
                local_timestamp=stamp,
            ))
        forgotten = set()
        for fr in cr.items("forgotten"):
            if not isinstance(fr.doc, int) or isinstance(fr.doc, bool) or fr.doc < 0:
                fr.fail("expected a nonnegative integer")
            forgotten.add(fr.doc)
        snapshot.chains[cid] = Chain(cid, blocks, forgotten)
    for pr in r.items("pending"):
        snapshot.pending.append(PendingAssociation(
            pr.chain_id("from_chain"),
            pr.digest("from_block_hash"),
            pr.chain_id("to_chain"),
            pr.int("sent_at", minimum=None),
        ))
    return snapshot


def load_snapshot(data: bytes | str, verify: bool = True) -> NetworkSnapshot:
    """Parse a snapshot file; by default it must also pass verification."""
    snapshot = snapshot_from_dict(_parse_json(data))
    if verify:
        violations = verify_snapshot(snapshot)
        if violations:
            raise InvalidSnapshot(violations)
    return snapshot


# --- trace ------------------------------------------------------------------

_EVENT_FIELDS = {
    "block_created": (BlockCreated, ("tick", "chain", "height")),
    "association_sent": (AssociationSent, ("tick", "from_chain", "to_chain")),
    "association_accepted": (AssociationAccepted, ("tick", "to_chain", "from_chain", "from_height")),
    "association_dropped": (AssociationDropped, ("tick", "to_chain", "from_chain")),
}
_KIND_OF = {cls: kind for kind, (cls, _) in _EVENT_FIELDS.items()}


def save_trace(trace: SimTrace) -> bytes:
    events = []
    for ev in trace.events:
        kind = _KIND_OF[type(ev)]
        doc = {"kind": kind}
        for name in _EVENT_FIELDS[kind][1]:
            doc[name] = getattr(ev, name)
        events.append(doc)
    return _dump({"format_version": TRACE_VERSION, "chains": list(trace.chains), "events": events})


def load_trace(data: bytes | str) -> SimTrace:
    r = _Reader(_parse_json(data))
    if r.int("format_version") != TRACE_VERSION:
        r.fail("unsupported version", "format_version")
    chains = tuple(cr.chain_id_value() for cr in r.items("chains"))
    events = []
    for er in r.items("events"):
        kind = er.str("kind")
        if kind not in _EVENT_FIELDS:
            er.fail(f"unknown event kind {kind!r}", "kind")
        cls, names = _EVENT_FIELDS[kind]
        values = [
            er.int(n) if n in ("tick", "height", "from_height") else er.chain_id(n)
            for n in names
        ]
        events.append(cls(*values))
    return SimTrace(chains, events)


# --- config -----------------------------------------------------------------


def config_from_dict(doc: Any) -> SimConfig:
    """Build a ``SimConfig`` from its JSON form.

    ``autonomous.block_prob`` may be a single number applied to every chain
    or an object keyed by chain id.
    """
    r = _Reader(doc)
    chains = [cr.chain_id_value() for cr in r.items("chains")]
    policy = r.str("policy")
    fixed = auto = None
    if r.has("fixed_rule"):
        fr = r.obj("fixed_rule")
        schedule = []
        for er in fr.items("schedule"):
            to = er.str("to") if er.has("to") and er.doc["to"] is not None else None
            schedule.append(ScheduleEntry(er.int("phase"), er.str("from"), to))
        fixed = FixedRule(fr.int("period", minimum=1), tuple(schedule))
    if r.has("autonomous"):
        ar = r.obj("autonomous")
        raw = ar._get("block_prob")
        if isinstance(raw, dict):
            pr = ar.obj("block_prob")
            probs = {c: pr.number(c) for c in raw}
        else:
            p = ar.number("block_prob")
            probs = {c: p for c in chains}
        partner = ar.str("partner") if ar.has("partner") else "uniform"
        auto = Autonomous(probs, partner)
    seed = r.int("seed") if r.has("seed") else 0
    return SimConfig(tuple(chains), r.int("ticks", minimum=1), policy, seed, fixed, auto).validate()


def config_to_dict(config: SimConfig) -> dict:
    doc: dict[str, Any] = {
        "chains": list(config.chains),
        "ticks": config.ticks,
        "policy": config.policy,
        "seed": config.seed,
    }
    if config.policy == FIXED_RULE:
        doc["fixed_rule"] = {
            "period": config.fixed_rule.period,
            "schedule": [
                {"phase": e.phase, "from": e.from_chain, "to": e.to_chain}
                for e in config.fixed_rule.schedule
            ],
        }
    elif config.policy == AUTONOMOUS:
        doc["autonomous"] = {
            "block_prob": dict(config.autonomous.block_prob),
            "partner": config.autonomous.partner,
        }
    return doc


def load_config(data: bytes | str) -> SimConfig:
    return config_from_dict(_parse_json(data))


# --- exports ----------------------------------------------------------------


def _dot_id(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(dag: HappensBeforeDag) -> str:
    """DOT digraph: nodes ``chain_height`` labelled ``chain:height``;
    cross-chain edges dashed."""
    lines = ["digraph happens_before {", "  rankdir=LR;"]
    for e in dag.order:
        lines.append(f"  {_dot_id(f'{e.chain}_{e.height}')} [label={_dot_id(str(e))}];")
    edges = sorted(dag.edges, key=lambda ab: (event_key(ab[0]), event_key(ab[1])))
    for a, b in edges:
        style = "" if a.chain == b.chain else " [style=dashed]"
        lines.append(
            f"  {_dot_id(f'{a.chain}_{a.height}')} -> {_dot_id(f'{b.chain}_{b.height}')}{style};"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def extension_to_json(ext: list[EventId]) -> list[dict]:
    return [{"chain": e.chain, "height": e.height} for e in ext]


def rational(value: Optional[Fraction]) -> Optional[dict]:
    if value is None:
        return None
    value = Fraction(value)
    return {
        "numerator": value.numerator,
        "denominator": value.denominator,
        "decimal": float(value),
    }


def build_report(
    report: Optional[GranularityReport] = None,
    mainstream: Optional[dict[str, int]] = None,
    extension_count: Optional[int] = None,
    extensions: Optional[list[list[EventId]]] = None,
) -> dict:
    doc: dict[str, Any] = {"format_version": REPORT_VERSION}
    if report is not None:
        doc["granularity"] = {
            "per_chain": {
                cid: {
                    "block_count": g.block_count,
                    "mean_interval": rational(g.mean_interval),
                    "max_interval": g.max_interval,
                }
                for cid, g in report.per_chain.items()
            },
            "comparability_ratio": rational(report.comparability_ratio),
        }
    if mainstream is not None:
        doc["mainstream"] = {c: mainstream[c] for c in _chain_sort(mainstream)}
    if extension_count is not None:
        doc["extension_count"] = extension_count
    if extensions is not None:
        doc["extensions"] = [extension_to_json(x) for x in extensions]
    return doc


def dump_report(doc: dict) -> str:
    return _dump(doc).decode("utf-8")
