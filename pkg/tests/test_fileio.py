import json
from pathlib import Path

import pytest

from chainorder import fileio
from chainorder.chain import forget_payload
from chainorder.errors import InvalidSnapshot, ParseError
from chainorder.order import build_dag, granularity, mainstream_score
from chainorder.scenarios import established_rules, free_interaction
from chainorder.sim import autonomous_config, run

GOLDEN = Path(__file__).resolve().parent.parent / "golden"


@pytest.fixture
def snap():
    s, _ = run(autonomous_config(["A", "B", "C", "D"], 40, 0.5, seed=3))
    forget_payload(s.chains["B"], 1)
    return s


class TestSnapshotFile:
    def test_round_trip(self, snap):
        data = fileio.save_snapshot(snap)
        loaded = fileio.load_snapshot(data)
        assert loaded == snap
        assert fileio.save_snapshot(loaded) == data

    def test_key_order(self, snap):
        doc = json.loads(fileio.save_snapshot(snap))
        assert list(doc) == ["format_version", "chains", "pending"]
        assert list(doc["chains"][0]) == ["id", "forgotten", "blocks"]
        assert list(doc["chains"][0]["blocks"][0]) == [
            "height", "prev_hash", "payload_hash", "summary_hash", "accepted", "local_timestamp",
        ]

    def test_truncated_digest_names_path(self, snap):
        doc = json.loads(fileio.save_snapshot(snap))
        doc["chains"][1]["blocks"][2]["prev_hash"] = doc["chains"][1]["blocks"][2]["prev_hash"][:-2]
        with pytest.raises(ParseError) as info:
            fileio.load_snapshot(json.dumps(doc))
        assert info.value.path == "chains[1].blocks[2].prev_hash"

    def test_uppercase_hex_rejected(self, snap):
        doc = json.loads(fileio.save_snapshot(snap))
        doc["chains"][0]["blocks"][0]["payload_hash"] = doc["chains"][0]["blocks"][0]["payload_hash"].upper()
        with pytest.raises(ParseError):
            fileio.load_snapshot(json.dumps(doc))

    def test_missing_field(self, snap):
        doc = json.loads(fileio.save_snapshot(snap))
        del doc["chains"][0]["blocks"][0]["accepted"]
        with pytest.raises(ParseError, match=r"chains\[0\]\.blocks\[0\]\.accepted"):
            fileio.load_snapshot(json.dumps(doc))

    def test_bad_json_reports_line(self):
        with pytest.raises(ParseError) as info:
            fileio.load_snapshot(b'{\n  "format_version": 1,\n  oops\n}')
        assert info.value.line == 3

    def test_dangling_reference(self, snap):
        doc = json.loads(fileio.save_snapshot(snap))
        for chain in doc["chains"]:
            for block in chain["blocks"]:
                if block["accepted"]:
                    block["accepted"][0]["from_block_hash"] = "ab" * 32
                    break
            else:
                continue
            break
        with pytest.raises(InvalidSnapshot):
            fileio.load_snapshot(json.dumps(doc))
        fileio.load_snapshot(json.dumps(doc), verify=False)

    def test_wrong_version(self, snap):
        doc = json.loads(fileio.save_snapshot(snap))
        doc["format_version"] = 2
        with pytest.raises(ParseError):
            fileio.load_snapshot(json.dumps(doc))


def test_trace_round_trip():
    _, trace = run(autonomous_config(["A", "B", "C"], 30, 0.5, seed=8))
    data = fileio.save_trace(trace)
    assert fileio.load_trace(data) == trace
    assert fileio.save_trace(fileio.load_trace(data)) == data


def test_config_round_trip():
    for cfg in (established_rules(), free_interaction(), autonomous_config(["A", "B"], 9, 0.25, 5)):
        assert fileio.config_from_dict(fileio.config_to_dict(cfg)) == cfg


def test_config_scalar_probability():
    cfg = fileio.load_config(json.dumps({
        "chains": ["A", "B"], "ticks": 3, "policy": "autonomous", "autonomous": {"block_prob": 0.3},
    }))
    assert cfg.autonomous.block_prob == {"A": 0.3, "B": 0.3}


@pytest.mark.parametrize("name", ["established_rules", "free_interaction", "autonomous_small"])
def test_golden_files_reproduce(name):
    cfg = fileio.load_config((GOLDEN / f"{name}.config.json").read_bytes())
    snap, trace = run(cfg)
    assert fileio.save_snapshot(snap) == (GOLDEN / f"{name}.snapshot.json").read_bytes()
    assert fileio.save_trace(trace) == (GOLDEN / f"{name}.trace.json").read_bytes()


class TestDot:
    def test_two_node_path(self):
        from chainorder.order import EventId as E, HappensBeforeDag
        dot = fileio.export_dot(HappensBeforeDag([E("A", 0), E("A", 1)], [(E("A", 0), E("A", 1))]))
        assert '"A_0" -> "A_1";' in dot
        assert "dashed" not in dot

    def test_empty(self):
        from chainorder.order import HappensBeforeDag
        dot = fileio.export_dot(HappensBeforeDag([], []))
        assert dot.startswith("digraph") and dot.rstrip().endswith("}")
        assert "->" not in dot

    def test_free_interaction(self):
        snap, _ = run(free_interaction())
        dot = fileio.export_dot(build_dag(snap))
        labels = [line for line in dot.splitlines() if "[label=" in line]
        assert len(labels) == 11
        dashed = [line for line in dot.splitlines() if "dashed" in line]
        assert len(dashed) == 10
        assert dot == fileio.export_dot(build_dag(snap))


def test_report_rationals():
    snap, _ = run(free_interaction())
    dag = build_dag(snap)
    doc = fileio.build_report(granularity(snap, dag), mainstream_score(dag), extension_count=2)
    ratio = doc["granularity"]["comparability_ratio"]
    assert (ratio["numerator"], ratio["denominator"]) == (38, 39)
    assert ratio["decimal"] == pytest.approx(38 / 39)
    assert doc["extension_count"] == 2
    assert list(doc["mainstream"]) == ["A", "B", "C"]
