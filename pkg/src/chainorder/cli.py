"""Command-line entry point.

Exit codes: 0 success, 1 usage or parse error, 2 verification failure,
3 the requested pair is not ordered.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import fileio
from .errors import ChainOrderError, InvalidSnapshot, NotOrdered, Overflow
from .order import (
    EventId,
    OrderRelation,
    build_dag,
    canonical_order,
    count_linear_extensions,
    granularity,
    linear_extensions,
    mainstream_score,
    order_certificate,
    precedes,
)
from .chain import verify_snapshot
from .sim import run, sweep

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_NOT_ORDERED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--quiet", action="store_true", help="suppress status messages")
    common.add_argument("--format", choices=("text", "json"), default="text")

    parser = _Parser(prog="chainorder", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation config")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out-snapshot", required=True, type=Path)
    p.add_argument("--out-trace", required=True, type=Path)

    p = sub.add_parser("verify", parents=[common], help="check hashes and references")
    p.add_argument("snapshot", type=Path)

    p = sub.add_parser("order", parents=[common], help="canonical order, enumeration, or count")
    p.add_argument("snapshot", type=Path)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--canonical", action="store_true")
    mode.add_argument("--enumerate", action="store_true")
    mode.add_argument("--count", action="store_true")
    p.add_argument("--limit", type=int, default=100)

    p = sub.add_parser("metrics", parents=[common], help="granularity and mainstream report")
    p.add_argument("snapshot", type=Path)
    p.add_argument(
        "--window", action="append", default=[], metavar="CHAIN:LOW-HIGH",
        help="restrict mainstream counting for one chain (repeatable)",
    )

    p = sub.add_parser("certify", parents=[common], help="print a happens-before path")
    p.add_argument("snapshot", type=Path)
    p.add_argument("--from", dest="source", required=True)
    p.add_argument("--to", dest="target", required=True)

    p = sub.add_parser("export-dot", parents=[common], help="write the DAG as Graphviz DOT")
    p.add_argument("snapshot", type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("sweep", parents=[common], help="comparability ratio over many seeds")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seeds", type=int, default=20, help="run seeds 0..N-1 (offset by --seed)")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def _load(path: Path, verify: bool = True):
    return fileio.load_snapshot(path.read_bytes(), verify=verify)


def _emit(args, text: str, doc) -> None:
    if args.format == "json":
        sys.stdout.write(fileio.dump_report(doc) if isinstance(doc, dict) else json.dumps(doc) + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _status(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _fmt(ext) -> str:
    return " ".join(str(e) for e in ext)


def _cmd_simulate(args) -> int:
    config = fileio.load_config(args.config.read_bytes())
    if args.seed is not None:
        config = replace(config, seed=args.seed).validate()
    snapshot, trace = run(config)
    args.out_snapshot.write_bytes(fileio.save_snapshot(snapshot))
    args.out_trace.write_bytes(fileio.save_trace(trace))
    _status(args, f"simulated {snapshot.block_count()} blocks over {config.ticks} ticks")
    return EXIT_OK


def _cmd_verify(args) -> int:
    snapshot = _load(args.snapshot, verify=False)
    violations = verify_snapshot(snapshot)
    doc = {"format_version": 1, "ok": not violations, "violations": [
        {"kind": v.kind, "chain": v.chain, "height": v.height, "detail": v.detail}
        for v in violations
    ]}
    if args.format == "json":
        _emit(args, "", doc)
    elif violations:
        for v in violations:
            print(v)
    elif not args.quiet:
        print("ok")
    return EXIT_INVALID if violations else EXIT_OK


def _cmd_order(args) -> int:
    dag = build_dag(_load(args.snapshot))
    if args.count:
        n = count_linear_extensions(dag)
        _emit(args, str(n), fileio.build_report(extension_count=n))
    elif args.enumerate:
        try:
            exts = linear_extensions(dag, args.limit)
        except Overflow as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        _emit(args, "\n".join(_fmt(x) for x in exts),
              fileio.build_report(extension_count=len(exts), extensions=exts))
    else:
        seq = canonical_order(dag)
        doc = {"format_version": fileio.REPORT_VERSION, "canonical": fileio.extension_to_json(seq)}
        _emit(args, _fmt(seq), doc)
    return EXIT_OK


def _parse_window(items) -> Optional[dict]:
    if not items:
        return None
    window = {}
    for item in items:
        chain, sep, span = item.rpartition(":")
        lo, dash, hi = span.partition("-")
        if not sep or not dash or not lo.isdigit() or not hi.isdigit():
            raise ValueError(f"bad window {item!r}; expected CHAIN:LOW-HIGH")
        window[chain] = (int(lo), int(hi))
    return window


def _cmd_metrics(args) -> int:
    snapshot = _load(args.snapshot)
    dag = build_dag(snapshot, verify=False)
    report = granularity(snapshot, dag)
    scores = mainstream_score(dag, _parse_window(args.window))
    doc = fileio.build_report(report=report, mainstream=scores)
    lines = [f"comparability_ratio {report.comparability_ratio} ({float(report.comparability_ratio):.4f})"]
    for cid, g in report.per_chain.items():
        mean = "-" if g.mean_interval is None else f"{float(g.mean_interval):.3f}"
        lines.append(
            f"{cid}: blocks={g.block_count} mean_interval={mean} "
            f"max_interval={'-' if g.max_interval is None else g.max_interval} "
            f"mainstream={scores.get(cid, 0)}"
        )
    _emit(args, "\n".join(lines), doc)
    return EXIT_OK


def _cmd_certify(args) -> int:
    dag = build_dag(_load(args.snapshot))
    a, b = EventId.parse(args.source), EventId.parse(args.target)
    try:
        path = order_certificate(dag, a, b)
    except NotOrdered:
        relation = precedes(dag, a, b)
        text = "concurrent" if relation is OrderRelation.CONCURRENT else f"not ordered: {b} precedes {a}"
        _emit(args, text, {
            "format_version": 1, "ordered": False, "relation": relation.value, "path": None,
        })
        return EXIT_NOT_ORDERED
    _emit(args, " -> ".join(str(e) for e in path), {
        "format_version": 1, "ordered": True, "path": fileio.extension_to_json(path),
    })
    return EXIT_OK


def _cmd_export_dot(args) -> int:
    dag = build_dag(_load(args.snapshot))
    args.out.write_text(fileio.export_dot(dag), encoding="utf-8")
    _status(args, f"wrote {len(dag)} nodes to {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = fileio.load_config(args.config.read_bytes())
    base = args.seed or 0
    ratios = sweep(config, range(base, base + args.seeds), jobs=args.jobs)
    doc = {"format_version": 1, "comparability_ratio": {
        str(s): fileio.rational(r) for s, r in sorted(ratios.items())
    }}
    _emit(args, "\n".join(f"{s} {float(r):.6f}" for s, r in sorted(ratios.items())), doc)
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "order": _cmd_order,
    "metrics": _cmd_metrics,
    "certify": _cmd_certify,
    "export-dot": _cmd_export_dot,
    "sweep": _cmd_sweep,
}


def cli(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except InvalidSnapshot as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (ChainOrderError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli())
