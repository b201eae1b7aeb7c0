"""``hetccl-sim`` command line: p2p, coll and train sweeps written as CSV."""

from __future__ import annotations

import argparse
import json
import sys

from . import bench
from .balancer import MODEL_PRESETS
from .cluster import SCENARIOS
from .collectives import OPS
from .errors import HetCCLError, SelfCheckFailed
from .topology import load_topology_file, reference_cluster

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SELFCHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _scenarios(text):
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    if text == "all":
        return SCENARIOS
    bad = [s for s in names if s not in SCENARIOS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"scenarios must come from {', '.join(SCENARIOS)}")
    return names


def _ops(text):
    if text == "all":
        return OPS
    names = tuple(s.strip() for s in text.split(","))
    bad = [s for s in names if s not in OPS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown ops {bad}; expected some of {', '.join(OPS)}")
    return names


def _ints(text):
    try:
        values = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("world sizes must be >= 1")
    return values


def _sizes(text):
    try:
        return bench.parse_sizes(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _models(text):
    if text == "all":
        return list(MODEL_PRESETS)
    names = [s.strip() for s in text.split(",")]
    bad = [s for s in names if s not in MODEL_PRESETS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown models {bad}; presets: {', '.join(MODEL_PRESETS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hetccl-sim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--topology", help="cluster JSON file (default: built-in 4-node cluster)")
    common.add_argument("--out", help="write CSV here instead of stdout")
    common.add_argument("--seed", type=int, default=0, help="seed for self-check payloads")

    sp = sub.add_parser("p2p", parents=[common], help="point-to-point bandwidth sweep")
    sp.add_argument("--scenario", type=_scenarios, default=SCENARIOS)
    sp.add_argument("--sizes", type=_sizes, default=bench.parse_sizes(bench.DEFAULT_SIZES))
    sp.add_argument("--no-rdma", action="store_true", help="staged path only")

    sc = sub.add_parser("coll", parents=[common], help="collective bandwidth sweep")
    sc.add_argument("--scenario", type=_scenarios, default=SCENARIOS)
    sc.add_argument("--ops", type=_ops, default=OPS)
    sc.add_argument("--world", type=_ints, default=[2, 4, 8, 12, 16])
    sc.add_argument("--sizes", type=_sizes, default=bench.parse_sizes(bench.DEFAULT_SIZES))
    sc.add_argument("--no-rdma", action="store_true", help="stage inter-node traffic through hosts")

    st = sub.add_parser("train", parents=[common], help="training-step simulation")
    st.add_argument("--model", type=_models, default=list(MODEL_PRESETS))
    st.add_argument("--zero", type=int, choices=(1, 3), default=3)
    st.add_argument("--scenario", choices=SCENARIOS, default="het")
    st.add_argument("--balance", choices=("on", "off"), default="on")
    st.add_argument("--warmup", type=int, default=3)
    st.add_argument("--no-comm", action="store_true", help="drop communication from the step")
    return p


def _topology(path):
    return reference_cluster() if path is None else load_topology_file(path)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE

    try:
        topo = _topology(args.topology)
        if args.command == "p2p":
            spec = bench.SweepSpec(tuple(args.sizes), tuple(args.scenario), not args.no_rdma)
            header, rows = bench.P2P_HEADER, bench.run_p2p_sweep(topo, spec)
        elif args.command == "coll":
            spec = bench.SweepSpec(tuple(args.sizes), tuple(args.scenario), not args.no_rdma)
            header = bench.COLL_HEADER
            rows = bench.run_collective_sweep(topo, spec, args.ops, args.world, args.seed)
        else:
            header = bench.TRAIN_HEADER
            rows = [bench.run_train_sim(m, args.zero, args.scenario, args.balance == "on", topo,
                                        comm_enabled=not args.no_comm,
                                        warmup_steps=args.warmup).row()
                    for m in args.model]
    except SelfCheckFailed as e:
        print(f"self-check failed: {e}", file=sys.stderr)
        return EXIT_SELFCHECK
    except (HetCCLError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    text = bench.write_csv(header, rows, args.out)
    if args.out is None:
        sys.stdout.write(text)
    elif args.command == "train":
        for r in rows:
            print(f"{r[0]}: {r[9]:.1f} tok/s, speedup {r[10]:.3f}, efficiency {r[11] or '-'}")
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
