"""Sweeps behind the command-line harness.

Each ``run_*`` function returns a header and a list of row tuples; writing
CSV is left to :func:`write_csv` so that library users can consume the rows
directly.  Floats are written with ``repr`` so output is byte-reproducible.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .balancer import (MODEL_PRESETS, Assignment, ModelDesc, ZeroSchedule, assign_microbatches,
                       efficiency, rank_speeds, simulate_profiling, simulate_step,
                       uniform_assignment)
from .cluster import SCENARIOS, Cluster, p2p_pair, scenario_devices
from .collectives import OPS, REDUCING, ROOTED, CollectiveSpec, run_collective, time_collective
from .errors import SelfCheckFailed
from .platform_registry import Platform
from .topology import ClusterTopology
from .transport import Transfer, measured_bandwidth

DEFAULT_SIZES = "1024:1073741824:x2"
HOMO_WORLDS = (2, 4, 8)
HET_WORLDS = (8, 12, 16)


def parse_sizes(text: str) -> list[int]:
    """``START:STOP:xF`` geometric range (inclusive) or a comma list of byte counts."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3 or not parts[2].startswith("x"):
            raise ValueError(f"size range {text!r} should look like 1024:1073741824:x2")
        start, stop, factor = int(parts[0]), int(parts[1]), int(parts[2][1:])
        if start < 1 or stop < start or factor < 2:
            raise ValueError(f"bad size range {text!r}")
        sizes, s = [], start
        while s <= stop:
            sizes.append(s)
            s *= factor
    else:
        sizes = [int(x) for x in text.split(",") if x.strip()]
    if not sizes or sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be positive and strictly increasing")
    return sizes


@dataclass(frozen=True)
class SweepSpec:
    sizes: tuple[int, ...]
    scenarios: tuple[str, ...] = SCENARIOS
    rdma: bool = True

    def __post_init__(self):
        if not self.sizes or any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("sizes must be strictly increasing")
        bad = [s for s in self.scenarios if s not in SCENARIOS]
        if bad or not self.scenarios:
            raise ValueError(f"unknown scenarios {bad}; expected a subset of {SCENARIOS}")


def write_csv(header: Sequence[str], rows: Sequence[tuple], out=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as f:
            f.write(text)
    return text


# ---------------------------------------------------------------------------
# Point-to-point
# ---------------------------------------------------------------------------

P2P_HEADER = ("scenario", "path", "size_bytes", "duration_s", "bandwidth_Bps")


def run_p2p_sweep(topology: ClusterTopology, spec: SweepSpec) -> list[tuple]:
    """One transfer per (scenario, path, size) between the first devices of two nodes."""
    paths = ("rdma", "staged") if spec.rdma else ("staged",)
    rows = []
    for scenario in spec.scenarios:
        cluster = Cluster(topology)
        a, b = cluster.endpoints(p2p_pair(topology, scenario))
        for path in paths:
            for size in spec.sizes:
                a.clock = b.clock = 0.0
                cluster.transport.reset()
                r = cluster.transport.post([Transfer(a, b, size, prefer_rdma=path == "rdma")])[0]
                if r.path_used != path:
                    continue  # e.g. no NIC: rdma is not available for this pair
                rows.append((scenario, path, size, r.duration, measured_bandwidth(r)))
    return sorted(rows, key=lambda r: (SCENARIOS.index(r[0]), r[1], r[2]))


# ---------------------------------------------------------------------------
# Collectives
# ---------------------------------------------------------------------------

COLL_HEADER = ("op", "scenario", "world_size", "size_bytes", "duration_s", "algbw_Bps",
               "busbw_Bps", "degenerate")

_FOLD = {"reduce_sum": np.add, "reduce_min": np.minimum, "reduce_max": np.maximum}


def reference_result(op: str, arrays, groups, combiner="reduce_sum", root=0):
    """Direct evaluation of ``op`` with the grouped combine order."""
    w = len(arrays)
    fn = _FOLD.get(combiner)

    def fold(xs):
        acc = xs[0].copy()
        for x in xs[1:]:
            acc = fn(acc, x)
        return acc

    if op in REDUCING:
        total = fold([fold([arrays[p] for p in g]) for g in groups])
        if op == "all_reduce":
            return [total] * w
        if op == "reduce":
            return [total if p == root else None for p in range(w)]
        m = len(total) // w
        return [total[q * m:(q + 1) * m] for q in range(w)]
    if op == "all_gather":
        return [np.concatenate(arrays)] * w
    if op == "broadcast":
        return [arrays[root]] * w
    m = len(arrays[0]) // w
    return [np.concatenate([arrays[p][q * m:(q + 1) * m] for p in range(w)]) for q in range(w)]


def self_check(cluster: Cluster, locations, ops: Sequence[str], seed: int, trials: int = 3) -> None:
    """Run each op on random payloads and compare bitwise with :func:`reference_result`."""
    rng = np.random.default_rng(seed)
    comm = cluster.communicator(locations)
    w = comm.world_size
    for op in ops:
        for _ in range(trials):
            n = w * int(rng.integers(1, 5))
            arrays = [rng.standard_normal(n).astype("<f4") for _ in range(w)]
            combiner = str(rng.choice(list(_FOLD)))
            root = int(rng.integers(w))
            spec = CollectiveSpec.of(op, "f32", combiner, root)
            got, _ = run_collective(comm, arrays, spec)
            want = reference_result(op, arrays, comm.groups, combiner, root)
            for q, (x, y) in enumerate(zip(got, want)):
                if (x is None) != (y is None) or (x is not None and not np.array_equal(x, y)):
                    raise SelfCheckFailed(
                        f"{op} with {w} ranks ({combiner}, root {root}) disagrees with the "
                        f"reference at rank {q}")


def _coll_bytes(op: str, size: int, world: int, itemsize: int) -> int:
    """Largest byte count <= size that the op can split over ``world`` ranks."""
    unit = itemsize * (world if op in ("all_gather", "reduce_scatter", "all_to_all") else 1)
    return (size // unit) * unit


def run_collective_sweep(topology: ClusterTopology, spec: SweepSpec, ops: Sequence[str] = OPS,
                         worlds: Sequence[int] = HOMO_WORLDS + HET_WORLDS[1:],
                         seed: int = 0, itemsize: int = 4) -> list[tuple]:
    """Timing rows for each feasible (scenario, world, op, size).

    Homogeneous scenarios are limited by their vendor's device count, so they
    stop where the heterogeneous scenario keeps scaling.  Before any timing,
    every (scenario, world) is checked against :func:`reference_result`.
    """
    cells = []
    for scenario in spec.scenarios:
        for world in worlds:
            try:
                cells.append((scenario, world, scenario_devices(topology, scenario, world)))
            except ValueError:
                continue
    if not cells:
        raise ValueError("no feasible (scenario, world size) combination for this topology")

    cluster = Cluster(topology)
    for i, (_, _, locs) in enumerate(cells):
        self_check(cluster, locs, ops, seed + i)

    rows = []
    for scenario, world, locs in cells:
        for op in ops:
            for size in spec.sizes:
                nbytes = _coll_bytes(op, size, world, itemsize)
                if nbytes == 0:
                    continue
                comm = cluster.communicator(locs, prefer_rdma=spec.rdma)
                rep = time_collective(comm, op, nbytes, itemsize)
                rows.append((op, scenario, world, nbytes, rep.completion_time, rep.algbw,
                             rep.bus_bandwidth, int(rep.degenerate)))
    return sorted(rows, key=lambda r: (OPS.index(r[0]), SCENARIOS.index(r[1]), r[2], r[3]))


# ---------------------------------------------------------------------------
# Training simulation
# ---------------------------------------------------------------------------

TRAIN_HEADER = ("model", "zero_stage", "scenario", "balance", "world_size", "batch",
                "compute_s", "comm_s", "step_s", "throughput_tok_s", "speedup_vs_uniform",
                "efficiency", "profiling_s")


@dataclass(frozen=True)
class TrainResult:
    model: str
    zero_stage: int
    scenario: str
    balance: bool
    world_size: int
    assignment: Assignment
    compute_time: float
    comm_time: float
    step_time: float
    throughput: float
    speedup: float
    efficiency: float | None
    profiling_time: float

    def row(self) -> tuple:
        return (self.model, self.zero_stage, self.scenario, "on" if self.balance else "off",
                self.world_size, self.assignment.total, self.compute_time, self.comm_time,
                self.step_time, self.throughput, self.speedup,
                "" if self.efficiency is None else self.efficiency, self.profiling_time)


def _all_devices(topology, scenario):
    if scenario == "het":
        return topology.devices()
    platform = Platform.CUDA if scenario == "homoA" else Platform.HIP
    return [(n.id, d) for n in topology.nodes_of(platform) for d in range(n.device_count)]


def run_train_sim(model: ModelDesc | str, zero_stage: int, scenario: str = "het",
                  balance: bool = True, topology: ClusterTopology | None = None,
                  comm_enabled: bool = True, warmup_steps: int = 3) -> TrainResult:
    """Simulate one training step on every device of ``scenario``.

    The speedup compares against the uniform split on the same devices.  For
    the mixed cluster, efficiency divides by the throughput of each vendor's
    devices run on their own with the same per-device micro-batches.
    """
    if isinstance(model, str):
        if model not in MODEL_PRESETS:
            raise ValueError(f"unknown model {model!r}; presets: {sorted(MODEL_PRESETS)}")
        model = MODEL_PRESETS[model]
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    cluster = Cluster(topology)
    topo = cluster.topology
    locs = _all_devices(topo, scenario)
    if not locs:
        raise ValueError(f"topology has no devices for scenario {scenario}")

    def schedule(world):
        return ZeroSchedule.for_model(model, zero_stage, world) if comm_enabled else None

    def step(locations, assignment):
        comm = cluster.communicator(locations)
        return simulate_step(assignment, schedule(len(locations)), comm, topo, model.seq_len)

    comm = cluster.communicator(locs)
    profile = simulate_profiling(model, topo, warmup_steps, comm=comm, stage=zero_stage)
    balanced = assign_microbatches(model.batch_B, rank_speeds(comm, topo))
    uniform = uniform_assignment(model.batch_B, len(locs))
    chosen = balanced if balance else uniform
    report = step(locs, chosen)
    other = step(locs, uniform if balance else balanced)
    speedup = report.throughput / other.throughput if balance else 1.0

    eff = None
    if scenario == "het":
        homo = []
        for platform in (Platform.CUDA, Platform.HIP):
            idx = [i for i, (n, _) in enumerate(locs) if topo.node(n).platform is platform]
            part = Assignment(sum(chosen.per_rank[i] for i in idx),
                              tuple(chosen.per_rank[i] for i in idx))
            homo.append(step([locs[i] for i in idx], part))
        eff = efficiency(report, *homo)

    return TrainResult(model.name, zero_stage, scenario, balance, len(locs), chosen,
                       report.compute_time, report.comm_time, report.step_time,
                       report.throughput, speedup, eff,
                       profile.profiling_duration if balance else 0.0)
