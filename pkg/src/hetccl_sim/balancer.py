"""Speed-proportional micro-batch assignment and a data-parallel step model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping, Sequence

from .collectives import Communicator, time_collective
from .errors import RankMismatch, ZeroBatch
from .topology import ClusterTopology


@dataclass(frozen=True)
class ModelDesc:
    name: str
    params: int
    dtype_bytes: int = 2
    seq_len: int = 1024
    batch_B: int = 48

    def __post_init__(self):
        if self.params < 1 or self.seq_len < 1 or self.batch_B < 1:
            raise ValueError("params, seq_len and batch_B must be positive")
        if self.dtype_bytes not in (2, 4):
            raise ValueError("dtype_bytes must be 2 or 4")

    @property
    def param_bytes(self) -> int:
        return self.params * self.dtype_bytes


# Parameter counts and sequence lengths of the evaluated models.  Global
# batch sizes shrink with model size, as the largest batch that fits in
# memory does; they are multiples of 48 so that both the uniform split over
# 16 ranks and the 2:1 speed-proportional split are integral.
MODEL_PRESETS: Mapping[str, ModelDesc] = MappingProxyType({
    "gpt-125m": ModelDesc("gpt-125m", 125_000_000, 2, 1024, 192),
    "gpt-355m": ModelDesc("gpt-355m", 355_000_000, 2, 1024, 192),
    "llama-1b": ModelDesc("llama-1b", 1_000_000_000, 2, 8192, 48),
    "llama-3b": ModelDesc("llama-3b", 3_000_000_000, 2, 8192, 48),
})

_MODEL_KEYS = {"name", "params", "dtype_bytes", "seq_len", "batch_B"}


def load_model_desc(block: Mapping) -> ModelDesc:
    extra = set(block) - _MODEL_KEYS
    if extra:
        raise ValueError(f"unknown model keys {sorted(extra)}")
    if "params" not in block:
        raise ValueError("model block needs 'params'")
    return ModelDesc(name=block.get("name", "custom"), params=int(block["params"]),
                     dtype_bytes=int(block.get("dtype_bytes", 2)),
                     seq_len=int(block.get("seq_len", 1024)),
                     batch_B=int(block.get("batch_B", 48)))


# ---------------------------------------------------------------------------
# Assignment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeedProfile:
    speeds: tuple[float, ...]
    profiling_duration: float = 0.0

    def __post_init__(self):
        if not self.speeds or not all(s > 0 for s in self.speeds):
            raise ValueError("speeds must be a non-empty list of positive numbers")


@dataclass(frozen=True)
class Assignment:
    total: int
    per_rank: tuple[int, ...]

    def __post_init__(self):
        if sum(self.per_rank) != self.total:
            raise ValueError("micro-batches do not add up to the global batch")


def _check_speeds(speeds):
    speeds = list(speeds)
    if not speeds or not all(s > 0 and math.isfinite(s) for s in speeds):
        raise ValueError("speeds must be a non-empty list of positive finite numbers")
    return speeds


def proportional_shares(B: int, speeds: Sequence[float]) -> list[Fraction]:
    """Real-valued shares ``B * s_i / sum(s)`` as exact fractions."""
    s = [Fraction(x) for x in _check_speeds(speeds)]
    total = sum(s)
    return [B * x / total for x in s]


def assign_microbatches(B: int, speeds: Sequence[float]) -> Assignment:
    """Split ``B`` samples so that the slowest finisher is as early as possible.

    Start from the floor of each proportional share, then hand out the
    remaining samples one by one to the rank whose finishing time after one
    more sample, ``(b_i + 1) / s_i``, is smallest (lower rank wins ties).
    The result minimizes ``max(b_i / s_i)`` over all integer splits.
    """
    if B < 1:
        raise ZeroBatch(f"global batch must be >= 1, got {B}")
    shares = proportional_shares(B, speeds)
    s = [Fraction(x) for x in speeds]
    b = [math.floor(q) for q in shares]
    for _ in range(B - sum(b)):
        i = min(range(len(b)), key=lambda j: ((b[j] + 1) / s[j], j))
        b[i] += 1
    return Assignment(B, tuple(b))


def uniform_assignment(B: int, world: int) -> Assignment:
    return assign_microbatches(B, [1.0] * world)


# ---------------------------------------------------------------------------
# ZeRO communication schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroSchedule:
    """Per-step collectives as ``(op, nbytes)`` pairs.

    Stage 1: all_reduce of gradients, then all_gather of the parameters each
    rank updated from its optimizer-state shard.
    Stage 3: all_gather of parameters for the forward pass and again for the
    backward pass, then reduce_scatter of gradients.
    """

    stage: int
    collectives: tuple[tuple[str, int], ...]
    itemsize: int = 2
    seq_len: int = 1

    def __post_init__(self):
        if self.stage not in (1, 3):
            raise ValueError("ZeRO stage must be 1 or 3")
        if not self.collectives or any(v <= 0 for _, v in self.collectives):
            raise ValueError("schedule volumes must be positive")

    @classmethod
    def for_model(cls, model: ModelDesc, stage: int, world_size: int) -> "ZeroSchedule":
        w = model.dtype_bytes
        padded = -(-model.params // world_size) * world_size  # flat buffers pad to the world size
        if stage == 1:
            ops = (("all_reduce", model.params * w), ("all_gather", padded * w))
        elif stage == 3:
            ops = (("all_gather", padded * w), ("all_gather", padded * w),
                   ("reduce_scatter", padded * w))
        else:
            raise ValueError("ZeRO stage must be 1 or 3")
        return cls(stage, ops, w, model.seq_len)

    def bytes_of(self, op: str) -> int:
        return sum(v for o, v in self.collectives if o == op)


# ---------------------------------------------------------------------------
# Step simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepReport:
    compute_time: float
    comm_time: float
    tokens: int

    @property
    def step_time(self) -> float:
        return self.compute_time + self.comm_time

    @property
    def throughput(self) -> float:
        t = self.step_time
        return self.tokens / t if t > 0 else 0.0


def rank_speeds(comm: Communicator, topology: ClusterTopology | None = None) -> list[float]:
    topo = topology or comm.cluster.topology
    return [topo.node(ep.node).device_speed for ep in comm.ranks]


def simulate_step(assignment: Assignment, schedule: ZeroSchedule | None, comm: Communicator,
                  topology: ClusterTopology | None = None, seq_len: int | None = None) -> StepReport:
    """One synchronous step: slowest rank's compute, then the schedule's collectives."""
    if len(assignment.per_rank) != comm.world_size:
        raise RankMismatch(
            f"assignment covers {len(assignment.per_rank)} ranks, communicator has {comm.world_size}")
    if seq_len is None:
        seq_len = schedule.seq_len if schedule is not None else 1
    speeds = rank_speeds(comm, topology)
    compute = max(b * seq_len / s for b, s in zip(assignment.per_rank, speeds))
    comm_time = 0.0
    if schedule is not None:
        for op, nbytes in schedule.collectives:
            comm_time += time_collective(comm, op, nbytes, schedule.itemsize).completion_time
    return StepReport(compute, comm_time, assignment.total * seq_len)


def simulate_profiling(model: ModelDesc, topology: ClusterTopology, warmup_steps: int,
                       comm: Communicator | None = None, stage: int = 3) -> SpeedProfile:
    """Warm-up run with a uniform split; speeds come from the topology."""
    if warmup_steps < 1:
        raise ValueError("warmup_steps must be >= 1")
    if comm is None:
        from .cluster import Cluster
        comm = Cluster(topology).communicator()
    schedule = ZeroSchedule.for_model(model, stage, comm.world_size)
    step = simulate_step(uniform_assignment(model.batch_B, comm.world_size), schedule, comm,
                         topology, model.seq_len)
    return SpeedProfile(tuple(rank_speeds(comm, topology)), warmup_steps * step.step_time)


def efficiency(het: StepReport, homo_a: StepReport, homo_b: StepReport) -> float:
    """Mixed-vendor throughput over the sum of the two homogeneous throughputs."""
    return het.throughput / (homo_a.throughput + homo_b.throughput)
