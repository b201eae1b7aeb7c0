"""Hierarchical collectives over a mixed-vendor communicator.

Ranks are partitioned into vendor groups, one per (node, platform).  Work
inside a group is handed to a :class:`VendorBackend` (the vendor library
analog) as a single opaque call timed with the ring formulas in
:func:`ring_time`.  Work between groups goes through the transport layer as
point-to-point transfers, which is where RDMA or host staging comes in.

Combine order is fixed: inside a group, ranks are folded in ascending order;
group partials are then folded in ascending group order (groups ordered by
their lowest rank).  With one group this is a plain left fold over ranks.
Because every combine happens at the rank that owns the result, outputs are
exactly reproducible for floating point as well.

Every collective can also run in timing-only mode (no payload), which goes
through the same schedule and the same transfers; that is what large
training-step volumes use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidRoot, LengthMismatch, MixedGroup
from .platform_registry import Platform, Runtime
from .topology import LinkModel
from .transport import Endpoint, Transfer, Transport

OPS = ("all_reduce", "all_gather", "reduce_scatter", "reduce", "broadcast", "all_to_all")
REDUCING = frozenset({"all_reduce", "reduce_scatter", "reduce"})
ROOTED = frozenset({"reduce", "broadcast"})
COMBINERS = ("reduce_sum", "reduce_min", "reduce_max")
DTYPES = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "i32": np.dtype("<i4"),
}

# Pipelining chunk for the rooted (chain) algorithms.
CHUNK_BYTES = 512 * 1024

# Bus bandwidth correction factors, following the vendor benchmark-tool
# convention: busbw = algbw * factor(n), algbw = size / time, where size is
# the full vector for all_reduce/reduce/broadcast/reduce_scatter, the full
# gathered output for all_gather, and one rank's send buffer for all_to_all.
BUS_FACTOR = {
    "all_reduce": lambda n: 2.0 * (n - 1) / n,
    "all_gather": lambda n: (n - 1) / n,
    "reduce_scatter": lambda n: (n - 1) / n,
    "all_to_all": lambda n: (n - 1) / n,
    "broadcast": lambda n: 1.0,
    "reduce": lambda n: 1.0,
}


@dataclass(frozen=True)
class CollectiveSpec:
    op: str
    dtype: str = "f32"
    combiner: str | None = None
    root: int | None = None

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown collective {self.op!r}")
        if self.dtype not in DTYPES:
            raise ValueError(f"unsupported dtype {self.dtype!r}; expected one of {sorted(DTYPES)}")
        if (self.combiner is not None) != (self.op in REDUCING):
            raise ValueError(f"{self.op} {'needs' if self.op in REDUCING else 'takes no'} combiner")
        if self.combiner is not None and self.combiner not in COMBINERS:
            raise ValueError(f"unknown combiner {self.combiner!r}")
        if (self.root is not None) != (self.op in ROOTED):
            raise ValueError(f"{self.op} {'needs' if self.op in ROOTED else 'takes no'} root")

    @classmethod
    def of(cls, op: str, dtype: str = "f32", combiner: str = "reduce_sum", root: int = 0):
        """Spec with the op-appropriate subset of ``combiner`` and ``root``."""
        return cls(op, dtype,
                   combiner if op in REDUCING else None,
                   root if op in ROOTED else None)

    @property
    def np_dtype(self) -> np.dtype:
        return DTYPES[self.dtype]


@dataclass(frozen=True)
class CollectiveReport:
    op: str
    world_size: int
    nbytes: int
    completion_time: float
    phases: tuple[tuple[str, float], ...] = ()

    @property
    def degenerate(self) -> bool:
        return not self.completion_time > 0

    @property
    def algbw(self) -> float:
        return 0.0 if self.degenerate else self.nbytes / self.completion_time

    @property
    def bus_bandwidth(self) -> float:
        return self.algbw * BUS_FACTOR[self.op](self.world_size)


class TraceEvent(NamedTuple):
    kind: str  # "backend" or "p2p"
    op: str
    ranks: tuple[int, ...]
    nbytes: int


def ring_time(n_ranks: int, size_bytes: float, link: LinkModel, op: str,
              chunk_bytes: int = CHUNK_BYTES) -> float:
    """Analytic ring time for ``op`` moving ``size_bytes`` among ``n_ranks``.

    all_reduce:                        2(n-1) * (a + (S/n)/b)
    all_gather, reduce_scatter, a2a:    (n-1) * (a + (S/n)/b)
    broadcast, reduce (chain, m chunks): (n-2+m) * (a + (S/m)/b),  m = ceil(S/chunk)
    """
    if n_ranks < 1:
        raise ValueError("n_ranks must be >= 1")
    if op not in OPS:
        raise ValueError(f"unknown collective {op!r}")
    n = n_ranks
    if n == 1:
        return 0.0
    a, b = link.alpha, link.beta
    if op == "all_reduce":
        return 2 * (n - 1) * (a + (size_bytes / n) / b)
    if op in ("all_gather", "reduce_scatter", "all_to_all"):
        return (n - 1) * (a + (size_bytes / n) / b)
    m = max(1, math.ceil(size_bytes / chunk_bytes))
    return (n - 2 + m) * (a + (size_bytes / m) / b)


def split_bounds(n: int, parts: int, start: int = 0) -> list[tuple[int, int]]:
    """``np.array_split`` boundaries as (start, stop) pairs."""
    q, r = divmod(n, parts)
    out, a = [], start
    for i in range(parts):
        b = a + q + (1 if i < r else 0)
        out.append((a, b))
        a = b
    return out


# ---------------------------------------------------------------------------
# Vendor-local backend
# ---------------------------------------------------------------------------


class VendorBackend:
    """Single-platform collective library for one vendor group.

    ``views`` are per-member typed arrays (ascending rank order) or ``None``
    in timing-only mode.  Every method returns the modelled duration.
    """

    def __init__(self, runtime: Runtime, platform: Platform, link: LinkModel, itemsize: int):
        self.runtime = runtime
        self.platform = platform
        self.link = link
        self.itemsize = itemsize

    def fold(self, combiner: str, arrays):
        acc = arrays[0].copy()
        for x in arrays[1:]:
            acc = self.runtime.launch(self.platform, combiner, acc, x)
        return acc

    def _steps(self, steps: int, nbytes: float) -> float:
        return steps * (self.link.alpha + nbytes / self.link.beta) if steps else 0.0

    def all_reduce(self, k, views, combiner, n):
        if views is not None and k > 1:
            total = self.fold(combiner, [v[:n] for v in views])
            for v in views:
                v[:n] = total
        return ring_time(k, n * self.itemsize, self.link, "all_reduce")

    def reduce_scatter(self, k, views, combiner, blocks):
        """Member ``m`` ends up with the group fold over each range in ``blocks[m]``."""
        if views is not None and k > 1:
            for m, ranges in enumerate(blocks):
                for a, b in ranges:
                    views[m][a:b] = self.fold(combiner, [v[a:b] for v in views])
        largest = max(sum(b - a for a, b in r) for r in blocks)
        return self._steps(k - 1, largest * self.itemsize)

    def all_gather(self, k, views, blocks):
        """Every member receives each member's ``blocks`` ranges."""
        if views is not None and k > 1:
            for m, ranges in enumerate(blocks):
                for a, b in ranges:
                    for j, v in enumerate(views):
                        if j != m:
                            v[a:b] = views[m][a:b]
        largest = max(sum(b - a for a, b in r) for r in blocks)
        return self._steps(k - 1, largest * self.itemsize)

    def reduce(self, k, views, combiner, n, root):
        if views is not None and k > 1:
            views[root][:n] = self.fold(combiner, [v[:n] for v in views])
        return ring_time(k, n * self.itemsize, self.link, "reduce")

    def broadcast(self, k, views, n, root):
        if views is not None:
            for j, v in enumerate(views):
                if j != root:
                    v[:n] = views[root][:n]
        return ring_time(k, n * self.itemsize, self.link, "broadcast")

    def all_to_all(self, k, in_views, out_views, block_of, m):
        """``out[q][block_of[p]] = in[p][block_of[q]]`` for every member pair."""
        if in_views is not None:
            for p in range(k):
                for q in range(k):
                    a, b = block_of[q] * m, block_of[p] * m
                    out_views[q][b:b + m] = in_views[p][a:a + m]
        return ring_time(k, k * m * self.itemsize, self.link, "all_to_all")


def backend_collective(cluster, group: Sequence[Endpoint], spec: CollectiveSpec, buffers):
    """Run ``spec`` inside one vendor group with the vendor backend.

    ``buffers`` holds one array per member.  Returns ``(results, duration)``.
    For reduce/broadcast ``spec.root`` indexes into ``group``.
    """
    keys = {(ep.node, ep.platform) for ep in group}
    if len(keys) != 1:
        raise MixedGroup("a vendor group must share one node and one platform: "
                         + ", ".join(f"{n}/{p}" for n, p in sorted(keys, key=str)))
    k = len(group)
    if len(buffers) != k:
        raise LengthMismatch(f"expected {k} buffers, got {len(buffers)}")
    dtype = spec.np_dtype
    arrays = [np.array(b, dtype=dtype).ravel() for b in buffers]
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1 or 0 in lengths:
        raise LengthMismatch(f"group members hold unequal or empty payloads: {sorted(lengths)}")
    n = lengths.pop()
    node = cluster.topology.node(group[0].node)
    be = VendorBackend(cluster.runtime, group[0].platform, node.pcie, dtype.itemsize)
    op = spec.op

    if op == "all_reduce":
        d = be.all_reduce(k, arrays, spec.combiner, n)
        return arrays, d
    if op == "reduce_scatter":
        if n % k:
            raise LengthMismatch(f"{n} elements do not split evenly over {k} ranks")
        m = n // k
        blocks = [[(j * m, (j + 1) * m)] for j in range(k)]
        d = be.reduce_scatter(k, arrays, spec.combiner, blocks)
        return [arrays[j][j * m:(j + 1) * m].copy() for j in range(k)], d
    if op == "all_gather":
        out = [np.zeros(n * k, dtype) for _ in range(k)]
        for j in range(k):
            out[j][j * n:(j + 1) * n] = arrays[j]
        d = be.all_gather(k, out, [[(j * n, (j + 1) * n)] for j in range(k)])
        return out, d
    if op in ROOTED:
        if not 0 <= spec.root < k:
            raise InvalidRoot(f"root {spec.root} outside group of {k}")
        if op == "reduce":
            d = be.reduce(k, arrays, spec.combiner, n, spec.root)
            return [arrays[j] if j == spec.root else None for j in range(k)], d
        d = be.broadcast(k, arrays, n, spec.root)
        return arrays, d
    if n % k:
        raise LengthMismatch(f"{n} elements do not split into {k} blocks")
    m = n // k
    out = [np.zeros(n, dtype) for _ in range(k)]
    d = be.all_to_all(k, arrays, out, list(range(k)), m)
    return out, d


# ---------------------------------------------------------------------------
# Communicator
# ---------------------------------------------------------------------------


class Communicator:
    """Ordered ranks plus their vendor-group structure.

    ``hierarchical=False`` treats every rank as its own group, which gives a
    flat schedule where all traffic goes through point-to-point transfers.
    The communicator's endpoints form one timeline, so it keeps its own
    transport (and with it its own NIC occupancy).
    """

    def __init__(self, cluster, ranks: Sequence[Endpoint], *, prefer_rdma: bool = True,
                 hierarchical: bool = True):
        if not ranks:
            raise ValueError("communicator needs at least one rank")
        if len({id(ep) for ep in ranks}) != len(ranks) or len({ep.rank for ep in ranks}) != len(ranks):
            raise ValueError("ranks must be distinct endpoints")
        self.cluster = cluster
        self.ranks = list(ranks)
        self.prefer_rdma = prefer_rdma
        self.hierarchical = hierarchical
        self.trace: list[TraceEvent] = []
        self.transport = Transport(cluster.topology, cluster.memory)

        if hierarchical:
            by_key: dict[tuple[Hashable, Platform], list[int]] = {}
            for pos, ep in enumerate(self.ranks):
                by_key.setdefault((ep.node, ep.platform), []).append(pos)
            groups = list(by_key.values())
        else:
            groups = [[pos] for pos in range(len(self.ranks))]
        self.groups: list[list[int]] = sorted(groups, key=min)
        self.group_of = [0] * len(self.ranks)
        self.local = [0] * len(self.ranks)
        for gi, members in enumerate(self.groups):
            for li, pos in enumerate(members):
                self.group_of[pos] = gi
                self.local[pos] = li

    @property
    def world_size(self) -> int:
        return len(self.ranks)

    def group_platform(self, gi: int) -> Platform:
        return self.ranks[self.groups[gi][0]].platform

    def group_link(self, gi: int) -> LinkModel:
        return self.cluster.topology.node(self.ranks[self.groups[gi][0]].node).pcie

    def counts(self, kind: str) -> int:
        return sum(1 for e in self.trace if e.kind == kind)

    # convenience wrappers ------------------------------------------------

    def all_reduce(self, send, spec=None, **kw):
        return all_reduce(self, send, spec or CollectiveSpec.of("all_reduce", **kw))

    def all_gather(self, send, spec=None, **kw):
        return all_gather(self, send, spec or CollectiveSpec.of("all_gather", **kw))

    def reduce_scatter(self, send, spec=None, **kw):
        return reduce_scatter(self, send, spec or CollectiveSpec.of("reduce_scatter", **kw))

    def reduce(self, send, spec=None, **kw):
        return reduce(self, send, spec or CollectiveSpec.of("reduce", **kw))

    def broadcast(self, send, spec=None, **kw):
        return broadcast(self, send, spec or CollectiveSpec.of("broadcast", **kw))

    def all_to_all(self, send, spec=None, **kw):
        return all_to_all(self, send, spec or CollectiveSpec.of("all_to_all", **kw))


class _Run:
    """State of one collective invocation: buffers, clocks, trace, phases."""

    def __init__(self, comm: Communicator, op: str, itemsize: int, dtype=None, inputs=None,
                 work_elems: int = 1, scratch_elems: int = 1):
        self.comm = comm
        self.op = op
        self.isz = itemsize
        self.data = inputs is not None
        self.W = self.X = None
        if self.data:
            mem = comm.cluster.memory
            self.work, self.scratch = [], []
            for ep in comm.ranks:
                w = mem.alloc(ep.platform, ep.node, max(1, work_elems) * itemsize)
                x = mem.alloc(ep.platform, ep.node, max(1, scratch_elems) * itemsize)
                if comm.cluster.topology.node(ep.node).has_nic:
                    mem.register_region(w)
                    mem.register_region(x)
                self.work.append(w)
                self.scratch.append(x)
            self.W = [b.view(dtype) for b in self.work]
            self.X = [b.view(dtype) for b in self.scratch]
            for pos, arr in enumerate(inputs):
                self.W[pos][:len(arr)] = arr
        self.t0 = max(ep.clock for ep in comm.ranks)
        for ep in comm.ranks:
            ep.clock = self.t0
        self._mark = self.t0
        self.phases: list[tuple[str, float]] = []

    # -- helpers ---------------------------------------------------------

    def views(self, members, which="W"):
        if not self.data:
            return None
        src = self.W if which == "W" else self.X
        return [src[p] for p in members]

    def backend(self, gi: int) -> VendorBackend:
        comm = self.comm
        return VendorBackend(comm.cluster.runtime, comm.group_platform(gi), comm.group_link(gi), self.isz)

    def run_backend(self, gi: int, op: str, call) -> None:
        """Run ``call(backend, k)`` for group ``gi`` and advance its clocks."""
        members = self.comm.groups[gi]
        eps = [self.comm.ranks[p] for p in members]
        duration = call(self.backend(gi), len(members))
        end = max(ep.clock for ep in eps) + duration
        for ep in eps:
            ep.clock = end
        self.comm.trace.append(TraceEvent("backend", op, tuple(ep.rank for ep in eps), 0))

    def xfer(self, s: int, d: int, count: int, src_el: int, dst_el: int,
             src="W", dst="X") -> Transfer | None:
        if count <= 0:
            return None
        ranks = self.comm.ranks
        t = Transfer(ranks[s], ranks[d], count * self.isz, prefer_rdma=self.comm.prefer_rdma,
                     src_offset=src_el * self.isz, dst_offset=dst_el * self.isz)
        if self.data:
            t.src_buf = (self.work if src == "W" else self.scratch)[s]
            t.dst_buf = (self.work if dst == "W" else self.scratch)[d]
        return t

    def post(self, transfers) -> None:
        batch = [t for t in transfers if t is not None]
        if not batch:
            return
        self.comm.transport.post(batch)
        for t in batch:
            self.comm.trace.append(TraceEvent("p2p", self.op, (t.src.rank, t.dst.rank), t.size))

    def phase(self, name: str) -> None:
        now = max(ep.clock for ep in self.comm.ranks)
        self.phases.append((name, now - self._mark))
        self._mark = now

    def fold_at(self, pos: int, combiner: str, arrays):
        be = VendorBackend(self.comm.cluster.runtime, self.comm.ranks[pos].platform,
                           self.comm.group_link(self.comm.group_of[pos]), self.isz)
        return be.fold(combiner, arrays)

    def report(self, nbytes: int) -> CollectiveReport:
        end = max(ep.clock for ep in self.comm.ranks)
        return CollectiveReport(self.op, self.comm.world_size, nbytes, end - self.t0,
                                tuple(self.phases))


# ---------------------------------------------------------------------------
# Argument checking
# ---------------------------------------------------------------------------


def _inputs(comm: Communicator, send, spec: CollectiveSpec):
    if len(send) != comm.world_size:
        raise LengthMismatch(f"expected {comm.world_size} payloads, got {len(send)}")
    arrays = [np.asarray(x, dtype=spec.np_dtype).ravel() for x in send]
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1:
        raise LengthMismatch(f"ranks hold payloads of different lengths: {sorted(lengths)}")
    n = lengths.pop()
    if n < 1:
        raise LengthMismatch("payloads must hold at least one element")
    return arrays, n


def _check_root(comm, root):
    if not 0 <= root < comm.world_size:
        raise InvalidRoot(f"root {root} outside communicator of size {comm.world_size}")


def _divisible(n, w, what):
    if n % w:
        raise LengthMismatch(f"{n} elements do not split evenly into {w} {what}")
    return n // w


# ---------------------------------------------------------------------------
# Schedules.  Each takes ``arrays=None`` for timing-only execution.
# ---------------------------------------------------------------------------


def _all_reduce(comm, n, isz, combiner, arrays=None, dtype=None):
    G, g = comm.groups, len(comm.groups)
    r = _Run(comm, "all_reduce", isz, dtype, arrays, work_elems=n, scratch_elems=g * n)

    if g == 1:
        r.run_backend(0, "all_reduce", lambda be, k: be.all_reduce(k, r.views(G[0]), combiner, n))
        r.phase("backend")
        return r, [r.W[p][:n].copy() for p in range(comm.world_size)] if r.data else None

    bounds = [split_bounds(n, len(m)) for m in G]
    for gi, members in enumerate(G):
        if len(members) > 1:
            blocks = [[b] for b in bounds[gi]]
            r.run_backend(gi, "reduce_scatter",
                          lambda be, k, gi=gi, blocks=blocks:
                          be.reduce_scatter(k, r.views(G[gi]), combiner, blocks))
    r.phase("local_reduce_scatter")

    # Common refinement of the per-group shard boundaries; each segment has
    # exactly one owner per group.
    cuts = sorted({a for bs in bounds for a, _ in bs} | {n})
    segments = []
    for a, b in zip(cuts, cuts[1:]):
        owners = [G[gi][next(j for j, (x, y) in enumerate(bounds[gi]) if x <= a < y)]
                  for gi in range(g)]
        segments.append((owners, split_bounds(b - a, g, a)))

    for s in range(1, g):
        batch = []
        for owners, subs in segments:
            for i in range(g):
                j = (i + s) % g
                a, b = subs[j]
                batch.append(r.xfer(owners[i], owners[j], b - a, a, i * n + a))
        r.post(batch)
    if r.data:
        for owners, subs in segments:
            for j in range(g):
                a, b = subs[j]
                if b > a:
                    o = owners[j]
                    parts = [r.W[o][a:b] if i == j else r.X[o][i * n + a:i * n + b] for i in range(g)]
                    r.W[o][a:b] = r.fold_at(o, combiner, parts)
    for s in range(1, g):
        batch = []
        for owners, subs in segments:
            for i in range(g):
                a, b = subs[i]
                batch.append(r.xfer(owners[i], owners[(i + s) % g], b - a, a, a, dst="W"))
        r.post(batch)
    r.phase("cross_all_reduce")

    for gi, members in enumerate(G):
        if len(members) > 1:
            blocks = [[b] for b in bounds[gi]]
            r.run_backend(gi, "all_gather",
                          lambda be, k, gi=gi, blocks=blocks: be.all_gather(k, r.views(G[gi]), blocks))
    r.phase("local_all_gather")
    return r, [r.W[p][:n].copy() for p in range(comm.world_size)] if r.data else None


def _reduce_scatter(comm, n, isz, combiner, arrays=None, dtype=None):
    G, g, w = comm.groups, len(comm.groups), comm.world_size
    m = _divisible(n, w, "shards")
    r = _Run(comm, "reduce_scatter", isz, dtype, arrays, work_elems=n, scratch_elems=g * m)

    def shard(q):
        return (q * m, (q + 1) * m)

    if g == 1:
        blocks = [[shard(q)] for q in G[0]]
        r.run_backend(0, "reduce_scatter",
                      lambda be, k: be.reduce_scatter(k, r.views(G[0]), combiner, blocks))
        r.phase("backend")
        return r, [r.W[q][q * m:(q + 1) * m].copy() for q in range(w)] if r.data else None

    # member l of group i pre-reduces the shards of every rank q with local(q) % k_i == l
    for gi, members in enumerate(G):
        k = len(members)
        if k > 1:
            blocks = [[shard(q) for q in range(w) if comm.local[q] % k == l] for l in range(k)]
            r.run_backend(gi, "reduce_scatter",
                          lambda be, kk, gi=gi, blocks=blocks:
                          be.reduce_scatter(kk, r.views(G[gi]), combiner, blocks))
    r.phase("local_reduce_scatter")

    for s in range(1, g):
        batch = []
        for i in range(g):
            j = (i + s) % g
            for q in G[j]:
                src = G[i][comm.local[q] % len(G[i])]
                batch.append(r.xfer(src, q, m, q * m, i * m))
        r.post(batch)
    if r.data:
        for q in range(w):
            gq = comm.group_of[q]
            parts = [r.W[q][q * m:(q + 1) * m] if i == gq else r.X[q][i * m:(i + 1) * m]
                     for i in range(g)]
            r.W[q][q * m:(q + 1) * m] = r.fold_at(q, combiner, parts)
    r.phase("cross_exchange")
    return r, [r.W[q][q * m:(q + 1) * m].copy() for q in range(w)] if r.data else None


def _all_gather(comm, m, isz, arrays=None, dtype=None):
    G, g, w = comm.groups, len(comm.groups), comm.world_size
    n = w * m
    placed = None
    if arrays is not None:
        placed = []
        for q, a in enumerate(arrays):
            full = np.zeros(n, dtype)
            full[q * m:(q + 1) * m] = a
            placed.append(full)
    r = _Run(comm, "all_gather", isz, dtype, placed, work_elems=n)

    def shard(q):
        return (q * m, (q + 1) * m)

    if g == 1:
        blocks = [[shard(q)] for q in G[0]]
        r.run_backend(0, "all_gather", lambda be, k: be.all_gather(k, r.views(G[0]), blocks))
        r.phase("backend")
        return r, [r.W[q][:n].copy() for q in range(w)] if r.data else None

    held = {q: [q] for q in range(w)}
    for s in range(1, g):
        batch = []
        for i in range(g):
            j = (i + s) % g
            for q in G[i]:
                d = G[j][comm.local[q] % len(G[j])]
                held[d].append(q)
                batch.append(r.xfer(q, d, m, q * m, q * m, dst="W"))
        r.post(batch)
    r.phase("cross_all_gather")

    for gi, members in enumerate(G):
        if len(members) > 1:
            blocks = [[shard(q) for q in sorted(held[p])] for p in members]
            r.run_backend(gi, "all_gather",
                          lambda be, k, gi=gi, blocks=blocks: be.all_gather(k, r.views(G[gi]), blocks))
    r.phase("local_all_gather")
    return r, [r.W[q][:n].copy() for q in range(w)] if r.data else None


def _leaders(comm, root):
    return [root if comm.group_of[root] == gi else members[0]
            for gi, members in enumerate(comm.groups)]


def _reduce(comm, n, isz, combiner, root, arrays=None, dtype=None):
    G, g = comm.groups, len(comm.groups)
    r = _Run(comm, "reduce", isz, dtype, arrays, work_elems=n, scratch_elems=g * n)
    leaders = _leaders(comm, root)
    groot = comm.group_of[root]

    def out():
        return [r.W[p][:n].copy() if p == root else None for p in range(comm.world_size)]

    for gi, members in enumerate(G):
        if len(members) > 1 or g == 1:
            li = members.index(leaders[gi])
            r.run_backend(gi, "reduce",
                          lambda be, k, gi=gi, li=li: be.reduce(k, r.views(G[gi]), combiner, n, li))
    if g == 1:
        r.phase("backend")
        return r, out() if r.data else None
    r.phase("local_reduce")

    r.post([r.xfer(leaders[i], root, n, 0, i * n) for i in range(g) if i != groot])
    if r.data:
        parts = [r.W[root][:n] if i == groot else r.X[root][i * n:(i + 1) * n] for i in range(g)]
        r.W[root][:n] = r.fold_at(root, combiner, parts)
    r.phase("cross_gather")
    return r, out() if r.data else None


def _broadcast(comm, n, isz, root, arrays=None, dtype=None):
    G, g = comm.groups, len(comm.groups)
    r = _Run(comm, "broadcast", isz, dtype, arrays, work_elems=n)
    leaders = _leaders(comm, root)
    groot = comm.group_of[root]

    if g > 1:
        r.post([r.xfer(root, leaders[i], n, 0, 0, dst="W") for i in range(g) if i != groot])
        r.phase("cross_send")
    for gi, members in enumerate(G):
        if len(members) > 1 or g == 1:
            li = members.index(leaders[gi])
            r.run_backend(gi, "broadcast",
                          lambda be, k, gi=gi, li=li: be.broadcast(k, r.views(G[gi]), n, li))
    r.phase("backend" if g == 1 else "local_broadcast")
    return r, [r.W[p][:n].copy() for p in range(comm.world_size)] if r.data else None


def _all_to_all(comm, n, isz, arrays=None, dtype=None):
    G, g, w = comm.groups, len(comm.groups), comm.world_size
    m = _divisible(n, w, "blocks")
    r = _Run(comm, "all_to_all", isz, dtype, arrays, work_elems=n, scratch_elems=n)

    for gi, members in enumerate(G):
        r.run_backend(gi, "all_to_all",
                      lambda be, k, gi=gi, members=members:
                      be.all_to_all(k, r.views(members, "W"), r.views(members, "X"), members, m))
    r.phase("backend" if g == 1 else "local_all_to_all")
    if g > 1:
        for s in range(1, g):
            batch = []
            for i in range(g):
                for p in G[i]:
                    for q in G[(i + s) % g]:
                        batch.append(r.xfer(p, q, m, q * m, p * m))
            r.post(batch)
        r.phase("cross_all_to_all")
    return r, [r.X[q][:n].copy() for q in range(w)] if r.data else None


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def all_reduce(comm: Communicator, send, spec: CollectiveSpec):
    arrays, n = _inputs(comm, send, spec)
    r, out = _all_reduce(comm, n, spec.np_dtype.itemsize, spec.combiner, arrays, spec.np_dtype)
    return out, r.report(n * spec.np_dtype.itemsize)


def all_gather(comm: Communicator, send, spec: CollectiveSpec):
    arrays, m = _inputs(comm, send, spec)
    r, out = _all_gather(comm, m, spec.np_dtype.itemsize, arrays, spec.np_dtype)
    return out, r.report(comm.world_size * m * spec.np_dtype.itemsize)


def reduce_scatter(comm: Communicator, send, spec: CollectiveSpec):
    arrays, n = _inputs(comm, send, spec)
    r, out = _reduce_scatter(comm, n, spec.np_dtype.itemsize, spec.combiner, arrays, spec.np_dtype)
    return out, r.report(n * spec.np_dtype.itemsize)


def reduce(comm: Communicator, send, spec: CollectiveSpec):
    arrays, n = _inputs(comm, send, spec)
    _check_root(comm, spec.root)
    r, out = _reduce(comm, n, spec.np_dtype.itemsize, spec.combiner, spec.root, arrays, spec.np_dtype)
    return out, r.report(n * spec.np_dtype.itemsize)


def broadcast(comm: Communicator, send, spec: CollectiveSpec):
    """All ranks end with the root's vector.  Every rank passes a payload of
    the same length; only the root's contents matter."""
    arrays, n = _inputs(comm, send, spec)
    _check_root(comm, spec.root)
    r, out = _broadcast(comm, n, spec.np_dtype.itemsize, spec.root, arrays, spec.np_dtype)
    return out, r.report(n * spec.np_dtype.itemsize)


def all_to_all(comm: Communicator, send, spec: CollectiveSpec):
    arrays, n = _inputs(comm, send, spec)
    r, out = _all_to_all(comm, n, spec.np_dtype.itemsize, arrays, spec.np_dtype)
    return out, r.report(n * spec.np_dtype.itemsize)


COLLECTIVES = {
    "all_reduce": all_reduce,
    "all_gather": all_gather,
    "reduce_scatter": reduce_scatter,
    "reduce": reduce,
    "broadcast": broadcast,
    "all_to_all": all_to_all,
}


def run_collective(comm: Communicator, send, spec: CollectiveSpec):
    return COLLECTIVES[spec.op](comm, send, spec)


def time_collective(comm: Communicator, op: str, nbytes: int, itemsize: int = 4,
                    root: int = 0, combiner: str = "reduce_sum") -> CollectiveReport:
    """Timing-only run of ``op`` on ``nbytes`` (size convention as in ``BUS_FACTOR``).

    The byte count must be a whole number of elements and, for all_gather,
    reduce_scatter and all_to_all, split evenly over the ranks.
    """
    if op not in OPS:
        raise ValueError(f"unknown collective {op!r}")
    if nbytes < itemsize or nbytes % itemsize:
        raise LengthMismatch(f"{nbytes} bytes is not a positive whole number of {itemsize}-byte elements")
    n = nbytes // itemsize
    if op == "all_reduce":
        r, _ = _all_reduce(comm, n, itemsize, combiner)
    elif op == "reduce_scatter":
        r, _ = _reduce_scatter(comm, n, itemsize, combiner)
    elif op == "all_gather":
        r, _ = _all_gather(comm, _divisible(n, comm.world_size, "shards"), itemsize)
    elif op == "reduce":
        _check_root(comm, root)
        r, _ = _reduce(comm, n, itemsize, combiner, root)
    elif op == "broadcast":
        _check_root(comm, root)
        r, _ = _broadcast(comm, n, itemsize, root)
    else:
        r, _ = _all_to_all(comm, n, itemsize)
    return r.report(nbytes)
