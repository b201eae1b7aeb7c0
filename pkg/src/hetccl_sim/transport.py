"""Point-to-point transfers over the virtual clock.

A transfer moves real payload bytes between two device buffers and advances
both endpoints' clocks by the path cost.  Path selection:

* same node                                   -> ``intranode`` (PCIe P2P)
* both buffers registered, both nodes have NICs -> ``rdma``
* anything else between nodes                 -> ``staged`` through host memory

Each NIC carries one flow per direction at a time; concurrent flows through
the same NIC are serialized in posting order.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Hashable, Sequence

from .device_memory import DeviceBuffer, MemoryManager
from .errors import EndpointMismatch, InvalidRegion, SizeMismatch
from .platform_registry import Platform
from .topology import ClusterTopology, PathModel, path_model


@dataclass
class Endpoint:
    rank: int
    node: Hashable
    device: int
    platform: Platform
    clock: float = 0.0

    def advance(self, t: float) -> None:
        if t > self.clock:
            self.clock = t

    @property
    def location(self):
        return (self.node, self.device)


@dataclass
class Transfer:
    """One posted send/recv pair.  Buffers are optional for timing-only runs."""

    src: Endpoint
    dst: Endpoint
    size: int
    src_buf: DeviceBuffer | None = None
    dst_buf: DeviceBuffer | None = None
    src_offset: int = 0
    dst_offset: int = 0
    prefer_rdma: bool = True


@dataclass(frozen=True)
class TransferReport:
    bytes: int
    path_used: str
    duration: float
    src_rank: int
    dst_rank: int
    src_ready: float
    dst_ready: float
    src_clock_after: float
    dst_clock_after: float

    @property
    def start(self) -> float:
        return max(self.src_ready, self.dst_ready)


def measured_bandwidth(report: TransferReport) -> float:
    if not report.duration > 0:
        raise ValueError("bandwidth undefined for a zero-duration transfer")
    return report.bytes / report.duration


class Transport:
    def __init__(self, topology: ClusterTopology, memory: MemoryManager | None = None):
        self.topology = topology
        self.memory = memory
        self.log: list[TransferReport] = []
        self._tx_free: dict[Hashable, float] = {}
        self._rx_free: dict[Hashable, float] = {}
        self._paths: dict[tuple, PathModel] = {}
        self._lock = threading.Lock()

    # -- path selection --------------------------------------------------

    def select_path(self, t: Transfer) -> str:
        if t.src.node == t.dst.node:
            return "intranode"
        if not t.prefer_rdma:
            return "staged"
        a, b = self.topology.node(t.src.node), self.topology.node(t.dst.node)
        if not (a.has_nic and b.has_nic):
            return "staged"
        if t.src_buf is None:
            # timing-only: buffers would be registered wherever a NIC exists
            return "rdma"
        if t.src_buf.rdma_eligible and t.dst_buf.rdma_eligible:
            return "rdma"
        return "staged"

    def path(self, src: Endpoint, dst: Endpoint, kind: str) -> PathModel:
        key = (src.location, dst.location, kind)
        model = self._paths.get(key)
        if model is None:
            model = self._paths[key] = path_model(self.topology, src.location, dst.location, kind)
        return model

    # -- transfers -------------------------------------------------------

    def send_recv(self, src: Endpoint, src_buf: DeviceBuffer, dst: Endpoint, dst_buf: DeviceBuffer,
                  size: int, prefer_rdma: bool = True, src_offset: int = 0,
                  dst_offset: int = 0) -> TransferReport:
        if src_buf is None or dst_buf is None:
            raise TypeError("send_recv needs both buffers")
        return self.post([Transfer(src, dst, size, src_buf, dst_buf, src_offset, dst_offset,
                                   prefer_rdma)])[0]

    def post(self, transfers: Sequence[Transfer]) -> list[TransferReport]:
        """Run a batch of transfers posted at the same moment.

        Every endpoint posts at its current clock; transfers then start at the
        later of both endpoints' post time and NIC availability.  Clocks are
        advanced after the whole batch, so one rank may send and receive
        concurrently within a batch.
        """
        posted = {}
        for t in transfers:
            self._validate(t)
            posted.setdefault(id(t.src), t.src.clock)
            posted.setdefault(id(t.dst), t.dst.clock)

        reports = []
        with self._lock:
            for t in transfers:
                kind = self.select_path(t)
                duration = self.path(t.src, t.dst, kind)(t.size)
                src_ready, dst_ready = posted[id(t.src)], posted[id(t.dst)]
                if kind != "intranode":
                    src_ready = max(src_ready, self._tx_free.get(t.src.node, 0.0))
                    dst_ready = max(dst_ready, self._rx_free.get(t.dst.node, 0.0))
                end = max(src_ready, dst_ready) + duration
                if kind != "intranode":
                    self._tx_free[t.src.node] = end
                    self._rx_free[t.dst.node] = end
                if t.src_buf is not None:
                    self._move(t, kind)
                report = TransferReport(t.size, kind, duration, t.src.rank, t.dst.rank,
                                        src_ready, dst_ready, end, end)
                reports.append(report)
                self.log.append(report)

        for t, r in zip(transfers, reports):
            t.src.advance(r.src_clock_after)
            t.dst.advance(r.dst_clock_after)
        return reports

    def reset(self) -> None:
        """Forget NIC occupancy and the transfer log."""
        self._tx_free.clear()
        self._rx_free.clear()
        self.log.clear()

    def _validate(self, t: Transfer) -> None:
        if t.src is t.dst or t.src.rank == t.dst.rank:
            raise EndpointMismatch("source and destination endpoints must differ")
        if t.size < 1:
            raise SizeMismatch(f"transfer size must be >= 1, got {t.size}")
        if (t.src_buf is None) != (t.dst_buf is None):
            raise TypeError("give both buffers or neither")
        if t.src_buf is None:
            return
        for ep, buf, off in ((t.src, t.src_buf, t.src_offset), (t.dst, t.dst_buf, t.dst_offset)):
            if off < 0 or off + t.size > buf.size:
                raise SizeMismatch(
                    f"{t.size} bytes at offset {off} exceed {buf.size}-byte buffer {buf.id}")
            key = buf.registered
            if key is not None and key.nic != ep.node:
                raise InvalidRegion(
                    f"buffer {buf.id} is registered with the NIC of {key.nic!r}, "
                    f"not that of {ep.node!r}")
            if buf.node != ep.node or buf.platform is not ep.platform:
                raise EndpointMismatch(f"buffer {buf.id} does not live on rank {ep.rank}'s device")

    def _move(self, t: Transfer, kind: str) -> None:
        n = t.size
        if kind == "rdma":
            # NIC DMA straight between device memories, no runtime involvement
            memoryview(t.dst_buf.payload)[t.dst_offset:t.dst_offset + n] = \
                memoryview(t.src_buf.payload)[t.src_offset:t.src_offset + n]
        elif kind == "intranode":
            self.memory.copy("d2d", t.src_buf, t.dst_buf, n, t.src_offset, t.dst_offset)
        else:
            src_host = self.memory.alloc_host(t.src.node, n)
            dst_host = self.memory.alloc_host(t.dst.node, n)
            self.memory.copy("d2h", t.src_buf, src_host, n, t.src_offset, 0)
            dst_host.payload[:] = src_host.payload
            self.memory.copy("h2d", dst_host, t.dst_buf, n, 0, t.dst_offset)
