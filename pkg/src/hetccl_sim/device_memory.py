"""Device and host buffers, NIC memory registration, and PCIe copies."""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from typing import Hashable

import numpy as np

from .errors import CrossPlatformCopy, EndpointMismatch, NoNic, SizeMismatch, ZeroSize
from .platform_registry import Platform, Runtime
from .topology import ClusterTopology


@dataclass(frozen=True)
class RegionKey:
    key: int
    nic: Hashable  # id of the node whose NIC the region is registered with


class _Buffer:
    __slots__ = ("_id", "_node", "_payload")

    def __init__(self, id_, node, payload: bytearray):
        self._id = id_
        self._node = node
        self._payload = payload

    @property
    def id(self):
        return self._id

    @property
    def node(self):
        return self._node

    @property
    def size(self) -> int:
        return len(self._payload)

    @property
    def payload(self) -> bytearray:
        return self._payload

    def view(self, dtype) -> np.ndarray:
        """Writable typed view over the payload (little-endian dtypes expected)."""
        return np.frombuffer(self._payload, dtype=dtype)


class HostBuffer(_Buffer):
    __slots__ = ()

    def __repr__(self):
        return f"HostBuffer(id={self.id}, node={self.node!r}, size={self.size})"


class DeviceBuffer(_Buffer):
    """Device allocation tagged with its platform and node.

    Platform and node are fixed at allocation.  ``registered`` is set once by
    :meth:`MemoryManager.register_region` and stays set.
    """

    __slots__ = ("_platform", "_registered")

    def __init__(self, id_, platform: Platform, node, payload: bytearray):
        super().__init__(id_, node, payload)
        self._platform = platform
        self._registered: RegionKey | None = None

    @property
    def platform(self) -> Platform:
        return self._platform

    @property
    def registered(self) -> RegionKey | None:
        return self._registered

    @property
    def rdma_eligible(self) -> bool:
        return self._registered is not None

    def __repr__(self):
        return (f"DeviceBuffer(id={self.id}, platform={self.platform}, node={self.node!r}, "
                f"size={self.size}, registered={self.registered is not None})")


COPY_DIRECTIONS = ("h2d", "d2h", "d2d")


class MemoryManager:
    def __init__(self, runtime: Runtime, topology: ClusterTopology):
        self.runtime = runtime
        self.topology = topology
        self._ids = itertools.count()
        self._keys = itertools.count(1)
        self._lock = threading.Lock()

    def _next_id(self):
        with self._lock:
            return next(self._ids)

    def alloc(self, platform: Platform, node, size: int) -> DeviceBuffer:
        if size <= 0:
            raise ZeroSize(f"allocation size must be positive, got {size}")
        self.topology.node(node)
        payload = self.runtime.dispatch("alloc", platform, size)
        return DeviceBuffer(self._next_id(), platform, node, payload)

    def alloc_host(self, node, size: int) -> HostBuffer:
        if size <= 0:
            raise ZeroSize(f"allocation size must be positive, got {size}")
        self.topology.node(node)
        return HostBuffer(self._next_id(), node, bytearray(size))

    def free(self, buf: DeviceBuffer) -> None:
        self.runtime.dispatch("free", buf.platform, buf.payload)

    def register_region(self, buf: DeviceBuffer) -> RegionKey:
        if buf.registered is not None:
            return buf.registered
        if not self.topology.node(buf.node).has_nic:
            raise NoNic(f"node {buf.node!r} has no NIC to register buffer {buf.id} with")
        with self._lock:
            key = RegionKey(next(self._keys), buf.node)
        buf._registered = key
        return key

    def copy(self, direction: str, src, dst, size: int, src_offset: int = 0, dst_offset: int = 0) -> float:
        """Copy ``size`` bytes over the node's PCIe link; returns the virtual duration."""
        if direction not in COPY_DIRECTIONS:
            raise ValueError(f"unknown copy direction {direction!r}")
        if size < 1 or src_offset + size > src.size or dst_offset + size > dst.size:
            raise SizeMismatch(
                f"cannot copy {size} bytes from {src.size}-byte source at {src_offset} "
                f"to {dst.size}-byte destination at {dst_offset}")

        if direction == "h2d":
            _expect(src, HostBuffer, dst, DeviceBuffer, direction)
            platform = dst.platform
        elif direction == "d2h":
            _expect(src, DeviceBuffer, dst, HostBuffer, direction)
            platform = src.platform
        else:
            _expect(src, DeviceBuffer, dst, DeviceBuffer, direction)
            if src.platform is not dst.platform:
                raise CrossPlatformCopy(
                    f"d2d copy from {src.platform} to {dst.platform}; use the transport layer")
            platform = src.platform
        if src.node != dst.node:
            raise EndpointMismatch(f"{direction} copy must stay on one node")

        self.runtime.dispatch(f"copy_{direction}", platform, dst.payload, src.payload, size,
                              dst_offset, src_offset)
        return self.topology.node(src.node).pcie.time(size)


def _expect(src, src_type, dst, dst_type, direction):
    if not isinstance(src, src_type) or not isinstance(dst, dst_type):
        raise TypeError(f"{direction} copy expects {src_type.__name__} -> {dst_type.__name__}")
