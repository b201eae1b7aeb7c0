"""Vendor-neutral runtime layer.

Abstract runtime calls (``alloc``, ``copy_h2d``, ``launch_kernel`` ...) are
routed through a per-platform function table.  Each platform registers its
table once during setup; afterwards the tables are read-only and every call
goes through :meth:`Runtime.dispatch`.

Reduction kernels live in a separate :class:`KernelLibrary` per platform,
mirroring device code that is compiled per vendor and loaded at run time.
"""

from __future__ import annotations

import enum
import itertools
import threading
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Hashable, Iterable, Mapping, NamedTuple

import numpy as np

from .errors import (
    AmbiguousPlatform,
    DuplicatePlatform,
    IncompleteTable,
    NoPlatform,
    UnknownCall,
    UnregisteredPlatform,
)


class Platform(enum.Enum):
    CUDA = "cuda"
    HIP = "hip"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, name: str) -> "Platform":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown platform {name!r}") from None


# Calls that carry behaviour in the simulator.
API_SURFACE = (
    "alloc",
    "free",
    "copy_h2d",
    "copy_d2h",
    "copy_d2d",
    "memset",
    "stream_create",
    "stream_sync",
    "event_record",
    "event_query",
    "launch_kernel",
    "device_count",
)

# The full vendor runtime surface the abstraction layer would need to cover
# for NCCL/RCCL.  Kept for documentation; the table mechanism is keyed by
# name, so modelling more of these is a matter of adding entries.
RUNTIME_FUNCTIONS = (
    "GetAvailablePlatforms", "SetPlatform", "SetPlatformAuto", "GetPlatform",
    "ThreadExchangeStreamCaptureMode", "Malloc", "MallocHost", "MallocManaged",
    "HostAlloc", "GetDevice", "SetDevice", "GetErrorString", "GetLastError",
    "ExtMallocWithFlags", "DeviceCanAccessPeer", "FreeHost", "DeviceGetAttribute",
    "StreamCreateWithFlags", "Memcpy", "MemcpyAsync", "Free", "Memset",
    "MemsetAsync", "StreamQuery", "StreamSynchronize", "StreamDestroy",
    "EventCreate", "EventCreateWithFlags", "EventQuery", "EventRecord",
    "StreamWaitEvent", "EventDestroy", "LaunchHostFunc", "IpcOpenMemHandle",
    "IpcCloseMemHandle", "IpcGetMemHandle", "HostRegister", "HostUnregister",
    "HostGetDevicePointer", "DeviceGetPCIBusId", "GetDeviceProperties",
    "DeviceGetByPCIBusId", "DeviceEnablePeerAccess", "GetDeviceCount",
    "FuncSetAttribute", "FuncGetAttributes", "ExtLaunchKernel", "LaunchKernel",
    "DeviceSetLimit", "StreamGetCaptureInfo_v2", "GraphAddHostNode",
    "GraphInstantiate", "GraphLaunch", "GraphExecDestroy", "GraphDestroy",
    "DeviceSynchronize", "StreamBeginCapture", "StreamEndCapture", "DeviceReset",
    "PointerGetAttributes", "ExtStreamCreateWithCUMask", "StreamCreate",
    "ExtGetLinkTypeAndHopCount", "HostFree", "EventElapsedTime",
)

KERNEL_NAMES = ("reduce_sum", "reduce_min", "reduce_max")


@dataclass(frozen=True)
class BackendTable:
    platform: Platform
    entries: Mapping[str, Callable[..., Any]]

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    def missing(self) -> set[str]:
        return set(API_SURFACE) - set(self.entries)


@dataclass(frozen=True)
class KernelLibrary:
    platform: Platform
    kernels: Mapping[str, Callable[[np.ndarray, np.ndarray], np.ndarray]]

    def __post_init__(self):
        object.__setattr__(self, "kernels", MappingProxyType(dict(self.kernels)))


class DispatchRecord(NamedTuple):
    call: str
    platform: Platform
    handle: Callable[..., Any]


@dataclass
class Runtime:
    """Registry of backends plus the dispatcher.

    ``trace`` is an append-only log of :class:`DispatchRecord` filled while
    ``tracing`` is true.
    """

    tracing: bool = False
    trace: list = field(default_factory=list)

    def __post_init__(self):
        self._tables: dict[Platform, BackendTable] = {}
        self._ids: dict[Platform, int] = {}
        self._kernels: dict[Platform, KernelLibrary] = {}
        self._active: dict[Hashable, Platform] = {}
        self._lock = threading.Lock()

    # -- setup -----------------------------------------------------------

    def register_backend(self, table: BackendTable) -> int:
        if table.platform in self._tables:
            raise DuplicatePlatform(f"platform {table.platform} is already registered")
        missing = table.missing()
        if missing:
            raise IncompleteTable(missing)
        backend_id = len(self._tables)
        self._tables[table.platform] = table
        self._ids[table.platform] = backend_id
        return backend_id

    def register_kernels(self, library: KernelLibrary) -> None:
        if library.platform not in self._tables:
            raise UnregisteredPlatform(
                f"kernel library for {library.platform} loaded before its backend table"
            )
        self._kernels[library.platform] = library

    @property
    def platforms(self) -> tuple[Platform, ...]:
        return tuple(self._tables)

    def backend_id(self, platform: Platform) -> int:
        self._require(platform)
        return self._ids[platform]

    def table(self, platform: Platform) -> BackendTable:
        self._require(platform)
        return self._tables[platform]

    # -- platform selection ---------------------------------------------

    def set_platform(self, platform: Platform, context: Hashable = None) -> Platform:
        self._require(platform)
        self._active[context] = platform
        return platform

    def set_platform_auto(self, available: Iterable[Platform], context: Hashable = None) -> Platform:
        """Activate the single registered platform visible in ``context``.

        A context that sees more than one vendor is rejected: nodes are
        assumed to hold devices from one vendor only.
        """
        seen = list(dict.fromkeys(available))
        if not seen:
            raise NoPlatform("no platform available")
        if len(seen) > 1:
            raise AmbiguousPlatform(
                "more than one vendor visible: " + ", ".join(str(p) for p in seen)
            )
        if seen[0] not in self._tables:
            raise NoPlatform(f"platform {seen[0]} is available but not registered")
        self._active[context] = seen[0]
        return seen[0]

    def get_platform(self, context: Hashable = None) -> Platform:
        try:
            return self._active[context]
        except KeyError:
            raise NoPlatform(f"no active platform for context {context!r}") from None

    # -- dispatch --------------------------------------------------------

    def dispatch(self, call: str, platform: Platform, *args, **kwargs):
        if call not in API_SURFACE:
            raise UnknownCall(call)
        handle = self.table(platform).entries[call]
        if self.tracing:
            with self._lock:
                self.trace.append(DispatchRecord(call, platform, handle))
        return handle(*args, **kwargs)

    def kernel(self, platform: Platform, name: str):
        self._require(platform)
        try:
            return self._kernels[platform].kernels[name]
        except KeyError:
            raise UnknownCall(f"kernel {name!r} not loaded for {platform}") from None

    def launch(self, platform: Platform, name: str, *args):
        """Run kernel ``name`` through the platform's ``launch_kernel`` entry."""
        return self.dispatch("launch_kernel", platform, self.kernel(platform, name), *args)

    def _require(self, platform):
        if platform not in self._tables:
            raise UnregisteredPlatform(f"platform {platform} is not registered")


# ---------------------------------------------------------------------------
# Simulated vendor backends
# ---------------------------------------------------------------------------

_stream_ids = itertools.count()


class Stream(NamedTuple):
    platform: Platform
    id: int


class Event(NamedTuple):
    platform: Platform
    stream: Stream | None


def simulated_backend(platform: Platform, devices: int = 4) -> BackendTable:
    """Build a complete table whose handles are fresh closures for ``platform``.

    Each call produces new function objects, so two platforms never share a
    handle even though the behaviour is identical.
    """

    def alloc(size):
        return bytearray(size)

    def free(mem):
        return None

    def _copy(dst, src, size, dst_offset=0, src_offset=0):
        memoryview(dst)[dst_offset:dst_offset + size] = memoryview(src)[src_offset:src_offset + size]

    def copy_h2d(dst, src, size, dst_offset=0, src_offset=0):
        _copy(dst, src, size, dst_offset, src_offset)

    def copy_d2h(dst, src, size, dst_offset=0, src_offset=0):
        _copy(dst, src, size, dst_offset, src_offset)

    def copy_d2d(dst, src, size, dst_offset=0, src_offset=0):
        _copy(dst, src, size, dst_offset, src_offset)

    def memset(mem, value, size):
        memoryview(mem)[:size] = bytes([value & 0xFF]) * size

    def stream_create():
        return Stream(platform, next(_stream_ids))

    def stream_sync(stream):
        return None

    def event_record(stream=None):
        return Event(platform, stream)

    def event_query(event):
        # work completes synchronously in the simulator
        return True

    def launch_kernel(kernel, *args):
        return kernel(*args)

    def device_count():
        return devices

    return BackendTable(platform, {
        "alloc": alloc,
        "free": free,
        "copy_h2d": copy_h2d,
        "copy_d2h": copy_d2h,
        "copy_d2d": copy_d2d,
        "memset": memset,
        "stream_create": stream_create,
        "stream_sync": stream_sync,
        "event_record": event_record,
        "event_query": event_query,
        "launch_kernel": launch_kernel,
        "device_count": device_count,
    })


def simulated_kernels(platform: Platform) -> KernelLibrary:
    """Element-wise combiners ``(acc, x) -> acc op x``.

    Both vendors get separate function objects computing the same thing, so
    cross-platform results are bit-identical for the same inputs.
    """

    def reduce_sum(acc, x):
        return np.add(acc, x)

    def reduce_min(acc, x):
        return np.minimum(acc, x)

    def reduce_max(acc, x):
        return np.maximum(acc, x)

    return KernelLibrary(platform, {
        "reduce_sum": reduce_sum,
        "reduce_min": reduce_min,
        "reduce_max": reduce_max,
    })


def default_runtime(platforms: Iterable[Platform] = tuple(Platform), tracing: bool = False) -> Runtime:
    rt = Runtime(tracing=tracing)
    for p in platforms:
        rt.register_backend(simulated_backend(p))
        rt.register_kernels(simulated_kernels(p))
    return rt
