"""Wiring: one runtime, memory manager and transport over a topology."""

from __future__ import annotations

from typing import Iterable

from .collectives import Communicator
from .device_memory import MemoryManager
from .platform_registry import Platform, default_runtime
from .topology import ClusterTopology, reference_cluster
from .transport import Endpoint, Transport

SCENARIOS = ("homoA", "homoB", "het")
SCENARIO_PLATFORM = {"homoA": Platform.CUDA, "homoB": Platform.HIP}


class Cluster:
    def __init__(self, topology: ClusterTopology | None = None, *, tracing: bool = False):
        self.topology = topology if topology is not None else reference_cluster()
        platforms = {n.platform for n in self.topology.nodes}
        self.runtime = default_runtime(sorted(platforms, key=lambda p: p.value), tracing=tracing)
        for node in self.topology.nodes:
            self.runtime.set_platform_auto([node.platform], context=node.id)
        self.memory = MemoryManager(self.runtime, self.topology)
        self.transport = Transport(self.topology, self.memory)

    def endpoint(self, node, device: int, rank: int) -> Endpoint:
        spec = self.topology.node(node)
        if not 0 <= device < spec.device_count:
            raise ValueError(f"node {node!r} has no device {device}")
        return Endpoint(rank, node, device, self.runtime.get_platform(node))

    def endpoints(self, locations: Iterable[tuple] | None = None) -> list[Endpoint]:
        """One endpoint per ``(node, device)``; ranks follow list order."""
        locs = self.topology.devices() if locations is None else list(locations)
        return [self.endpoint(n, d, r) for r, (n, d) in enumerate(locs)]

    def communicator(self, locations=None, **kw) -> Communicator:
        return Communicator(self, self.endpoints(locations), **kw)

    def scenario(self, name: str, world: int) -> list[tuple]:
        return scenario_devices(self.topology, name, world)


def _devices_of(topology: ClusterTopology, platform: Platform) -> list[tuple]:
    return [(n.id, d) for n in topology.nodes_of(platform) for d in range(n.device_count)]


def het_split(topology: ClusterTopology, world: int) -> tuple[int, int]:
    """Split ``world`` into (cuda, hip) device counts.

    The CUDA share is half the world rounded down to whole CUDA nodes (at
    least one node), so 8 -> 4+4, 12 -> 4+8 and 16 -> 8+8 on 4-GPU nodes.
    """
    nodes = topology.nodes_of(Platform.CUDA)
    if not nodes or not topology.nodes_of(Platform.HIP):
        raise ValueError("heterogeneous scenario needs both CUDA and HIP nodes")
    per_node = nodes[0].device_count
    a = max(per_node, (world // 2) // per_node * per_node)
    return a, world - a


def scenario_devices(topology: ClusterTopology, name: str, world: int) -> list[tuple]:
    """Device list for ``homoA`` (CUDA only), ``homoB`` (HIP only) or ``het``."""
    if world < 1:
        raise ValueError("world size must be >= 1")
    if name in SCENARIO_PLATFORM:
        devs = _devices_of(topology, SCENARIO_PLATFORM[name])
        if world > len(devs):
            raise ValueError(f"{name} has only {len(devs)} devices, asked for {world}")
        return devs[:world]
    if name != "het":
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    a, b = het_split(topology, world)
    cuda, hip = _devices_of(topology, Platform.CUDA), _devices_of(topology, Platform.HIP)
    if a > len(cuda) or b < 1 or b > len(hip):
        raise ValueError(f"het world {world} needs {a} CUDA + {b} HIP devices; "
                         f"cluster has {len(cuda)} + {len(hip)}")
    return cuda[:a] + hip[:b]


def p2p_pair(topology: ClusterTopology, name: str) -> tuple[tuple, tuple]:
    """First device of two different nodes for a point-to-point scenario."""
    cuda = topology.nodes_of(Platform.CUDA)
    hip = topology.nodes_of(Platform.HIP)
    if name == "homoA":
        pair = cuda[:2]
    elif name == "homoB":
        pair = hip[:2]
    elif name == "het":
        pair = cuda[:1] + hip[:1]
    else:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    if len(pair) < 2:
        raise ValueError(f"scenario {name} needs two suitable nodes")
    return (pair[0].id, 0), (pair[1].id, 0)

