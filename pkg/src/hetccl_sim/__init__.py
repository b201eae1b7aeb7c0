"""Simulated mixed-vendor collective communication."""

from .balancer import (MODEL_PRESETS, Assignment, ModelDesc, SpeedProfile, StepReport,
                       ZeroSchedule, assign_microbatches, efficiency, simulate_profiling,
                       simulate_step)
from .cluster import Cluster
from .collectives import (OPS, CollectiveReport, CollectiveSpec, Communicator,
                          backend_collective, ring_time, run_collective, time_collective)
from .device_memory import DeviceBuffer, HostBuffer, MemoryManager, RegionKey
from .platform_registry import API_SURFACE, BackendTable, Platform, Runtime
from .topology import ClusterTopology, LinkModel, NodeSpec, load_topology, reference_cluster, path_model
from .transport import Endpoint, Transfer, TransferReport, Transport, measured_bandwidth

__all__ = [
    "API_SURFACE", "Assignment", "BackendTable", "Cluster", "ClusterTopology",
    "CollectiveReport", "CollectiveSpec", "Communicator", "DeviceBuffer", "Endpoint",
    "HostBuffer", "LinkModel", "MODEL_PRESETS", "MemoryManager", "ModelDesc", "NodeSpec",
    "OPS", "Platform", "RegionKey", "Runtime", "SpeedProfile", "StepReport", "Transfer",
    "TransferReport", "Transport", "ZeroSchedule", "assign_microbatches",
    "backend_collective", "efficiency", "load_topology", "measured_bandwidth",
    "reference_cluster", "path_model", "ring_time", "run_collective", "simulate_profiling",
    "simulate_step", "time_collective",
]
