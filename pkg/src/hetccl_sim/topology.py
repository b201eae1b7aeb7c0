"""Cluster description: nodes, devices, and alpha-beta link parameters.

The config is a JSON document::

    {
      "nodes": [
        {"id": "nv0", "platform": "cuda", "devices": 4,
         "speed_tokens_per_s": 3000, "pcie": "gen3", "nic": "hdr"},
        ...
      ],
      "defaults": {"pcie": "gen4", "nic": "hdr", "host_link": "eth",
                   "speed_tokens_per_s": 1000, "tiers": {...}},
      "links": [{"a": "nv0", "b": "amd0", "alpha_s": 2e-6, "beta_Bps": 2e10}]
    }

``pcie``, ``nic`` and ``host_link`` accept either a tier name or an
``{"alpha_s", "beta_Bps"}`` object.  ``nic: null`` means the node has no
RDMA-capable NIC.  ``links`` is optional and overrides the derived wire
model for a node pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from types import MappingProxyType
from typing import Any, Hashable, Mapping

from .errors import (
    EndpointMismatch,
    MissingField,
    MixedVendorNode,
    NoRdmaPath,
    ParseError,
)
from .platform_registry import Platform


@dataclass(frozen=True)
class LinkModel:
    """t(size) = alpha + size / beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")

    def time(self, size: float) -> float:
        return self.alpha + size / self.beta


# Calibrated presets.  Only the ordering gen3 < gen4 < hdr is meaningful;
# the absolute numbers are ballpark figures for x16 links and HDR InfiniBand.
# Both PCIe generations share one latency so that a mixed pair's RDMA path
# costs exactly what the slower homogeneous pair's does.
TIERS: Mapping[str, LinkModel] = MappingProxyType({
    "gen3": LinkModel(alpha=1.5e-6, beta=11.0e9),
    "gen4": LinkModel(alpha=1.5e-6, beta=22.0e9),
    "hdr": LinkModel(alpha=1.0e-6, beta=24.0e9),
    "eth": LinkModel(alpha=25.0e-6, beta=1.25e9),
})

BUILTIN_DEFAULTS = {
    "pcie": "gen4",
    "nic": "hdr",
    "host_link": "eth",
    "speed_tokens_per_s": 1000.0,
}


@dataclass(frozen=True)
class NodeSpec:
    id: Hashable
    platform: Platform
    device_count: int
    device_speed: float
    pcie: LinkModel
    nic: LinkModel | None = None

    def __post_init__(self):
        if self.device_count < 1:
            raise ValueError(f"node {self.id}: device_count must be >= 1")
        if not self.device_speed > 0:
            raise ValueError(f"node {self.id}: device_speed must be > 0")

    @property
    def has_nic(self) -> bool:
        return self.nic is not None


@dataclass(frozen=True)
class ClusterTopology:
    nodes: tuple[NodeSpec, ...]
    inter_node_links: Mapping[tuple[Hashable, Hashable], LinkModel] = field(default_factory=dict)
    host_link: LinkModel = TIERS["eth"]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        links = dict(self.inter_node_links)
        for a, b in combinations(ids, 2):
            if (a, b) not in links and (b, a) not in links:
                links[(a, b)] = derive_wire(self.node_map[a], self.node_map[b], self.host_link)
            model = links.get((a, b), links.get((b, a)))
            links[(a, b)] = links[(b, a)] = model
        object.__setattr__(self, "inter_node_links", MappingProxyType(links))

    @property
    def node_map(self) -> dict[Hashable, NodeSpec]:
        return {n.id: n for n in self.nodes}

    def node(self, node_id) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(f"unknown node {node_id!r}")

    def link(self, a, b) -> LinkModel:
        return self.inter_node_links[(a, b)]

    def devices(self):
        """All (node_id, device_index) pairs in node order."""
        return [(n.id, d) for n in self.nodes for d in range(n.device_count)]

    def nodes_of(self, platform: Platform) -> list[NodeSpec]:
        return [n for n in self.nodes if n.platform is platform]


def derive_wire(a: NodeSpec, b: NodeSpec, host_link: LinkModel) -> LinkModel:
    """Wire model between two nodes: the slower NIC, or the host network."""
    if a.nic is None or b.nic is None:
        return host_link
    return LinkModel(max(a.nic.alpha, b.nic.alpha), min(a.nic.beta, b.nic.beta))


# ---------------------------------------------------------------------------
# Path cost models
# ---------------------------------------------------------------------------

PATHS = ("rdma", "staged", "intranode")


@dataclass(frozen=True)
class PathModel:
    """Composed cost of one transfer path.

    ``segments`` lists ``(name, LinkModel)`` in traversal order.  RDMA
    segments are cut-through (latencies add, the narrowest beta limits);
    staged segments are store-and-forward (segment times add).
    """

    kind: str
    segments: tuple[tuple[str, LinkModel], ...]

    def __call__(self, size: float) -> float:
        if self.kind == "rdma":
            alpha = sum(link.alpha for _, link in self.segments)
            return alpha + size / self.bottleneck
        return sum(link.time(size) for _, link in self.segments)

    @property
    def bottleneck(self) -> float:
        return min(link.beta for _, link in self.segments)

    @property
    def asymptotic_bandwidth(self) -> float:
        if self.kind == "rdma" or len(self.segments) == 1:
            return self.bottleneck
        return 1.0 / sum(1.0 / link.beta for _, link in self.segments)

    def as_link(self) -> LinkModel:
        """Single alpha-beta model equivalent to this path."""
        alpha = sum(link.alpha for _, link in self.segments)
        return LinkModel(alpha, self.asymptotic_bandwidth)


def path_model(topology: ClusterTopology, src, dst, path: str) -> PathModel:
    """Cost function ``size -> seconds`` for moving bytes from ``src`` to ``dst``.

    ``src`` and ``dst`` are ``(node_id, device_index)`` pairs.
    """
    if path not in PATHS:
        raise ValueError(f"unknown path {path!r}; expected one of {PATHS}")
    (sn, sd), (dn, dd) = src, dst
    a, b = topology.node(sn), topology.node(dn)
    for node, dev in ((a, sd), (b, dd)):
        if not 0 <= dev < node.device_count:
            raise EndpointMismatch(f"node {node.id} has no device {dev}")

    if path == "intranode":
        if a.id != b.id:
            raise EndpointMismatch("intranode path needs both endpoints on one node")
        return PathModel("intranode", (("p2p", a.pcie),))

    if a.id == b.id:
        raise EndpointMismatch(f"{path} path needs endpoints on different nodes")
    wire = topology.link(a.id, b.id)
    if path == "rdma":
        if not (a.has_nic and b.has_nic):
            raise NoRdmaPath(f"no RDMA path between {a.id} and {b.id}")
        return PathModel("rdma", (("pcie_src", a.pcie), ("wire", wire), ("pcie_dst", b.pcie)))
    return PathModel("staged", (("d2h", a.pcie), ("wire", wire), ("h2d", b.pcie)))


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

_TOP_KEYS = {"nodes", "defaults", "links"}
_NODE_KEYS = {"id", "platform", "devices", "speed_tokens_per_s", "pcie", "nic"}
_DEFAULT_KEYS = {"pcie", "nic", "host_link", "speed_tokens_per_s", "tiers"}
_LINK_KEYS = {"alpha_s", "beta_Bps"}
_PAIR_KEYS = {"a", "b", "alpha_s", "beta_Bps"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, Mapping):
        raise ParseError(f"expected an object, got {type(obj).__name__}", where)
    extra = set(obj) - allowed
    if extra:
        raise ParseError(f"unknown keys {sorted(extra)}", where)


def _number(value, where, *, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", where)
    if positive and not value > 0:
        raise ParseError(f"expected a positive number, got {value!r}", where)
    if value < 0:
        raise ParseError(f"expected a non-negative number, got {value!r}", where)
    return float(value)


def _link(spec, tiers, where) -> LinkModel:
    if isinstance(spec, str):
        try:
            return tiers[spec]
        except KeyError:
            raise ParseError(f"unknown tier {spec!r}", where) from None
    _check_keys(spec, _LINK_KEYS, where)
    for key in _LINK_KEYS:
        if key not in spec:
            raise MissingField(f"missing field {key!r}", where)
    return LinkModel(_number(spec["alpha_s"], f"{where}.alpha_s"),
                     _number(spec["beta_Bps"], f"{where}.beta_Bps", positive=True))


def _platform(value, where) -> Platform:
    names = value if isinstance(value, list) else [value]
    if not names or not all(isinstance(n, str) for n in names):
        raise ParseError(f"platform must be a name or list of names, got {value!r}", where)
    try:
        platforms = list(dict.fromkeys(Platform.parse(n) for n in names))
    except ValueError as exc:
        raise ParseError(str(exc), where) from None
    if len(platforms) > 1:
        raise MixedVendorNode(
            "a node may hold devices of one vendor only, got "
            + ", ".join(str(p) for p in platforms), where)
    return platforms[0]


def load_topology(document: str | bytes | Mapping[str, Any]) -> ClusterTopology:
    """Parse and validate a cluster config (JSON text or an already-decoded dict)."""
    if isinstance(document, (str, bytes)):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    else:
        data = document

    _check_keys(data, _TOP_KEYS, "$")
    if "nodes" not in data:
        raise MissingField("missing field 'nodes'", "$")

    defaults = dict(BUILTIN_DEFAULTS)
    raw_defaults = data.get("defaults", {})
    _check_keys(raw_defaults, _DEFAULT_KEYS, "defaults")
    tiers = dict(TIERS)
    for name, spec in raw_defaults.get("tiers", {}).items():
        tiers[name] = _link(spec, tiers, f"defaults.tiers.{name}")
    defaults.update({k: v for k, v in raw_defaults.items() if k != "tiers"})

    nodes_raw = data["nodes"]
    if not isinstance(nodes_raw, list) or not nodes_raw:
        raise ParseError("'nodes' must be a non-empty list", "nodes")

    nodes = []
    for i, raw in enumerate(nodes_raw):
        where = f"nodes[{i}]"
        _check_keys(raw, _NODE_KEYS, where)
        for key in ("id", "platform"):
            if key not in raw:
                raise MissingField(f"missing field {key!r}", where)
        devices = raw.get("devices", 1)
        if isinstance(devices, bool) or not isinstance(devices, int) or devices < 1:
            raise ParseError(f"devices must be an integer >= 1, got {devices!r}", f"{where}.devices")
        nic_spec = raw["nic"] if "nic" in raw else defaults["nic"]
        nodes.append(NodeSpec(
            id=raw["id"],
            platform=_platform(raw["platform"], f"{where}.platform"),
            device_count=devices,
            device_speed=_number(raw.get("speed_tokens_per_s", defaults["speed_tokens_per_s"]),
                                 f"{where}.speed_tokens_per_s", positive=True),
            pcie=_link(raw.get("pcie", defaults["pcie"]), tiers, f"{where}.pcie"),
            nic=None if nic_spec is None else _link(nic_spec, tiers, f"{where}.nic"),
        ))

    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate node ids", "nodes")

    links = {}
    for i, raw in enumerate(data.get("links", [])):
        where = f"links[{i}]"
        _check_keys(raw, _PAIR_KEYS, where)
        for key in _PAIR_KEYS:
            if key not in raw:
                raise MissingField(f"missing field {key!r}", where)
        if raw["a"] not in ids or raw["b"] not in ids or raw["a"] == raw["b"]:
            raise ParseError("link endpoints must be two distinct known nodes", where)
        links[(raw["a"], raw["b"])] = _link(
            {"alpha_s": raw["alpha_s"], "beta_Bps": raw["beta_Bps"]}, tiers, where)

    host_link = _link(defaults["host_link"], tiers, "defaults.host_link")
    return ClusterTopology(tuple(nodes), links, host_link)


def load_topology_file(path) -> ClusterTopology:
    with open(path, encoding="utf-8") as fh:
        return load_topology(fh.read())


# The four-node evaluation cluster: two 4-GPU CUDA nodes on PCIe Gen3, two
# 4-GPU HIP nodes on PCIe Gen4, one HDR InfiniBand NIC per node.  CUDA
# devices profile at roughly twice the training throughput of HIP devices.
REFERENCE_CLUSTER = {
    "nodes": [
        {"id": "nv0", "platform": "cuda", "devices": 4, "speed_tokens_per_s": 48000.0,
         "pcie": "gen3", "nic": "hdr"},
        {"id": "nv1", "platform": "cuda", "devices": 4, "speed_tokens_per_s": 48000.0,
         "pcie": "gen3", "nic": "hdr"},
        {"id": "amd0", "platform": "hip", "devices": 4, "speed_tokens_per_s": 24000.0,
         "pcie": "gen4", "nic": "hdr"},
        {"id": "amd1", "platform": "hip", "devices": 4, "speed_tokens_per_s": 24000.0,
         "pcie": "gen4", "nic": "hdr"},
    ],
}


def reference_cluster() -> ClusterTopology:
    return load_topology(REFERENCE_CLUSTER)
