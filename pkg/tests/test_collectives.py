import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetccl_sim import (OPS, Cluster, CollectiveSpec, LinkModel, backend_collective, load_topology,
                        ring_time, run_collective, time_collective)
from hetccl_sim.cluster import scenario_devices
from hetccl_sim.collectives import BUS_FACTOR, CHUNK_BYTES
from hetccl_sim.errors import InvalidRoot, LengthMismatch, MixedGroup
from hetccl_sim.topology import TIERS

from oracles import expected, same, vendor_groups


def group_keys(cluster, locs):
    return [(n, cluster.topology.node(n).platform) for n, _ in locs]


# -- ring timing -------------------------------------------------------------

def test_ring_time_examples():
    assert ring_time(1, 10**9, LinkModel(1.0, 1.0), "all_reduce") == 0.0
    assert ring_time(4, 4096, LinkModel(0.0, 1024.0), "all_reduce") == 6.0
    assert ring_time(2, 2048, LinkModel(1.0, 1024.0), "all_gather") == 2.0
    assert ring_time(3, 3000, LinkModel(0.5, 1000.0), "all_to_all") == 2 * (0.5 + 1.0)


def test_rooted_ring_time_uses_chunks():
    link = LinkModel(1e-6, 1e9)
    small = 1000
    assert ring_time(4, small, link, "broadcast") == 3 * (1e-6 + small / 1e9)
    big = 8 * CHUNK_BYTES
    assert ring_time(4, big, link, "reduce") == (4 - 2 + 8) * (1e-6 + CHUNK_BYTES / 1e9)


def test_ring_time_rejects_bad_input():
    with pytest.raises(ValueError):
        ring_time(0, 1, LinkModel(0, 1), "all_reduce")
    with pytest.raises(ValueError):
        ring_time(2, 1, LinkModel(0, 1), "gossip")


# -- backend ------------------------------------------------------------------

def test_backend_all_reduce_group_of_four(cluster):
    group = cluster.endpoints([("nv0", d) for d in range(4)])
    out, d = backend_collective(cluster, group, CollectiveSpec.of("all_reduce", "i32"),
                                [[r] * 4 for r in range(4)])
    assert all(o.tolist() == [6, 6, 6, 6] for o in out)
    assert d == ring_time(4, 16, TIERS["gen3"], "all_reduce")


def test_backend_single_member(cluster):
    group = cluster.endpoints([("amd0", 2)])
    out, d = backend_collective(cluster, group, CollectiveSpec.of("all_reduce", "f32"), [[1.5, 2.5]])
    assert out[0].tolist() == [1.5, 2.5] and d == 0.0


def test_backend_rejects_mixed_group(cluster):
    group = cluster.endpoints([("nv0", 0), ("amd0", 0)])
    with pytest.raises(MixedGroup):
        backend_collective(cluster, group, CollectiveSpec.of("all_reduce"), [[1], [2]])
    group = cluster.endpoints([("nv0", 0), ("nv1", 0)])
    with pytest.raises(MixedGroup):
        backend_collective(cluster, group, CollectiveSpec.of("all_reduce"), [[1], [2]])


def test_backend_uses_platform_kernels():
    c = Cluster(tracing=True)
    group = c.endpoints([("amd1", 0), ("amd1", 1)])
    backend_collective(c, group, CollectiveSpec.of("all_reduce", combiner="reduce_max"), [[1], [2]])
    launches = [r for r in c.runtime.trace if r.call == "launch_kernel"]
    assert launches and all(str(r.platform) == "hip" for r in launches)


# -- spec ---------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        CollectiveSpec("all_reduce")
    with pytest.raises(ValueError):
        CollectiveSpec("all_gather", combiner="reduce_sum")
    with pytest.raises(ValueError):
        CollectiveSpec("broadcast")
    with pytest.raises(ValueError):
        CollectiveSpec("all_reduce", "f16", "reduce_sum")
    assert CollectiveSpec.of("broadcast", root=3) == CollectiveSpec("broadcast", "f32", None, 3)


# -- semantics: worked examples ----------------------------------------------

def comm_of(cluster, locs, **kw):
    return cluster.communicator(locs, **kw)


def test_two_rank_examples(cluster):
    comm = comm_of(cluster, [("nv0", 0), ("amd0", 0)])
    out, rep = comm.all_reduce([[1, 2], [10, 20]], dtype="i32")
    assert [o.tolist() for o in out] == [[11, 22], [11, 22]]
    assert rep.completion_time > 0
    out, _ = comm.reduce_scatter([[1, 2], [10, 20]], dtype="i32")
    assert [o.tolist() for o in out] == [[11], [22]]
    out, _ = comm.all_gather([[1], [2]], dtype="i32")
    assert [o.tolist() for o in out] == [[1, 2], [1, 2]]


def test_broadcast_reduce_all_to_all_examples(cluster):
    comm = comm_of(cluster, [("nv0", 0), ("nv0", 1), ("amd0", 0), ("amd1", 0)])
    out, _ = comm.broadcast([[7, 7], [0, 0], [0, 0], [0, 0]], dtype="i32", root=0)
    assert all(o.tolist() == [7, 7] for o in out)
    out, _ = comm.reduce(np.eye(4, dtype="<i4"), dtype="i32", root=2)
    assert out[2].tolist() == [1, 1, 1, 1] and out[0] is None and out[3] is None

    comm3 = comm_of(cluster, [("nv0", 0), ("amd0", 0), ("amd0", 1)])
    # block j of rank i is labelled 10*i + j
    out, _ = comm3.all_to_all([[10 * i + j for j in range(3)] for i in range(3)], dtype="i32")
    assert [o.tolist() for o in out] == [[10 * j + i for j in range(3)] for i in range(3)]


def test_world_size_one(cluster):
    comm = comm_of(cluster, [("amd0", 1)])
    out, rep = comm.all_gather([[4, 5]], dtype="i32")
    assert out[0].tolist() == [4, 5]
    assert rep.completion_time == 0 and rep.degenerate and rep.bus_bandwidth == 0.0
    out, _ = comm.all_reduce([[1.25]], dtype="f64")
    assert out[0].tolist() == [1.25]


def test_argument_errors(cluster):
    comm = comm_of(cluster, [("nv0", 0), ("amd0", 0)])
    with pytest.raises(LengthMismatch):
        comm.all_reduce([[1, 2], [1]])
    with pytest.raises(LengthMismatch):
        comm.all_reduce([[1]])
    with pytest.raises(LengthMismatch):
        comm.reduce_scatter([[1, 2, 3], [1, 2, 3]])
    with pytest.raises(LengthMismatch):
        comm.all_to_all([[1, 2, 3], [1, 2, 3]])
    with pytest.raises(InvalidRoot):
        comm.broadcast([[1], [2]], root=2)
    with pytest.raises(InvalidRoot):
        comm.reduce([[1], [2]], root=-1)
    with pytest.raises(LengthMismatch):
        time_collective(comm, "all_reduce", 6, 4)


def test_mixed_16_rank_f32_exact(cluster):
    locs = scenario_devices(cluster.topology, "het", 16)
    comm = comm_of(cluster, locs)
    rng = np.random.default_rng(7)
    arrays = [rng.standard_normal(333).astype("<f4") for _ in range(16)]
    out, _ = comm.all_reduce(arrays)
    want = expected("all_reduce", arrays, vendor_groups(group_keys(cluster, locs)))
    assert all(same(o, w) for o, w in zip(out, want))


# -- semantics: randomized oracle comparison ----------------------------------

ALL_DEVICES = [(n, d) for n in ("nv0", "nv1", "amd0", "amd1") for d in range(4)]


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_matches_oracle(data):
    c = Cluster()
    locs = data.draw(st.lists(st.sampled_from(ALL_DEVICES), min_size=1, max_size=16, unique=True))
    hierarchical = data.draw(st.booleans())
    op = data.draw(st.sampled_from(OPS))
    dtype = data.draw(st.sampled_from(["f32", "f64", "i32"]))
    combiner = data.draw(st.sampled_from(["reduce_sum", "reduce_min", "reduce_max"]))
    w = len(locs)
    root = data.draw(st.integers(0, w - 1))
    n = w * data.draw(st.integers(1, 4)) if op in ("reduce_scatter", "all_to_all") \
        else data.draw(st.integers(1, 40))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    spec = CollectiveSpec.of(op, dtype, combiner, root)
    if dtype == "i32":
        arrays = [rng.integers(-10**6, 10**6, n).astype("<i4") for _ in range(w)]
    else:
        arrays = [rng.standard_normal(n).astype(spec.np_dtype) for _ in range(w)]
    comm = c.communicator(locs, hierarchical=hierarchical, prefer_rdma=data.draw(st.booleans()))
    out, rep = run_collective(comm, arrays, spec)
    groups = vendor_groups(group_keys(c, locs)) if hierarchical else [[p] for p in range(w)]
    want = expected(op, arrays, groups, combiner, root)
    assert all(same(o, x) for o, x in zip(out, want))
    assert rep.completion_time >= 0 and (rep.completion_time > 0) == (w > 1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(ALL_DEVICES), min_size=2, max_size=16, unique=True),
       st.sampled_from(["reduce_sum", "reduce_min", "reduce_max"]), st.integers(0, 2**32 - 1))
def test_hierarchical_equals_flat(locs, combiner, seed):
    # exact for integer sums and for min/max regardless of grouping
    c = Cluster()
    rng = np.random.default_rng(seed)
    w = len(locs)
    arrays = [rng.integers(-1000, 1000, 2 * w).astype("<i4") for _ in range(w)]
    for op in ("all_reduce", "reduce_scatter", "reduce"):
        spec = CollectiveSpec.of(op, "i32", combiner, root=w - 1)
        h, _ = run_collective(c.communicator(locs), arrays, spec)
        f, _ = run_collective(c.communicator(locs, hierarchical=False), arrays, spec)
        assert all(same(a, b) for a, b in zip(h, f))


def test_float_min_max_hierarchical_equals_flat(cluster):
    rng = np.random.default_rng(3)
    locs = scenario_devices(cluster.topology, "het", 12)
    arrays = [rng.standard_normal(24).astype("<f4") for _ in range(12)]
    for combiner in ("reduce_min", "reduce_max"):
        spec = CollectiveSpec.of("all_reduce", "f32", combiner)
        h, _ = run_collective(cluster.communicator(locs), arrays, spec)
        f, _ = run_collective(cluster.communicator(locs, hierarchical=False), arrays, spec)
        assert all(same(a, b) for a, b in zip(h, f))


# -- structure and timing -------------------------------------------------------

@pytest.mark.parametrize("op", OPS)
def test_single_group_delegates_once(cluster, op):
    comm = cluster.communicator([("amd1", d) for d in range(4)])
    rng = np.random.default_rng(0)
    arrays = [rng.integers(0, 9, 8).astype("<i4") for _ in range(4)]
    run_collective(comm, arrays, CollectiveSpec.of(op, "i32"))
    assert comm.counts("backend") == 1 and comm.counts("p2p") == 0
    assert comm.transport.log == []


@pytest.mark.parametrize("op", OPS)
def test_timing_only_matches_data_run(cluster, op):
    locs = scenario_devices(cluster.topology, "het", 12)
    n = 12 * 5
    arrays = [np.arange(n, dtype="<f4") for _ in range(12)]
    _, rep = run_collective(cluster.communicator(locs), arrays, CollectiveSpec.of(op, root=5))
    nbytes = rep.nbytes
    t = time_collective(cluster.communicator(locs), op, nbytes, 4, root=5)
    assert t.completion_time == rep.completion_time
    assert t.phases == rep.phases


def test_mixed_all_reduce_critical_path(cluster):
    """4+4 all_reduce, recomputed from ring and path terms.

    Local reduce-scatter and all-gather are ring steps over each node's PCIe
    (the gen3 side is slower).  The cross phase moves 4 shard halves each way
    per step; one NIC carries them one at a time, and the all-gather step's
    flows queue behind the reduce-scatter step's on the same NIC.
    """
    S = 2**24
    gen3, hdr = TIERS["gen3"], TIERS["hdr"]
    local = 3 * (gen3.alpha + (S / 4) / gen3.beta)
    flow = (gen3.alpha + hdr.alpha + TIERS["gen4"].alpha) + (S / 8) / min(gen3.beta, hdr.beta)
    want = 2 * local + 8 * flow
    comm = cluster.communicator(scenario_devices(cluster.topology, "het", 8))
    got = time_collective(comm, "all_reduce", S, 4).completion_time
    assert abs(got - want) < 1e-9


@pytest.mark.parametrize("op", OPS)
def test_single_group_time_is_ring_time(cluster, op):
    comm = cluster.communicator([("nv1", d) for d in range(4)])
    S = 4 * 4096
    rep = time_collective(comm, op, S, 4)
    assert abs(rep.completion_time - ring_time(4, S, TIERS["gen3"], op)) < 1e-12


@pytest.mark.parametrize("op", OPS)
def test_mixed_not_faster_than_faster_homogeneous(cluster, op):
    for e in range(10, 31, 4):
        S = 2**e
        times = {}
        for s in ("homoA", "homoB", "het"):
            comm = cluster.communicator(scenario_devices(cluster.topology, s, 8))
            times[s] = time_collective(comm, op, S, 4).completion_time
        assert times["het"] >= min(times["homoA"], times["homoB"])


def test_bus_bandwidth_convention(cluster):
    comm = cluster.communicator(scenario_devices(cluster.topology, "homoB", 8))
    rep = time_collective(comm, "all_reduce", 2**20, 4)
    assert rep.algbw == 2**20 / rep.completion_time
    assert math.isclose(rep.bus_bandwidth, rep.algbw * 2 * 7 / 8)
    assert BUS_FACTOR["broadcast"](8) == 1.0


def test_collective_advances_clocks(cluster):
    comm = cluster.communicator(scenario_devices(cluster.topology, "het", 8))
    comm.ranks[3].clock = 2.0
    rep = time_collective(comm, "all_gather", 8 * 1024, 4)
    assert all(ep.clock >= 2.0 for ep in comm.ranks)
    assert max(ep.clock for ep in comm.ranks) == 2.0 + rep.completion_time


def test_rdma_off_is_slower(cluster):
    locs = scenario_devices(cluster.topology, "het", 8)
    fast = time_collective(cluster.communicator(locs), "all_reduce", 2**24, 4)
    slow = time_collective(cluster.communicator(locs, prefer_rdma=False), "all_reduce", 2**24, 4)
    assert slow.completion_time > fast.completion_time


def test_custom_topology_nicless_collective():
    topo = load_topology({"nodes": [{"id": "p", "platform": "cuda", "devices": 2, "nic": None},
                                    {"id": "q", "platform": "hip", "devices": 2, "nic": None}]})
    c = Cluster(topo)
    comm = c.communicator()
    out, rep = comm.all_reduce([[1], [2], [3], [4]], dtype="i32")
    assert all(o.tolist() == [10] for o in out)
    assert {r.path_used for r in comm.transport.log} == {"staged"}
