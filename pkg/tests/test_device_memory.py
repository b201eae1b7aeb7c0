import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetccl_sim import Cluster, load_topology
from hetccl_sim.errors import (CrossPlatformCopy, EndpointMismatch, NoNic, SizeMismatch,
                               UnregisteredPlatform, ZeroSize)
from hetccl_sim.platform_registry import Platform

CUDA, HIP = Platform.CUDA, Platform.HIP

MIXED_NODE_DOC = {"nodes": [
    {"id": "n0", "platform": "cuda", "devices": 2, "pcie": {"alpha_s": 1e-6, "beta_Bps": 8e9}},
    {"id": "n2", "platform": "hip", "devices": 2, "nic": None},
]}


@pytest.fixture
def mc():
    return Cluster(load_topology(MIXED_NODE_DOC), tracing=True)


def test_alloc_is_zeroed_and_tagged(mc):
    buf = mc.memory.alloc(CUDA, "n0", 16)
    assert buf.size == 16 and bytes(buf.payload) == bytes(16)
    assert buf.platform is CUDA and buf.node == "n0"
    with pytest.raises(AttributeError):
        buf.platform = HIP
    with pytest.raises(AttributeError):
        buf.node = "n2"
    assert ("alloc", CUDA) in [(r.call, r.platform) for r in mc.runtime.trace]


def test_alloc_zero_size(mc):
    with pytest.raises(ZeroSize):
        mc.memory.alloc(HIP, "n2", 0)


def test_alloc_unregistered_platform():
    c = Cluster(load_topology({"nodes": [{"id": "x", "platform": "cuda"}]}))
    with pytest.raises(UnregisteredPlatform):
        c.memory.alloc(HIP, "x", 8)


def test_register_region(mc):
    buf = mc.memory.alloc(CUDA, "n0", 8)
    assert not buf.rdma_eligible
    key = mc.memory.register_region(buf)
    assert key.nic == "n0" and buf.registered == key and buf.rdma_eligible
    assert mc.memory.register_region(buf) == key
    other = mc.memory.register_region(mc.memory.alloc(CUDA, "n0", 8))
    assert other.key != key.key


def test_register_without_nic(mc):
    with pytest.raises(NoNic):
        mc.memory.register_region(mc.memory.alloc(HIP, "n2", 8))


def test_h2d_copy_and_cost(mc):
    host = mc.memory.alloc_host("n0", 8)
    host.payload[:] = bytes(range(1, 9))
    dev = mc.memory.alloc(CUDA, "n0", 8)
    t = mc.memory.copy("h2d", host, dev, 8)
    assert bytes(dev.payload) == bytes(range(1, 9))
    assert t == 1e-6 + 8 / 8e9


def test_cross_platform_d2d():
    c = Cluster(load_topology({"nodes": [{"id": "a", "platform": "cuda"},
                                         {"id": "b", "platform": "hip"}]}))
    x = c.memory.alloc(CUDA, "a", 4)
    y = c.memory.alloc(HIP, "a", 4)
    with pytest.raises(CrossPlatformCopy):
        c.memory.copy("d2d", x, y, 4)


def test_zero_extent_copy(mc):
    dev = mc.memory.alloc(CUDA, "n0", 8)
    host = mc.memory.alloc_host("n0", 8)
    with pytest.raises(SizeMismatch):
        mc.memory.copy("d2h", dev, host, 0)
    with pytest.raises(SizeMismatch):
        mc.memory.copy("d2h", dev, host, 9)


def test_copy_must_stay_on_node(mc):
    dev = mc.memory.alloc(CUDA, "n0", 8)
    host = mc.memory.alloc_host("n2", 8)
    with pytest.raises(EndpointMismatch):
        mc.memory.copy("d2h", dev, host, 8)


def test_copy_direction_types(mc):
    dev = mc.memory.alloc(CUDA, "n0", 8)
    host = mc.memory.alloc_host("n0", 8)
    with pytest.raises(TypeError):
        mc.memory.copy("h2d", dev, host, 8)
    with pytest.raises(ValueError):
        mc.memory.copy("sideways", dev, host, 8)


@settings(max_examples=100, deadline=None)
@given(st.binary(min_size=1, max_size=4096), st.sampled_from([CUDA, HIP]))
def test_h2d_then_d2h_is_identity(data, platform):
    c = Cluster(load_topology({"nodes": [{"id": "n", "platform": platform.value}]}))
    n = len(data)
    src = c.memory.alloc_host("n", n)
    src.payload[:] = data
    dev = c.memory.alloc(platform, "n", n)
    back = c.memory.alloc_host("n", n)
    c.memory.copy("h2d", src, dev, n)
    c.memory.copy("d2h", dev, back, n)
    assert bytes(back.payload) == data
    assert dev.platform is platform


def test_typed_view_is_little_endian(mc):
    dev = mc.memory.alloc(CUDA, "n0", 8)
    dev.view("<i4")[:] = [1, 2]
    assert bytes(dev.payload) == b"\x01\x00\x00\x00\x02\x00\x00\x00"
    assert np.array_equal(dev.view("<i4"), [1, 2])
