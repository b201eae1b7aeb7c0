"""Point-to-point transfers: RDMA versus host staging, same-vendor versus mixed."""

from hetccl_sim import Cluster, Transfer, measured_bandwidth, path_model, reference_cluster

topo = reference_cluster()

# Closed-form paths.  RDMA pays every hop's latency once but streams at the
# slowest link; the staged path copies to host, crosses the wire, and copies
# back, one segment after another.
pairs = {
    "cuda-cuda": (("nv0", 0), ("nv1", 0)),
    "hip-hip": (("amd0", 0), ("amd1", 0)),
    "cuda-hip": (("nv0", 0), ("amd0", 0)),
}
print(f"{'pair':10} {'size':>12} {'rdma GB/s':>10} {'staged GB/s':>12} {'ratio':>6}")
for name, (a, b) in pairs.items():
    for size in (4096, 1 << 20, 1 << 30):
        r = path_model(topo, a, b, "rdma")(size)
        s = path_model(topo, a, b, "staged")(size)
        print(f"{name:10} {size:12d} {size / r / 1e9:10.2f} {size / s / 1e9:12.2f} {s / r:6.2f}")

# The mixed pair streams exactly as fast as the slower of the two vendors.
big = 1 << 30
bw = {k: big / path_model(topo, a, b, "rdma")(big) for k, (a, b) in pairs.items()}
print("mixed == slower side:", bw["cuda-hip"] == min(bw["cuda-cuda"], bw["hip-hip"]))

# Actual transfers move bytes and advance each endpoint's virtual clock.
cluster = Cluster(topo)
src, dst = cluster.endpoints([("nv0", 0), ("amd0", 0)])
mm = cluster.memory
sbuf = mm.alloc(src.platform, "nv0", 1 << 20)
dbuf = mm.alloc(dst.platform, "amd0", 1 << 20)
sbuf.payload[:5] = b"hello"

rep = cluster.transport.send_recv(src, sbuf, dst, dbuf, 1 << 20)
print("without registration:", rep.path_used, bytes(dbuf.payload[:5]))

mm.register_region(sbuf)
mm.register_region(dbuf)
rep = cluster.transport.send_recv(src, sbuf, dst, dbuf, 1 << 20)
print(f"registered: {rep.path_used}, {measured_bandwidth(rep) / 1e9:.2f} GB/s, "
      f"clocks now {src.clock * 1e6:.1f} / {dst.clock * 1e6:.1f} us")

# Two flows out of the same NIC share it: the second waits for the first.
a0, a1, b0, b1 = cluster.endpoints([("nv0", 0), ("nv0", 1), ("amd0", 0), ("amd0", 1)])
first, second = cluster.transport.post([Transfer(a0, b0, 1 << 24), Transfer(a1, b1, 1 << 24)])
print(f"first ends {first.src_clock_after * 1e3:.3f} ms, second ends {second.src_clock_after * 1e3:.3f} ms")
