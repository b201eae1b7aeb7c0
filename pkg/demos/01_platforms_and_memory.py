"""Two vendor runtimes behind one dispatch table, and device buffers on each."""

import numpy as np

from hetccl_sim import Cluster, Platform
from hetccl_sim.platform_registry import API_SURFACE

cluster = Cluster(tracing=True)
rt = cluster.runtime

# Every backend fills in the same twelve entries; the rest of the library
# only ever calls through rt.dispatch, never into a vendor directly.
print("registered:", [str(p) for p in rt.platforms])
print("surface:", ", ".join(API_SURFACE))

# Each node picked its platform when the cluster was built.
for node in cluster.topology.nodes:
    print(f"{node.id}: {rt.get_platform(node.id)}, {node.device_count} devices, nic={node.has_nic}")

# Allocate on a CUDA node, stage some data in from the host, and read it back.
mm = cluster.memory
host = mm.alloc_host("nv0", 64)
host.view("<f4")[:] = np.arange(16, dtype="<f4")
dev = mm.alloc(Platform.CUDA, "nv0", 64)
t_in = mm.copy("h2d", host, dev, 64)
back = mm.alloc_host("nv0", 64)
t_out = mm.copy("d2h", dev, back, 64)
print("round trip ok:", np.array_equal(back.view("<f4"), np.arange(16, dtype="<f4")))
print(f"h2d {t_in * 1e6:.2f} us, d2h {t_out * 1e6:.2f} us")

# Registering a buffer with the NIC is what makes it eligible for RDMA.
key = mm.register_region(dev)
print("registered region:", key, "rdma eligible:", dev.rdma_eligible)

# The trace shows which vendor table served each call.
for rec in rt.trace[-4:]:
    print("  ", rec.call, rec.platform)
