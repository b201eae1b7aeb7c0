"""Collectives over a mixed CUDA/HIP communicator.

Ranks are grouped by (node, platform).  Inside a group the vendor library
does the work; between groups, ranks exchange blocks point to point.
"""

import numpy as np

from hetccl_sim import OPS, Cluster, CollectiveSpec, run_collective, time_collective

cluster = Cluster()
locs = cluster.scenario("het", 8)  # 4 CUDA + 4 HIP devices
comm = cluster.communicator(locs)
print("groups:", comm.groups)

rng = np.random.default_rng(0)
send = [rng.integers(0, 100, 16).astype("<i4") for _ in range(comm.world_size)]

out, report = run_collective(comm, send, CollectiveSpec.of("all_reduce", "i32"))
print("all_reduce correct:", all(np.array_equal(o, np.sum(send, axis=0)) for o in out))
print(f"took {report.completion_time * 1e6:.1f} us (virtual)")
for name, t in report.phases:
    print(f"  {name}: {t * 1e6:.2f} us")

# The combine order is fixed: fold inside each group, then across groups.
# Results are therefore bitwise reproducible, floats included.
fsend = [rng.standard_normal(32).astype("<f4") for _ in range(comm.world_size)]
a, _ = run_collective(comm, fsend, CollectiveSpec.of("all_reduce", "f32"))
b, _ = run_collective(cluster.communicator(locs), fsend, CollectiveSpec.of("all_reduce", "f32"))
print("float all_reduce reproducible:", all(np.array_equal(x, y) for x, y in zip(a, b)))

# A single-vendor single-node communicator just hands the op to its backend.
solo = cluster.communicator([("amd0", d) for d in range(4)])
run_collective(solo, send[:4], CollectiveSpec.of("broadcast", "i32", root=2))
print("homogeneous broadcast: backend calls", solo.counts("backend"), "p2p", solo.counts("p2p"))

# Timing-only runs need no payloads; they drive the bandwidth tables.
size = 64 << 20
print(f"\n{'op':15} {'homoA':>9} {'homoB':>9} {'het':>9}   busbw GB/s")
for op in OPS:
    row = [time_collective(cluster.communicator(cluster.scenario(s, 8)), op, size, 4)
           for s in ("homoA", "homoB", "het")]
    print(f"{op:15} " + " ".join(f"{r.bus_bandwidth / 1e9:9.2f}" for r in row))
