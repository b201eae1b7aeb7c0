"""Sweep message sizes the way the command-line harness does, and keep the rows."""

import io

import numpy as np

from hetccl_sim import reference_cluster
from hetccl_sim.bench import (COLL_HEADER, P2P_HEADER, SweepSpec, parse_sizes, run_collective_sweep,
                              run_p2p_sweep, write_csv)

topo = reference_cluster()
spec = SweepSpec(tuple(parse_sizes("1024:1073741824:x4")))

p2p = run_p2p_sweep(topo, spec)
print(write_csv(P2P_HEADER, p2p[:6]), end="")

# Pull the large-message plateau out of the rows.
for scenario in ("homoA", "homoB", "het"):
    bw = [r[4] for r in p2p if r[0] == scenario and r[1] == "rdma"]
    print(f"{scenario:6} rdma peak {max(bw) / 1e9:6.2f} GB/s")

# Collective rows carry both algorithm and bus bandwidth.  Every
# (scenario, world) pair is checked against a reference result first.
rows = run_collective_sweep(topo, SweepSpec(tuple(parse_sizes("1048576:268435456:x16"))),
                            ops=("all_reduce",), worlds=(4, 8, 16))
print()
print(write_csv(COLL_HEADER, rows), end="")

busbw = np.array([r[6] for r in rows if r[3] == rows[-1][3]])
print("\nlargest-size busbw spread (GB/s):", np.round(busbw / 1e9, 2))
