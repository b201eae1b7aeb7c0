"""Data-parallel training on the mixed cluster: speedup and efficiency per model."""

from hetccl_sim import MODEL_PRESETS
from hetccl_sim.bench import run_train_sim

print(f"{'model':10} {'zero':>4} {'batch':>5} {'compute s':>10} {'comm s':>8} "
      f"{'speedup':>8} {'efficiency':>10}")
for zero in (1, 3):
    for name in MODEL_PRESETS:
        r = run_train_sim(name, zero)
        print(f"{name:10} {zero:4d} {r.assignment.total:5d} {r.compute_time:10.4f} "
              f"{r.comm_time:8.4f} {r.speedup:8.3f} {r.efficiency:10.3f}")

# Larger models move more bytes per step, so communication eats more of the
# gain from balancing.  With communication switched off, balancing reaches
# the ideal ratio and the mixed cluster matches the sum of its parts.
ideal = run_train_sim("llama-3b", 3, comm_enabled=False)
print(f"\nno communication: speedup {ideal.speedup:.3f}, efficiency {ideal.efficiency:.3f}")

# The uniform split, for comparison.
off = run_train_sim("gpt-125m", 3, balance=False)
print("balance off:", off.assignment.per_rank[:4], "...", off.assignment.per_rank[-4:])
