"""Splitting a global batch in proportion to device speed."""

from fractions import Fraction

from hetccl_sim import assign_microbatches
from hetccl_sim.balancer import proportional_shares, uniform_assignment

speeds = [48000.0] * 4 + [24000.0] * 4  # tokens/s for 4 fast and 4 slow devices
B = 48

shares = proportional_shares(B, speeds)
print("ideal shares:", [str(s) for s in shares])
a = assign_microbatches(B, speeds)
print("balanced:", a.per_rank)
print("uniform: ", uniform_assignment(B, len(speeds)).per_rank)


def finish(per_rank):
    return max(b / s for b, s in zip(per_rank, speeds))


print(f"step finishes at {finish(a.per_rank):.2e} vs {finish(uniform_assignment(B, 8).per_rank):.2e}")

# Shares that do not divide evenly: leftover samples go one at a time to
# whichever rank would still finish first after taking one.
odd = [3.0, 2.0, 2.0]
for B in (1, 2, 5, 10):
    print(B, assign_microbatches(B, odd).per_rank, [str(Fraction(x)) for x in proportional_shares(B, odd)])

# Rounding each share to the nearest integer can be far from optimal.  With
# speeds 1 and 10 and six samples, the fast device should take all of them.
print("[1, 10], B=6 ->", assign_microbatches(6, [1.0, 10.0]).per_rank)

# Only the ratios matter.
print("scaled x1000 :", assign_microbatches(17, [1000.0 * x for x in odd]).per_rank,
      "==", assign_microbatches(17, odd).per_rank)
