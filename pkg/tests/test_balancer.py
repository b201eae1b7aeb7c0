import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from hetccl_sim import (MODEL_PRESETS, Cluster, ModelDesc, StepReport, ZeroSchedule,
                        assign_microbatches, efficiency, load_topology, simulate_profiling,
                        simulate_step)
from hetccl_sim.balancer import (Assignment, load_model_desc, proportional_shares,
                                 uniform_assignment)
from hetccl_sim.errors import RankMismatch, ZeroBatch


def max_ratio(b, s):
    return max(Fraction(x) / Fraction(y) for x, y in zip(b, s))


def brute_force_best(B, speeds):
    """Smallest max(b_i/s_i) over every composition of B into len(speeds) parts."""
    k = len(speeds)
    best = None
    for cuts in itertools.combinations(range(B + k - 1), k - 1):
        b, prev = [], -1
        for c in cuts + (B + k - 1,):
            b.append(c - prev - 1)
            prev = c
        r = max_ratio(b, speeds)
        if best is None or r < best:
            best = r
    return best


def test_worked_examples():
    assert assign_microbatches(12, [2, 2, 1, 1]).per_rank == (4, 4, 2, 2)
    assert assign_microbatches(10, [3, 3, 3]).per_rank == (4, 3, 3)
    assert assign_microbatches(5, [1]).per_rank == (5,)


def test_errors():
    with pytest.raises(ZeroBatch):
        assign_microbatches(0, [1, 2])
    with pytest.raises(ValueError):
        assign_microbatches(4, [])
    with pytest.raises(ValueError):
        assign_microbatches(4, [1, 0])
    with pytest.raises(ValueError):
        Assignment(3, (1, 1))


def test_optimal_where_plain_rounding_is_not():
    # rounding shares 0.545/5.455 by largest remainder would give [1, 5]
    # with a slowest finish of 1.0; moving the sample to the fast rank gives 0.6
    assert assign_microbatches(6, [1, 10]).per_rank == (0, 6)


speeds_st = st.lists(st.floats(0.01, 100.0), min_size=1, max_size=16)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 1000), speeds_st)
def test_conservation(B, speeds):
    a = assign_microbatches(B, speeds)
    assert sum(a.per_rank) == B and all(b >= 0 for b in a.per_rank)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 25), st.lists(st.floats(0.1, 10.0), min_size=1, max_size=4))
def test_optimality_small(B, speeds):
    a = assign_microbatches(B, speeds)
    assert max_ratio(a.per_rank, speeds) == brute_force_best(B, speeds)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 500), speeds_st, st.integers(-20, 20))
def test_scale_invariance_power_of_two(B, speeds, e):
    c = 2.0 ** e
    assert assign_microbatches(B, [c * s for s in speeds]) == assign_microbatches(B, speeds)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 500), st.lists(st.integers(1, 1000), min_size=1, max_size=16),
       st.integers(1, 1000))
def test_scale_invariance_integer(B, speeds, c):
    # integer products are exact in floating point, so ties are preserved
    assert assign_microbatches(B, [float(c * s) for s in speeds]) == \
        assign_microbatches(B, [float(s) for s in speeds])


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 1000), speeds_st)
def test_real_valued_shares_equalize(B, speeds):
    shares = proportional_shares(B, speeds)
    ratios = {q / Fraction(s) for q, s in zip(shares, speeds)}
    assert len(ratios) == 1 and sum(shares) == B


def test_ties_go_to_lower_rank():
    assert assign_microbatches(2, [1, 1, 1]).per_rank == (1, 1, 0)
    assert uniform_assignment(5, 4).per_rank == (2, 1, 1, 1)


# -- step simulation -------------------------------------------------------------

def two_by_two(speed_a=2.0, speed_b=1.0):
    return load_topology({"nodes": [
        {"id": "a", "platform": "cuda", "devices": 2, "speed_tokens_per_s": speed_a},
        {"id": "b", "platform": "hip", "devices": 2, "speed_tokens_per_s": speed_b},
    ]})


def test_zero_comm_step():
    topo = two_by_two()
    comm = Cluster(topo).communicator()
    bal = simulate_step(assign_microbatches(12, [2, 2, 1, 1]), None, comm, topo, seq_len=1)
    assert bal.compute_time == 2.0 and bal.comm_time == 0.0 and bal.throughput == 6.0
    uni = simulate_step(uniform_assignment(12, 4), None, comm, topo, seq_len=1)
    assert uni.compute_time == 3.0
    assert bal.throughput / uni.throughput == 1.5


def test_rank_mismatch():
    topo = two_by_two()
    comm = Cluster(topo).communicator()
    with pytest.raises(RankMismatch):
        simulate_step(Assignment(4, (2, 2)), None, comm, topo)


def small_model(params, B=12):
    return ModelDesc("m", params, 2, 1, B)


def test_comm_shrinks_speedup_as_volume_grows():
    topo = two_by_two(2e6, 1e6)
    speedups = []
    for params in (10**4, 10**5, 10**6, 10**7, 10**8):
        m = small_model(params)
        sched = ZeroSchedule.for_model(m, 1, 4)
        cl = Cluster(topo)
        bal = simulate_step(assign_microbatches(12, [2, 2, 1, 1]), sched, cl.communicator(), topo)
        uni = simulate_step(uniform_assignment(12, 4), sched, cl.communicator(), topo)
        assert bal.step_time >= bal.compute_time
        speedups.append(bal.throughput / uni.throughput)
    assert all(s < 1.5 for s in speedups)
    assert all(b < a for a, b in zip(speedups, speedups[1:]))


def test_profiling():
    topo = two_by_two()
    m = small_model(1000)
    prof = simulate_profiling(m, topo, 3)
    assert prof.speeds == (2.0, 2.0, 1.0, 1.0)
    cl = Cluster(topo)
    step = simulate_step(uniform_assignment(12, 4), ZeroSchedule.for_model(m, 3, 4),
                         cl.communicator(), topo)
    assert prof.profiling_duration == pytest.approx(3 * step.step_time, rel=1e-12)
    with pytest.raises(ValueError):
        simulate_profiling(m, topo, 0)


def test_profiling_grows_with_model_size():
    topo = Cluster().topology
    durations = [simulate_profiling(m, topo, 3).profiling_duration for m in MODEL_PRESETS.values()]
    assert all(b > a for a, b in zip(durations, durations[1:]))


def test_efficiency():
    no_comm = StepReport(2.0, 0.0, 12)
    a, b = StepReport(2.0, 0.0, 8), StepReport(2.0, 0.0, 4)
    assert efficiency(no_comm, a, b) == 1.0
    assert efficiency(StepReport(2.0, 0.1, 12), a, b) < 1.0


def test_zero_schedules():
    m = MODEL_PRESETS["gpt-125m"]
    z1 = ZeroSchedule.for_model(m, 1, 16)
    z3 = ZeroSchedule.for_model(m, 3, 16)
    assert [op for op, _ in z1.collectives] == ["all_reduce", "all_gather"]
    assert [op for op, _ in z3.collectives] == ["all_gather", "all_gather", "reduce_scatter"]
    assert z1.bytes_of("all_reduce") == m.params * 2
    assert z3.bytes_of("all_gather") > z1.bytes_of("all_gather")
    with pytest.raises(ValueError):
        ZeroSchedule.for_model(m, 2, 16)
    with pytest.raises(ValueError):
        ZeroSchedule(1, (("all_reduce", 0),))


def test_schedule_pads_to_world():
    z = ZeroSchedule.for_model(ModelDesc("odd", 1001, 4, 1, 1), 3, 12)
    assert all(v % (12 * 4) == 0 for _, v in z.collectives)


def test_presets():
    assert {k: (m.params, m.seq_len) for k, m in MODEL_PRESETS.items()} == {
        "gpt-125m": (125_000_000, 1024), "gpt-355m": (355_000_000, 1024),
        "llama-1b": (1_000_000_000, 8192), "llama-3b": (3_000_000_000, 8192)}


def test_model_block():
    m = load_model_desc({"params": 10, "dtype_bytes": 4, "seq_len": 8, "batch_B": 3})
    assert (m.params, m.dtype_bytes, m.seq_len, m.batch_B) == (10, 4, 8, 3)
    with pytest.raises(ValueError):
        load_model_desc({"params": 10, "layers": 2})
    with pytest.raises(ValueError):
        load_model_desc({"seq_len": 8})
