import pytest

from hetccl_sim import Cluster, load_topology


def two_vendor_doc(pcie_a="gen3", pcie_b="gen4", nic="hdr", devices=4, speeds=(2.0, 1.0)):
    """One node per vendor, or two per vendor with ``double=True`` handled by callers."""
    return {"nodes": [
        {"id": "a0", "platform": "cuda", "devices": devices, "speed_tokens_per_s": speeds[0],
         "pcie": pcie_a, "nic": nic},
        {"id": "a1", "platform": "cuda", "devices": devices, "speed_tokens_per_s": speeds[0],
         "pcie": pcie_a, "nic": nic},
        {"id": "b0", "platform": "hip", "devices": devices, "speed_tokens_per_s": speeds[1],
         "pcie": pcie_b, "nic": nic},
        {"id": "b1", "platform": "hip", "devices": devices, "speed_tokens_per_s": speeds[1],
         "pcie": pcie_b, "nic": nic},
    ]}


@pytest.fixture
def cluster():
    return Cluster()


@pytest.fixture
def small_cluster():
    return Cluster(load_topology(two_vendor_doc()))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
