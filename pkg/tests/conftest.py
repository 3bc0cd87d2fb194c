import os
import sys

import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

from partseg.data import PartMap  # noqa: E402
from partseg.encoder import EncoderConfig  # noqa: E402


@pytest.fixture
def tiny_parts():
    # V=5: two 2-joint parts hanging off a root joint
    return PartMap([("arm", [1, 2]), ("leg", [3, 4])], [(0, 1), (1, 2), (0, 3), (3, 4)])


@pytest.fixture
def tiny_encoder_config(tiny_parts):
    return EncoderConfig(num_joints=5, in_channels=2, num_classes=3, part_map=tiny_parts,
                         hidden=8, bottleneck=4, num_layers=3)


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


# acceptance criteria report one line each at the end of the run
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")
