import numpy as np
import pytest

from hnrad.volume import GridGeometry, LabelMask, VoxelGrid


def grid(values, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> VoxelGrid:
    values = np.asarray(values, dtype=float)
    return VoxelGrid(GridGeometry(values.shape, spacing, origin), values)


def mask(labels, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> LabelMask:
    labels = np.asarray(labels)
    return LabelMask(GridGeometry(labels.shape, spacing, origin), labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
