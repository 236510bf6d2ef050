import numpy as np
import pytest

from tcrbench.pointcloud import PointCloud


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_cloud(rng, n, scale=10.0, intensity=False):
    pts = rng.uniform(-scale, scale, size=(n, 3))
    return PointCloud(pts, rng.random(n) if intensity else None)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
