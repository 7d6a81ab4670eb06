import numpy as np
import pytest
from hypothesis import settings

from fracstab.synth import BenchmarkConfig, make_benchmark
from fracstab.trajectory import TrajectorySequence

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_suite():
    cfg = BenchmarkConfig(n_train=4, n_test=4, frames=60)
    return make_benchmark(cfg, seed=3)


def seq(frames, norm=100.0, vid="v"):
    return TrajectorySequence(np.asarray(frames, dtype=float), norm_distance=norm, video_id=vid)
