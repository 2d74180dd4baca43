import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, max_examples=40, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")


def randomizer_bytes(nbytes: int, key: int) -> bytes:
    """Platform-stable pseudorandom bytes for golden vectors."""
    return np.random.Generator(np.random.Philox(key=key)).bytes(nbytes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def randomizer_64k(tmp_path_factory):
    path = tmp_path_factory.mktemp("rand") / "r64k.bin"
    path.write_bytes(randomizer_bytes(1 << 16, 1))
    return path


@pytest.fixture(scope="session")
def randomizer_1m(tmp_path_factory):
    path = tmp_path_factory.mktemp("rand") / "r1m.bin"
    path.write_bytes(randomizer_bytes(1 << 20, 2))
    return path


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
