import numpy as np
import pytest

from sigdoor import crypto
from sigdoor.stego import CIFAR_LAYOUT


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ed_key():
    return crypto.keygen("ed25519", seed="fixture-ed25519")


@pytest.fixture(scope="session")
def other_ed_key():
    return crypto.keygen("ed25519", seed="fixture-ed25519-other")


@pytest.fixture(scope="session")
def dil_key():
    return crypto.keygen("dilithium2", seed="fixture-dilithium2")


@pytest.fixture
def cifar_layout():
    return CIFAR_LAYOUT


def random_images(rng, n, h=32, w=32):
    return [rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8) for _ in range(n)]


def within_binomial(hits: int, n: int, p: float, k: float = 5.0) -> bool:
    sigma = np.sqrt(n * p * (1 - p))
    return abs(hits - n * p) <= k * sigma


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (passed, detail) before asserting."""

    def record(passed: bool, detail: str = ""):
        num = request.node.get_closest_marker("criterion").args[0]
        status = "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"[{status}] criterion {num:>2}: {request.node.name} {detail}".rstrip())
        return passed

    return record


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
