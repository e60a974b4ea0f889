import numpy as np
import pytest
import torch

# The per-pair tensors are small enough that intra-op threading only adds
# overhead; one thread is both fastest and bitwise reproducible.
torch.set_num_threads(1)

# Acceptance criteria register their pass/fail lines here so they reach the
# terminal even when pytest captures per-test stdout.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def random_cube(rng, bands, rows, cols, lo=0.1, hi=0.9):
    from hsifuse.cube import HsiCube

    data = rng.uniform(lo, hi, size=(bands, rows, cols)).astype(np.float32)
    return HsiCube(data=data)


@pytest.fixture
def make_cube(rng):
    def _make(bands, rows, cols, lo=0.1, hi=0.9):
        return random_cube(rng, bands, rows, cols, lo, hi)

    return _make
