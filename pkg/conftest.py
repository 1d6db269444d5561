import numpy as np
import pytest

from bitstream import BitSequence


def random_bits(n: int, seed: int) -> BitSequence:
    """Bits from numpy's PCG64, the reference generator for the battery."""
    rng = np.random.default_rng(seed)
    return BitSequence.from_bits(rng.integers(0, 2, size=n, dtype=np.uint8))


@pytest.fixture
def make_bits():
    return random_bits


@pytest.fixture(scope="session")
def million_bits() -> BitSequence:
    return random_bits(1_000_000, 20240601)
