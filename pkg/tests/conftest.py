import pytest

from qore.crypto.entropy import SeededDrbg

NOW = 1767225600


@pytest.fixture
def drbg():
    return SeededDrbg(bytes(range(32)))


@pytest.fixture
def now():
    return NOW
