import numpy as np
import pytest

from lfdfe.channel import ChannelMatrix, SystemConfig
from lfdfe.codebook import build_grassmann_codebook


def make_channel(h, p_total=1.0, sigma2_n=1.0, k=None):
    h = np.asarray(h, dtype=complex)
    nr, nt = h.shape
    cfg = SystemConfig(nt, nr, min(nt, nr) if k is None else k, p_total=p_total, sigma2_n=sigma2_n)
    return ChannelMatrix(h, cfg)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def haar_unitary(rng, n):
    q, r = np.linalg.qr(crandn(rng, n, n))
    d = np.diag(r)
    return q * (d / np.abs(d))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def grassmann_6x3_64():
    """6-bit codebook for nt=6, k=3 shared by the BER campaigns."""
    return build_grassmann_codebook(6, 3, 64, metric="proj2", budget=10_000, seed=1)


@pytest.fixture(scope="session")
def grassmann_5x4_64():
    return build_grassmann_codebook(5, 4, 64, metric="proj2", budget=10_000, seed=1)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
