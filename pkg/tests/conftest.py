import numpy as np
import pytest

from risre.channel import ChannelModel, generate_channel
from risre.config import SystemConfig, default_config


def scalar_model(h1=1.0, omega=1.0) -> ChannelModel:
    """M = N_R = N_k = K = 1 with identity bases."""
    one = np.ones((1, 1), dtype=complex)
    return ChannelModel(np.array([[h1]], dtype=complex), (one,), (one,),
                        (np.array([[omega]], dtype=float),))


def small_config(K=2, N_k=2, M=3, N_R=4, pmax_dbm=20.0, **kw) -> SystemConfig:
    base = default_config(pmax_dbm)
    return base.replace(K=K, N_k=(N_k,) * K, M=M, N_R=N_R, xi=base.xi[:1] * K,
                        P_c=base.P_c[:1] * K, P_max=base.P_max[:1] * K, **kw)


def random_psd(rng, n, scale=1.0):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (X @ X.conj().T) / n


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_cfg():
    return default_config(20.0)


@pytest.fixture(scope="session")
def default_model(default_cfg):
    return generate_channel(default_cfg, 0)


@pytest.fixture
def small():
    cfg = small_config()
    return cfg, generate_channel(cfg, 3)


# one PASS/FAIL line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
