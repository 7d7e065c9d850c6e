import numpy as np
import pytest

from hcnstream.network import Network, UserDemand
from hcnstream.phy import PhyParams

THERMAL = 10 ** ((-174.0 + 9.0) / 10.0) / 1000.0


@pytest.fixture
def thermal_phy():
    return PhyParams(noise_psd=THERMAL)


def demand(uid, bs, c_abs, c_rs, quality, rate, **kw):
    return UserDemand(uid, bs, float(c_abs), float(c_rs), np.asarray(quality, float), np.asarray(rate, float), **kw)


def random_network(rng, n_pbs=2, n_users=4, n_reps=3, max_users_per_bs=None):
    """Small synthetic instance with random rates and increasing qualities."""
    users = []
    for i in range(n_users):
        bs = int(rng.integers(0, n_pbs + 1))
        c_rs = float(rng.uniform(0.5e6, 20e6)) * (rng.random() > 0.1)
        c_abs = 0.0 if bs == 0 else float(rng.uniform(0.5e6, 40e6)) * (rng.random() > 0.1)
        q = np.cumsum(rng.uniform(5.0, 40.0, n_reps))
        rate = np.cumsum(rng.uniform(0.3e6, 3e6, n_reps))
        users.append(demand(i, bs, c_abs, c_rs, q, rate))
    return Network(list(range(n_pbs + 1)), users)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
