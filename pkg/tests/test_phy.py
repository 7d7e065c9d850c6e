import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcnstream.phy import (
    PhyParams,
    best_rate,
    compute_links,
    mean_sinr,
    path_loss_db,
    rate_for_mcs,
    symbol_error_prob,
)
from hcnstream.topology import ABS, MBS_ID, RS, TopologyConfig, aggregate_interference, generate_topology


def test_path_loss_triple():
    assert path_loss_db(1.0) == pytest.approx(128.1, abs=1e-12)
    assert path_loss_db(0.1) == pytest.approx(90.5, abs=1e-12)
    assert path_loss_db(10.0) == pytest.approx(165.7, abs=1e-12)


def test_symbol_error_examples():
    assert symbol_error_prob(2, 1e12) == 0.0
    assert symbol_error_prob(2, 0.0) == pytest.approx(1.0)
    # Q(sqrt(10)) by the complementary error function
    assert symbol_error_prob(2, 10.0) == pytest.approx(2 * 0.5 * math.erfc(math.sqrt(10) / math.sqrt(2)), rel=1e-12)
    assert symbol_error_prob(2, 10.0) == pytest.approx(1.565e-3, rel=1e-3)


def test_rate_examples():
    phy = PhyParams(symbol_rate=1e6, eff={m: 0.75 for m in range(1, 8)})
    assert rate_for_mcs(4, 1e12, phy) == pytest.approx(4 * 0.75 * 1e6)
    assert rate_for_mcs(1, 0.0, PhyParams(mcs_set=(1,), eff={1: 0.5})) == pytest.approx(
        0.5 * 20e6 * (1 - symbol_error_prob(1, 0.0)) ** 12000)
    assert rate_for_mcs(2, 0.0, phy) == 0.0  # Ps = 1


def test_rate_worked_value():
    # find gamma with Ps = 0.01 for m = 4, then compare against high precision
    from scipy.optimize import brentq

    g = brentq(lambda x: symbol_error_prob(4, x) - 0.01, 1e-3, 1e3, xtol=1e-14)
    phy = PhyParams(symbol_rate=1e6, eff={m: 0.75 for m in range(1, 8)})
    getcontext().prec = 50
    expect = float(Decimal(4 * 0.75 * 1e6) * Decimal(1 - symbol_error_prob(4, g)) ** 3000)
    assert rate_for_mcs(4, g, phy) == pytest.approx(expect, rel=1e-9)


def test_best_rate_ties_and_single():
    assert best_rate(0.0, PhyParams())[0] == 1
    assert best_rate(0.0, PhyParams())[1] == pytest.approx(0.0, abs=1e-300)
    assert best_rate(50.0, PhyParams(mcs_set=(5,)))[0] == 5


def test_best_rate_bruteforce_grid():
    phy = PhyParams()
    for g in np.geomspace(0.1, 1e4, 1000):
        rates = {m: rate_for_mcs(m, g, phy) for m in phy.mcs_set}
        top = max(rates.values())
        m_star = min(m for m, c in rates.items() if c == top)
        assert best_rate(g, phy) == (m_star, top)


def test_ps_monotone_grid():
    grid = np.linspace(0.0, 1e3, 1000)
    for m in range(1, 8):
        ps = symbol_error_prob(m, grid)
        assert np.all(np.diff(ps) <= 0.0)
        assert np.all((ps >= 0) & (ps <= 1))


@settings(max_examples=60, deadline=None)
@given(m=st.integers(1, 7), g1=st.floats(0, 1e5), g2=st.floats(0, 1e5))
def test_rate_monotone(m, g1, g2):
    lo, hi = sorted((g1, g2))
    phy = PhyParams()
    assert rate_for_mcs(m, lo, phy) <= rate_for_mcs(m, hi, phy)
    assert best_rate(lo, phy)[1] <= best_rate(hi, phy)[1]


def test_invalid_params():
    with pytest.raises(ValueError):
        PhyParams(packet_bits=12001)
    with pytest.raises(ValueError):
        PhyParams(noise_psd=0.0)
    with pytest.raises(ValueError):
        PhyParams(eff={1: 0.0, 2: 0.5, 3: 0.5, 4: 0.5, 5: 0.5, 6: 0.5, 7: 0.5})


def test_mean_sinr_hand_sum(thermal_phy):
    topo = generate_topology(TopologyConfig(n_pbs=2, n_users=12), seed=4)
    n = thermal_phy.noise_power
    for u in topo.users:
        s = topo.association[u.id]
        sig = topo.station(s).tx_power * topo.gain(s, u.id)
        others = [b for b in topo.stations if b.id != s]
        i_rs = sum(b.tx_power * topo.gain(b.id, u.id) for b in others)
        assert mean_sinr(topo, u.id, RS, thermal_phy) == pytest.approx(sig / (i_rs + n), rel=1e-12)
        if s == MBS_ID:
            assert mean_sinr(topo, u.id, ABS, thermal_phy) == 0.0
        else:
            i_abs = sum(b.tx_power * topo.gain(b.id, u.id) for b in others if not b.is_macro)
            assert mean_sinr(topo, u.id, ABS, thermal_phy) == pytest.approx(sig / (i_abs + n), rel=1e-12)


def test_links_abs_dominates_for_pico_users(thermal_phy):
    topo = generate_topology(TopologyConfig(n_pbs=4, n_users=40), seed=8)
    links = compute_links(topo, thermal_phy)
    for u in topo.users:
        lk = links[u.id]
        assert lk.rate_abs >= 0 and lk.rate_rs >= 0
        if topo.association[u.id] == MBS_ID:
            assert lk.rate_abs == 0.0
        elif aggregate_interference(topo, u, ABS) <= aggregate_interference(topo, u, RS):
            assert lk.rate_abs >= lk.rate_rs
