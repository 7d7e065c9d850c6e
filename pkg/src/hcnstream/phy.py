"""Closed-form PHY: path loss, mean SINR, QAM symbol errors and MCS selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

DEFAULT_EFF = {1: 0.50, 2: 0.50, 3: 0.60, 4: 0.65, 5: 0.70, 6: 0.75, 7: 0.80}


def path_loss_db(d_km):
    """Distance path loss 128.1 + 37.6 log10(d) in dB, d in km."""
    return 128.1 + 37.6 * np.log10(d_km)


def gaussian_tail(x):
    """Q(x) = P[N(0,1) > x]."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


@dataclass(frozen=True)
class PhyParams:
    bandwidth: float = 20e6  # Hz
    noise_psd: float = 1e-6  # W/Hz
    symbol_rate: float | None = None  # symbols/s, defaults to the bandwidth
    mcs_set: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7)
    eff: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_EFF))
    packet_bits: int = 12000

    def __post_init__(self) -> None:
        if self.noise_psd <= 0 or self.bandwidth <= 0:
            raise ValueError("noise_psd and bandwidth must be positive")
        if self.packet_bits <= 0 or self.packet_bits % 8:
            raise ValueError("packet_bits must be a positive multiple of 8")
        if not self.mcs_set:
            raise ValueError("mcs_set must not be empty")
        for m in self.mcs_set:
            e = self.eff.get(m)
            if e is None or not 0.0 < e <= 1.0:
                raise ValueError(f"eff[{m}] must be in (0, 1]")

    @property
    def noise_power(self) -> float:
        return self.noise_psd * self.bandwidth

    @property
    def symbols_per_s(self) -> float:
        return self.bandwidth if self.symbol_rate is None else self.symbol_rate


def symbol_error_prob(m: int, gamma):
    """Approximate 2^m-QAM symbol error probability at mean SINR ``gamma``.

    Ps = 4 (1 - 2^(-m/2)) Q(sqrt(3 gamma / (2^m - 1))), clipped to [0, 1].
    """
    gamma = np.maximum(np.asarray(gamma, dtype=float), 0.0)
    ps = 4.0 * (1.0 - 2.0 ** (-m / 2.0)) * gaussian_tail(np.sqrt(3.0 * gamma / (2.0**m - 1.0)))
    ps = np.clip(ps, 0.0, 1.0)
    return float(ps) if ps.ndim == 0 else ps


def rate_for_mcs(m: int, gamma, phy: PhyParams):
    """Goodput m * eff * S * (1 - Ps)^(L/m) in bits/s."""
    ps = np.asarray(symbol_error_prob(m, gamma), dtype=float)
    with np.errstate(divide="ignore"):
        success = np.where(ps >= 1.0, 0.0, np.exp((phy.packet_bits / m) * np.log1p(-np.minimum(ps, 1.0))))
    rate = m * phy.eff[m] * phy.symbols_per_s * success
    return float(rate) if rate.ndim == 0 else rate


def best_rate(gamma: float, phy: PhyParams) -> tuple[int, float]:
    """Highest goodput over the MCS set; ties go to the smallest m."""
    best_m, best_c = None, -1.0
    for m in sorted(phy.mcs_set):
        c = rate_for_mcs(m, gamma, phy)
        if c > best_c:
            best_m, best_c = m, c
    return best_m, best_c


@dataclass(frozen=True)
class PhyLink:
    mean_sinr_abs: float
    mean_sinr_rs: float
    rate_abs: float
    rate_rs: float
    mcs_abs: int
    mcs_rs: int


def mean_sinr(topo, user_id: int, phase: str, phy: PhyParams) -> float:
    """Mean SINR of the serving link in ``phase``; zero for MBS users in ABS."""
    from hcnstream.topology import ABS, MBS_ID, aggregate_interference

    serving = topo.association[user_id]
    if serving == MBS_ID and phase == ABS:
        return 0.0
    signal = topo.station(serving).tx_power * topo.gain(serving, user_id)
    return signal / (aggregate_interference(topo, user_id, phase) + phy.noise_power)


def link_for_user(topo, user_id: int, phy: PhyParams) -> PhyLink:
    from hcnstream.topology import ABS, MBS_ID, RS

    g_abs = mean_sinr(topo, user_id, ABS, phy)
    g_rs = mean_sinr(topo, user_id, RS, phy)
    m_rs, c_rs = best_rate(g_rs, phy)
    if topo.association[user_id] == MBS_ID:
        m_abs, c_abs = min(phy.mcs_set), 0.0
    else:
        m_abs, c_abs = best_rate(g_abs, phy)
    return PhyLink(g_abs, g_rs, c_abs, c_rs, m_abs, m_rs)


def compute_links(topo, phy: PhyParams) -> dict[int, PhyLink]:
    return {u.id: link_for_user(topo, u.id, phy) for u in topo.users}
