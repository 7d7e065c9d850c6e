"""Comparison systems: video-unaware proportional-fair allocation and
quality selection under a frozen partition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from hcnstream.network import Network, UserDemand
from hcnstream.solver import BUDGET_TOL, SolverConfig, SolverReport, solve_jtravqs

PF_EPS = 1e-9


@dataclass
class BaselineSolution:
    z_abs: dict[int, float]
    z_rs: dict[int, float]
    eta: float
    utility: float
    requested: dict[int, int] = field(default_factory=dict)
    delivered: dict[int, int | None] = field(default_factory=dict)

    def rate(self, u: UserDemand) -> float:
        return self.z_abs[u.id] * u.c_abs + self.z_rs[u.id] * u.c_rs

    def mean_delivered_index(self) -> float:
        got = [r for r in self.delivered.values() if r is not None]
        return float(np.mean(got)) if got else float("nan")


def pf_utility(rates) -> float:
    return float(np.sum(np.log(np.asarray(rates, dtype=float) + PF_EPS)))


def _pf_macro(users: list[UserDemand], budget: float):
    # one resource: log utility splits it evenly
    n = len(users)
    share = min(1.0, budget / n) if n else 0.0
    return np.zeros(n), np.full(n, share)


def _pf_pico(users: list[UserDemand], eta: float):
    """Log-utility rate allocation of one PBS over both phases."""
    n = len(users)
    ca = np.array([u.c_abs for u in users]) / 1e6
    cr = np.array([u.c_rs for u in users]) / 1e6

    def split(v):
        return v[:n], v[n:]

    def neg(v):
        za, zr = split(v)
        return -float(np.sum(np.log(za * ca + zr * cr + PF_EPS)))

    def grad(v):
        za, zr = split(v)
        inv = 1.0 / (za * ca + zr * cr + PF_EPS)
        return -np.concatenate([ca * inv, cr * inv])

    cons = [
        {"type": "ineq", "fun": lambda v: eta - v[:n].sum(), "jac": lambda v: np.r_[-np.ones(n), np.zeros(n)]},
        {"type": "ineq", "fun": lambda v: 1.0 - eta - v[n:].sum(), "jac": lambda v: np.r_[np.zeros(n), -np.ones(n)]},
    ]
    x0 = np.r_[np.full(n, eta / n), np.full(n, (1.0 - eta) / n)]
    res = minimize(neg, x0, jac=grad, bounds=[(0.0, 1.0)] * (2 * n), constraints=cons,
                   method="SLSQP", options={"ftol": 1e-12, "maxiter": 500})
    za, zr = split(np.clip(res.x, 0.0, 1.0))
    # scale back onto the budgets; solver tolerances may overshoot slightly
    if za.sum() > eta:
        za *= eta / za.sum()
    if zr.sum() > 1.0 - eta:
        zr *= (1.0 - eta) / zr.sum()
    if neg(np.r_[za, zr]) > neg(x0):
        za, zr = split(x0)
    return za, zr


def pf_allocation(net: Network, eta: float) -> tuple[dict[int, float], dict[int, float], float]:
    """Per-BS proportional-fair split of the ABS/RS budgets at partition ``eta``."""
    z_abs, z_rs = {}, {}
    for bs in net.bs_ids:
        users = net.users_of(bs)
        if not users:
            continue
        if bs == 0:
            za, zr = _pf_macro(users, 1.0 - eta)
        else:
            za, zr = _pf_pico(users, eta)
        for u, a, r in zip(users, za, zr):
            z_abs[u.id], z_rs[u.id] = float(a), float(r)
    rates = [z_abs[u.id] * u.c_abs + z_rs[u.id] * u.c_rs for u in net.users]
    return z_abs, z_rs, pf_utility(rates)


def draw_requests(net: Network, seed: int) -> dict[int, int]:
    """Uniformly drawn requested representation per user (seeded)."""
    rng = np.random.default_rng(seed)
    return {u.id: int(rng.integers(u.n_reps)) for u in net.users}


def delivered_rep(u: UserDemand, rate: float, requested: int) -> int | None:
    """The requested representation if its rate is met, else the best one
    that fits the allocated rate (None when nothing fits)."""
    tol = 1.0 + 1e-9
    if u.rate[requested] <= rate * tol:
        return requested
    fits = np.flatnonzero(u.rate <= rate * tol)
    return int(fits[-1]) if len(fits) else None


def solve_pfra(net: Network, seed: int = 0, eta: float | None = None,
               requests: dict[int, int] | None = None) -> BaselineSolution:
    """Proportional-fair rate allocation with the partition chosen to
    maximize the same log utility (``eta`` freezes it instead).

    The master utility is concave in the partition, so a bounded scalar
    search finds its maximizer.
    """
    if eta is None:
        res = minimize_scalar(lambda e: -pf_allocation(net, e)[2], bounds=(0.0, 1.0),
                              method="bounded", options={"xatol": 1e-6})
        eta = float(res.x)
        # the endpoints are not probed by the bounded search
        for cand in (0.0, 1.0):
            if pf_allocation(net, cand)[2] > pf_allocation(net, eta)[2] + 1e-12:
                eta = cand
    elif not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta {eta} outside [0, 1]")
    z_abs, z_rs, util = pf_allocation(net, eta)
    requests = draw_requests(net, seed) if requests is None else requests
    sol = BaselineSolution(z_abs, z_rs, eta, util, dict(requests))
    for u in net.users:
        sol.delivered[u.id] = delivered_rep(u, sol.rate(u), requests[u.id])
    for bs in net.bs_ids:
        users = net.users_of(bs)
        assert sum(z_abs[u.id] for u in users) <= eta + BUDGET_TOL
        assert sum(z_rs[u.id] for u in users) <= 1.0 - eta + BUDGET_TOL
    return sol


def pfra_quality(net: Network, sol: BaselineSolution) -> float:
    """Delivered quality of a PF solution on the joint problem's scale."""
    total = 0.0
    for u in net.users:
        r = sol.delivered.get(u.id)
        if r is not None:
            total += u.weight * float(u.quality[r])
    return total


def solve_ravqs_fixed_eta(net: Network, eta_fixed: float, cfg: SolverConfig | None = None) -> SolverReport:
    """Rate allocation and quality selection with the partition frozen."""
    if not 0.0 <= eta_fixed <= 1.0 or math.isnan(eta_fixed):
        raise ValueError(f"eta {eta_fixed} outside [0, 1]")
    return solve_jtravqs(net, cfg, fixed_eta=eta_fixed)
