"""Brute-force reference optimum for tiny instances.

Every representation assignment of every BS is enumerated; for each one two
LPs give the interval of partitions eta under which some rate allocation
serves it. The optimum is then read off an eta grid. The LPs go through
scipy's HiGHS backend so this check shares no code with the solver.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from hcnstream.network import Network, UserDemand


@dataclass
class OracleResult:
    value: float
    eta: float
    selection: dict[int, int | None]
    per_eta: np.ndarray  # optimum at each grid point
    grid: np.ndarray


def feasible_eta_interval(users: list[UserDemand], reps: list[int], macro: bool) -> tuple[float, float] | None:
    """Range of eta for which the chosen representations fit one BS, or None."""
    chosen = [(u, r) for u, r in zip(users, reps) if r is not None]
    if not chosen:
        return (0.0, 1.0)
    n = len(chosen)
    # variables: eta, zA_1..zA_n, zR_1..zR_n
    nv = 1 + 2 * n
    a_ub, b_ub = [], []
    row = np.zeros(nv)
    row[0] = -1.0
    row[1:1 + n] = 1.0
    a_ub.append(row)  # sum zA - eta <= 0
    b_ub.append(0.0)
    row = np.zeros(nv)
    row[0] = 1.0
    row[1 + n:] = 1.0
    a_ub.append(row)  # sum zR + eta <= 1
    b_ub.append(1.0)
    for k, (u, r) in enumerate(chosen):
        row = np.zeros(nv)
        row[1 + k] = -u.c_abs
        row[1 + n + k] = -u.c_rs
        a_ub.append(row)  # rate requirement
        b_ub.append(-float(u.rate[r]))
    bounds = [(0.0, 1.0)] + [(0.0, 0.0 if macro else 1.0)] * n + [(0.0, 1.0)] * n
    ends = []
    for sign in (1.0, -1.0):
        c = np.zeros(nv)
        c[0] = sign
        res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub), bounds=bounds, method="highs")
        if res.status != 0:
            return None
        ends.append(float(res.x[0]))
    return ends[0], ends[1]


def _bs_table(users: list[UserDemand], macro: bool):
    options = [[None] + list(range(u.n_reps)) for u in users]
    table = []
    for reps in itertools.product(*options):
        value = sum(u.weight * float(u.quality[r]) for u, r in zip(users, reps) if r is not None)
        iv = feasible_eta_interval(users, list(reps), macro)
        if iv is not None:
            table.append((value, iv, reps))
    return table


def oracle_optimum(net: Network, grid_points: int = 101, exact: bool = False) -> OracleResult:
    """Exhaustive optimum over an eta grid (``exact`` also scans the interval
    endpoints, giving the continuous optimum)."""
    grid = np.linspace(0.0, 1.0, grid_points)
    tables = {}
    for bs in net.bs_ids:
        users = net.users_of(bs)
        tables[bs] = (users, _bs_table(users, macro=(bs == 0)))
    if exact:
        pts = set(grid.tolist())
        for _, tab in tables.values():
            for _, (lo, hi), _ in tab:
                pts.update((lo, hi))
        etas = np.array(sorted(pts))
    else:
        etas = grid
    tol = 1e-9
    per_eta = np.zeros(len(etas))
    best = (-1.0, 0.0, {})
    for k, eta in enumerate(etas):
        total, sel = 0.0, {}
        for bs, (users, tab) in tables.items():
            bv, brep = 0.0, [None] * len(users)
            for value, (lo, hi), reps in tab:
                if lo - tol <= eta <= hi + tol and value > bv:
                    bv, brep = value, reps
            total += bv
            sel.update({u.id: r for u, r in zip(users, brep)})
        per_eta[k] = total
        if total > best[0] + 1e-12:
            best = (total, float(eta), sel)
    return OracleResult(best[0], best[1], best[2], per_eta, etas)
