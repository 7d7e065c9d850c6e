"""Joint time-domain partitioning, rate allocation and quality selection.

The partition ``eta`` is handled by primal decomposition: a central master
moves it along the difference of the ABS and RS resource prices reported by
the base stations. For a given ``eta`` every BS relaxes the rate
requirement and the allocation/selection coupling with Lagrange
multipliers, which splits its problem into a rate-allocation LP per phase
and a one-item-per-user knapsack over representations. Multipliers follow
projected subgradient steps with a diminishing step size.

Upper bounds are dual values maximized over ``eta`` (the dual function is
affine in ``eta`` once the multipliers are fixed), lower bounds come from a
greedy repair of the current representation choice.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from hcnstream.network import Network, UserDemand

log = logging.getLogger(__name__)

BUDGET_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    beta0: float = 0.5
    tolerance: float = 1e-2
    max_iters: int = 500
    eta0: float = 0.5
    backhaul_delay: bool = False
    backhaul_delay_s: float = 0.060

    def validate(self) -> None:
        if self.beta0 <= 0:
            raise ValueError("beta0 must be positive")
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 <= self.eta0 <= 1.0:
            raise ValueError("eta0 must lie in [0, 1]")


def step_size(tau: int, beta0: float) -> float:
    """Diminishing, non-summable step beta0 / sqrt(tau), tau >= 1."""
    return beta0 / math.sqrt(tau)


# ----------------------------------------------------------------- primal


@dataclass
class PrimalVars:
    """Representation choices and resource fractions, keyed by user id.

    Arrays are indexed by representation. MBS users never hold ABS entries.
    """

    x_abs: dict[int, np.ndarray]
    x_rs: dict[int, np.ndarray]
    z_abs: dict[int, np.ndarray]
    z_rs: dict[int, np.ndarray]
    eta: float

    @classmethod
    def empty(cls, net: Network, eta: float) -> "PrimalVars":
        zeros = lambda: {u.id: np.zeros(u.n_reps) for u in net.users}  # noqa: E731
        return cls(zeros(), zeros(), zeros(), zeros(), eta)

    def selection(self) -> dict[int, int | None]:
        out = {}
        for uid, x in self.x_rs.items():
            idx = np.flatnonzero(x > 0.5)
            out[uid] = int(idx[0]) if len(idx) else None
        return out

    def copy(self) -> "PrimalVars":
        cp = lambda d: {k: v.copy() for k, v in d.items()}  # noqa: E731
        return PrimalVars(cp(self.x_abs), cp(self.x_rs), cp(self.z_abs), cp(self.z_rs), self.eta)


def objective(net: Network, primal: PrimalVars) -> float:
    """Aggregate delivered quality: PBS users count once per phase, MBS
    users only in the regular subframes."""
    total = 0.0
    for u in net.users:
        if u.on_macro:
            total += float(primal.x_rs[u.id] @ u.quality)
        else:
            total += float((primal.x_abs[u.id] + primal.x_rs[u.id]) @ u.quality)
    return total


def constraint_violations(net: Network, primal: PrimalVars, tol: float = BUDGET_TOL) -> list[str]:
    """Human-readable list of violated constraints (empty when feasible)."""
    bad = []
    eta = primal.eta
    if not 0.0 <= eta <= 1.0:
        bad.append(f"eta={eta} outside [0,1]")
    users = net.users
    ids = [u.id for u in users]
    xa = np.concatenate([primal.x_abs[i] for i in ids])
    xr = np.concatenate([primal.x_rs[i] for i in ids])
    za = np.concatenate([primal.z_abs[i] for i in ids])
    zr = np.concatenate([primal.z_rs[i] for i in ids])
    owner = np.repeat(np.arange(len(users)), [u.n_reps for u in users])
    macro = np.array([users[k].on_macro for k in owner], dtype=bool)
    bs_of = np.array([users[k].bs for k in owner])
    for bs in net.bs_ids:
        m = bs_of == bs
        s_abs, s_rs = float(za[m].sum()), float(zr[m].sum())
        if bs != 0 and s_abs > eta + tol:
            bad.append(f"BS {bs}: ABS budget {s_abs} > {eta}")
        if bs == 0 and s_abs > 0:
            bad.append("MBS allocates ABS resources")
        if s_rs > 1.0 - eta + tol:
            bad.append(f"BS {bs}: RS budget {s_rs} > {1 - eta}")
    for name, arr in (("x_abs", xa), ("x_rs", xr)):
        for k in np.unique(owner[(arr != 0.0) & (arr != 1.0)]):
            bad.append(f"user {ids[k]}: {name} not binary")
    for name, arr in (("z_abs", za), ("z_rs", zr)):
        for k in np.unique(owner[(arr < 0.0) | (arr > 1.0)]):
            bad.append(f"user {ids[k]}: {name} outside [0,1]")
    for k in np.unique(owner[macro & ((xa != 0.0) | (za != 0.0))]):
        bad.append(f"MBS user {ids[k]} has ABS entries")
    for k in np.unique(owner[~macro & (xa != xr)]):
        bad.append(f"user {ids[k]}: ABS/RS selection differs")
    n = len(users)
    for k in np.flatnonzero((np.bincount(owner, xa, n) > 1) | (np.bincount(owner, xr, n) > 1)):
        bad.append(f"user {ids[k]}: more than one representation")
    for k in np.unique(owner[(za > xa) | (zr > xr)]):
        bad.append(f"user {ids[k]}: resources on an unselected representation")
    c_abs = np.array([users[k].c_abs for k in owner])
    c_rs = np.array([users[k].c_rs for k in owner])
    rate = np.concatenate([u.rate for u in users])
    need = np.where(macro, xr, xa) * rate
    delivered = za * c_abs + zr * c_rs
    for k in np.unique(owner[need > delivered * (1.0 + tol) + tol]):
        bad.append(f"user {ids[k]}: rate requirement unmet")
    return bad


def _budgets_ok(net: Network, primal: PrimalVars, tol: float = BUDGET_TOL) -> bool:
    for bs in net.bs_ids:
        users = net.users_of(bs)
        if sum(float(primal.z_abs[u.id].sum()) for u in users) > (primal.eta if bs else 0.0) + tol:
            return False
        if sum(float(primal.z_rs[u.id].sum()) for u in users) > 1.0 - primal.eta + tol:
            return False
    return True


def is_feasible(net: Network, primal: PrimalVars, tol: float = BUDGET_TOL) -> bool:
    return not constraint_violations(net, primal, tol)


# ------------------------------------------------------------ per-BS data


class BSBlock:
    """Flattened (user, representation) items of one base station.

    Rates are normalized per item: ``a = C_abs / R`` and ``b = C_rs / R`` are
    the fractions of the requirement delivered by a full phase.
    """

    def __init__(self, bs: int, users: list[UserDemand], qscale: float):
        self.bs = bs
        self.macro = bs == 0
        self.users = users
        self.item_user = np.array([k for k, u in enumerate(users) for _ in range(u.n_reps)], dtype=int)
        self.item_rep = np.array([r for u in users for r in range(u.n_reps)], dtype=int)
        self.n_items = len(self.item_user)
        self.n_users = len(users)
        q = np.concatenate([u.quality for u in users]) if users else np.zeros(0)
        w = np.array([u.weight for u in users for _ in range(u.n_reps)], dtype=float)
        self.value = w * q / qscale
        rate = np.concatenate([u.rate for u in users]) if users else np.zeros(0)
        c_abs = np.array([0.0 if self.macro else users[k].c_abs for k in self.item_user])
        c_rs = np.array([users[k].c_rs for k in self.item_user])
        safe = np.where(rate > 0, rate, 1.0)
        self.a = np.where(rate > 0, c_abs / safe, np.where(c_abs > 0, np.inf, 0.0))
        self.b = np.where(rate > 0, c_rs / safe, np.where(c_rs > 0, np.inf, 0.0))
        floor = np.array([users[k].min_rep for k in self.item_user], dtype=int)
        # representations that no allocation can carry, or below a quality floor
        self.admissible = (np.maximum(self.a, self.b) >= 1.0 - 1e-12) & (self.item_rep >= floor)
        self.starts = np.searchsorted(self.item_user, np.arange(self.n_users + 1))
        if self.n_users:
            self.starts[-1] = self.n_items


@dataclass
class DualVars:
    """Multipliers of one BS.

    ``lam1_*`` price the ABS/RS budgets and are the only ones the
    subproblems leave to the prices. The others belong to constraints the
    subproblems enforce exactly (rate requirement ``lam2``, allocation
    below selection ``lam3_*``, one representation ``lam4_*``, ABS/RS
    selection equality ``lam5``); their residuals are never positive, so
    they stay at their zero start.
    """

    lam1_abs: float
    lam1_rs: float
    lam2: np.ndarray
    lam3_abs: np.ndarray
    lam3_rs: np.ndarray
    lam4_abs: np.ndarray
    lam4_rs: np.ndarray
    lam5: np.ndarray

    @classmethod
    def zeros(cls, n_items: int, n_users: int) -> "DualVars":
        return cls(0.0, 0.0, np.zeros(n_items), np.zeros(n_items), np.zeros(n_items),
                   np.zeros(n_users), np.zeros(n_users), np.zeros(n_items))

    def copy(self) -> "DualVars":
        return DualVars(self.lam1_abs, self.lam1_rs, self.lam2.copy(), self.lam3_abs.copy(),
                        self.lam3_rs.copy(), self.lam4_abs.copy(), self.lam4_rs.copy(), self.lam5.copy())


# -------------------------------------------------------------- subproblems


def cheapest_allocation(a, b, p_abs: float, p_rs: float):
    """Per-item rate-allocation LP.

    min p_abs*zA + p_rs*zR  s.t.  a*zA + b*zR >= 1,  0 <= zA, zR <= 1

    solved by filling the phase with the lower price per delivered unit
    first. Equal unit prices fall back to the phase delivering more, so
    resources are not wasted when prices are zero. Returns ``(zA, zR, cost)``
    arrays; infeasible items get ``cost = inf`` and zero allocation.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        unit_a = np.where(a > 0, p_abs / a, np.inf)
        unit_b = np.where(b > 0, p_rs / b, np.inf)
        abs_first = (unit_a < unit_b) | ((unit_a == unit_b) & (a >= b))
        first = np.where(abs_first, a, b)
        second = np.where(abs_first, b, a)
        z1 = np.where(first > 0, np.minimum(1.0, 1.0 / np.where(first > 0, first, 1.0)), 0.0)
        rem = 1.0 - first * z1
        rem = np.where(rem > 1e-12, rem, 0.0)
        z2 = np.where(rem > 0, np.where(second > 0, rem / np.where(second > 0, second, 1.0), np.inf), 0.0)
    ok = z2 <= 1.0 + 1e-12
    z2 = np.minimum(z2, 1.0)
    z_abs = np.where(ok, np.where(abs_first, z1, z2), 0.0)
    z_rs = np.where(ok, np.where(abs_first, z2, z1), 0.0)
    cost = np.where(ok, p_abs * z_abs + p_rs * z_rs, np.inf)
    return z_abs, z_rs, cost


def solve_ra_subproblem(block: BSBlock, duals: DualVars):
    """Rate allocation of one BS at the current budget prices.

    Returns per-item ``(z_abs, z_rs, cost)``: the cheapest resource fractions
    that carry each representation and their priced cost.
    """
    p_abs = 0.0 if block.macro else duals.lam1_abs
    a = np.zeros(block.n_items) if block.macro else block.a
    return cheapest_allocation(a, block.b, p_abs, duals.lam1_rs)


def unit_knapsack(scores: np.ndarray, allowed: np.ndarray | None = None) -> tuple[int | None, float]:
    """Pick at most one item of maximal score (capacity-1 knapsack DP).

    With unit weights and unit capacity the DP table has a single live cell,
    ``best = max(best, 0 + score)``, so one pass is exact. The lowest index
    wins ties and picking nothing wins against non-positive scores.
    """
    best, arg = 0.0, None
    for k, s in enumerate(scores):
        if allowed is not None and not allowed[k]:
            continue
        if s > best:
            best, arg = float(s), k
    return arg, best


def vqs_scores(block: BSBlock, cost: np.ndarray) -> np.ndarray:
    """Quality of each item net of the priced resources it needs."""
    return block.value - cost


def solve_vqs_subproblem(block: BSBlock, scores: np.ndarray):
    """One representation (or none) per user; returns (x over items, value)."""
    x = np.zeros(block.n_items)
    value = 0.0
    for k in range(block.n_users):
        lo, hi = block.starts[k], block.starts[k + 1]
        pick, v = unit_knapsack(scores[lo:hi], block.admissible[lo:hi])
        if pick is not None:
            x[lo + pick] = 1.0
            value += v
    return x, value


def project_step(lam, beta: float, residual, nonneg: bool = True):
    """One projected subgradient step ``[lam + beta * residual]^+``."""
    out = np.asarray(lam, dtype=float) + beta * np.asarray(residual, dtype=float)
    if nonneg:
        out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def update_duals(block: BSBlock, duals: DualVars, x: np.ndarray, z_abs: np.ndarray,
                 z_rs: np.ndarray, eta: float, beta: float) -> DualVars:
    """Move every multiplier along its constraint residual (``lhs - rhs`` of
    the ``<=`` form at the current iterate), then project inequality
    multipliers onto the non-negative orthant."""
    u = block.item_user
    per_user = np.bincount(u, weights=x, minlength=block.n_users)
    new = duals.copy()
    new.lam1_rs = project_step(duals.lam1_rs, beta, float(z_rs.sum()) - (1.0 - eta))
    new.lam2 = project_step(duals.lam2, beta, x - block.a * z_abs - block.b * z_rs)
    new.lam3_rs = project_step(duals.lam3_rs, beta, z_rs - x)
    new.lam4_rs = project_step(duals.lam4_rs, beta, per_user - 1.0)
    if not block.macro:
        new.lam1_abs = project_step(duals.lam1_abs, beta, float(z_abs.sum()) - eta)
        new.lam3_abs = project_step(duals.lam3_abs, beta, z_abs - x)
        new.lam4_abs = project_step(duals.lam4_abs, beta, per_user - 1.0)
        # ABS and RS selections coincide by construction of the VQS step
        new.lam5 = project_step(duals.lam5, beta, np.zeros(block.n_items), nonneg=False)
    return new


def update_eta(eta: float, lam1_pairs: dict[int, tuple[float, float]], beta: float) -> float:
    """Master step on the partition.

    Each BS contributes the row ``lam1_abs - lam1_rs`` (the MBS reports a
    zero ABS price); rows are summed into one scalar step and the result is
    clamped to [0, 1].
    """
    rows = []
    for bs, (p_abs, p_rs) in sorted(lam1_pairs.items()):
        rows.append((0.0 if bs == 0 else p_abs) - p_rs)
    return float(min(1.0, max(0.0, eta + beta * sum(rows))))


# --------------------------------------------------------------- recovery


def _min_rs_use(items: list[tuple[float, float, float]], eta: float):
    """Cheapest RS usage serving ``(rate, c_abs, c_rs)`` items within an ABS
    budget ``eta``. Returns (z_abs, z_rs) lists or None if impossible."""
    n = len(items)
    za = [0.0] * n
    lb, ub = [0.0] * n, [0.0] * n
    for k, (r, ca, cr) in enumerate(items):
        if r <= 0:
            continue
        if ca <= 0:
            if cr <= 0 or r > cr * (1 + 1e-12):
                return None
            continue
        ub[k] = min(1.0, r / ca)
        lb[k] = 0.0 if cr >= r else (r - cr) / ca
        if lb[k] > ub[k] + 1e-12:
            return None
    left = eta - sum(lb)
    if left < -1e-12:
        return None
    za = lb[:]
    order = sorted(range(n), key=lambda k: (-(items[k][1] / items[k][2]) if items[k][2] > 0 else -math.inf, k))
    for k in order:
        if left <= 0:
            break
        extra = min(ub[k] - za[k], left)
        if extra > 0:
            za[k] += extra
            left -= extra
    zr = []
    for k, (r, ca, cr) in enumerate(items):
        rem = max(0.0, r - za[k] * ca)
        if rem <= 1e-12 * r:
            zr.append(0.0)
        elif cr <= 0:
            return None
        else:
            zr.append(min(1.0, rem / cr))
    return za, zr


def bs_allocation(users: list[UserDemand], reps: dict[int, int], eta: float, macro: bool):
    """Resource fractions serving ``reps`` exactly at one BS, or None."""
    chosen = [(u, reps[u.id]) for u in users if reps.get(u.id) is not None]
    if macro:
        zr = []
        for u, r in chosen:
            if u.c_rs <= 0 or u.rate[r] > u.c_rs:
                return None
            zr.append(float(u.rate[r]) / u.c_rs)
        if sum(zr) > 1.0 - eta + BUDGET_TOL:
            return None
        return {u.id: (0.0, z) for (u, _), z in zip(chosen, zr)}
    res = _min_rs_use([(float(u.rate[r]), u.c_abs, u.c_rs) for u, r in chosen], eta)
    if res is None:
        return None
    za, zr = res
    if sum(za) > eta + BUDGET_TOL or sum(zr) > 1.0 - eta + BUDGET_TOL:
        return None
    return {u.id: (a, b) for (u, _), a, b in zip(chosen, za, zr)}


def _assemble(net: Network, reps: dict[int, int | None], allocs: dict[int, tuple[float, float]],
              eta: float) -> PrimalVars:
    p = PrimalVars.empty(net, eta)
    for u in net.users:
        r = reps.get(u.id)
        if r is None:
            continue
        za, zr = allocs[u.id]
        p.x_rs[u.id][r] = 1.0
        p.z_rs[u.id][r] = zr
        if not u.on_macro:
            p.x_abs[u.id][r] = 1.0
            p.z_abs[u.id][r] = za
    return p


def _resource_cost(u: UserDemand, r: int) -> float:
    best = max(u.c_abs, u.c_rs)
    return math.inf if best <= 0 else float(u.rate[r]) / best


def recover_feasible(net: Network, primal: PrimalVars, improve: bool = True) -> PrimalVars:
    """Turn a relaxed iterate into a solution satisfying every constraint.

    A feasible input is returned unchanged. Otherwise, per BS, users are
    visited by decreasing quality per unit of resource of their current
    choice; each keeps the highest representation (at or below its choice)
    that still fits next to the ones already placed. With ``improve`` a
    second pass upgrades users while the budgets allow.
    """
    if _budgets_ok(net, primal) and is_feasible(net, primal):
        return primal
    eta = min(1.0, max(0.0, primal.eta))
    current = primal.selection()
    reps: dict[int, int | None] = {}
    allocs: dict[int, tuple[float, float]] = {}
    for bs in net.bs_ids:
        users = net.users_of(bs)
        macro = bs == 0
        placed: dict[int, int] = {}

        def density(u: UserDemand) -> float:
            r = current.get(u.id)
            if r is None:
                return -math.inf
            cost = _resource_cost(u, r)
            return u.quality[r] / cost if cost > 0 else math.inf

        ordered = sorted(users, key=lambda u: (-density(u), u.id))
        for u in ordered:
            r0 = current.get(u.id)
            if r0 is None:
                continue
            for r in range(r0, -1, -1):
                if bs_allocation(users, {**placed, u.id: r}, eta, macro) is not None:
                    placed[u.id] = r
                    break
        if improve:
            changed = True
            while changed:
                changed = False
                best_gain, best_move = 0.0, None
                for u in users:
                    cur = placed.get(u.id)
                    base = u.quality[cur] if cur is not None else 0.0
                    start = -1 if cur is None else cur
                    for r in range(u.n_reps - 1, start, -1):
                        gain = u.quality[r] - base
                        if gain <= best_gain:
                            continue
                        if bs_allocation(users, {**placed, u.id: r}, eta, macro) is not None:
                            best_gain, best_move = gain, (u.id, r)
                            break
                if best_move is not None:
                    placed[best_move[0]] = best_move[1]
                    changed = True
        alloc = bs_allocation(users, placed, eta, macro) or {}
        reps.update(placed)
        allocs.update(alloc)
    out = _assemble(net, reps, allocs, eta)
    assert is_feasible(net, out), constraint_violations(net, out)
    return out


def eta_interval(net: Network, reps: dict[int, int | None], eta: float, iters: int = 50) -> tuple[float, float]:
    """Range of partitions around a feasible ``eta`` that still carry ``reps``.

    Feasibility of a fixed selection is convex in eta, so each end is found
    by bisection.
    """

    def ok(e: float) -> bool:
        return all(bs_allocation(net.users_of(bs), reps, e, bs == 0) is not None for bs in net.bs_ids)

    if not ok(eta):
        return eta, eta
    ends = []
    for target in (0.0, 1.0):
        if ok(target):
            ends.append(target)
            continue
        good, bad = eta, target
        for _ in range(iters):
            mid = 0.5 * (good + bad)
            good, bad = (mid, bad) if ok(mid) else (good, mid)
        ends.append(good)
    return ends[0], ends[1]


def center_partition(net: Network, primal: PrimalVars) -> PrimalVars:
    """Same selection, re-allocated at the middle of its feasible eta range."""
    reps = primal.selection()
    lo, hi = eta_interval(net, reps, primal.eta)
    mid = 0.5 * (lo + hi)
    allocs = {}
    for bs in net.bs_ids:
        alloc = bs_allocation(net.users_of(bs), reps, mid, bs == 0)
        if alloc is None:
            return primal
        allocs.update(alloc)
    out = _assemble(net, reps, allocs, mid)
    return out if is_feasible(net, out) else primal


# ------------------------------------------------------------------ driver


@dataclass
class SolverReport:
    best_feasible: PrimalVars
    objective: float
    upper_bound: float
    lower_bound: float
    gap: float
    iterations: int
    converged: bool
    eta: float
    trace: list[tuple[int, float, float, float, float]] = field(default_factory=list)
    backhaul_delay_s: float = 0.0
    eta_trace: list[float] = field(default_factory=list)

    def iterations_to_gap(self, target: float) -> int | None:
        for it, _, _, _, gap in self.trace:
            if gap <= target:
                return it
        return None

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "lb", "ub", "eta", "gap"])
            for row in self.trace:
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def relative_gap(ub: float, lb: float) -> float:
    if ub <= 0.0:
        return 0.0 if lb >= ub - 1e-12 else math.inf
    return max(0.0, (ub - lb) / ub)


def solve_jtravqs(net: Network, cfg: SolverConfig | None = None, fixed_eta: float | None = None) -> SolverReport:
    """Primal-dual iterations; ``fixed_eta`` freezes the partition."""
    cfg = cfg or SolverConfig()
    cfg.validate()
    if not net.users:
        raise ValueError("network has no users")
    if fixed_eta is not None and not 0.0 <= fixed_eta <= 1.0:
        raise ValueError(f"fixed eta {fixed_eta} outside [0, 1]")
    qscale = net.max_quality if net.max_quality > 0 else 1.0
    blocks = {bs: BSBlock(bs, net.users_of(bs), qscale) for bs in net.bs_ids}
    duals = {bs: DualVars.zeros(b.n_items, b.n_users) for bs, b in blocks.items()}
    eta = cfg.eta0 if fixed_eta is None else fixed_eta

    best = recover_feasible(net, PrimalVars.empty(net, eta))
    best_lb = objective(net, best)
    best_ub = math.inf
    trace, eta_trace = [], []
    memo: dict[tuple, PrimalVars] = {}
    converged = False
    tau = 0
    for tau in range(1, cfg.max_iters + 1):
        beta = step_size(tau, cfg.beta0)
        selected = 0.0
        slope = 0.0  # d(dual)/d(eta)
        rs_mass = 0.0
        iterate = PrimalVars.empty(net, eta)
        for bs, block in blocks.items():
            d = duals[bs]
            z_abs, z_rs, cost = solve_ra_subproblem(block, d)
            x, v_vqs = solve_vqs_subproblem(block, vqs_scores(block, cost))
            z_abs, z_rs = z_abs * x, z_rs * x
            selected += v_vqs
            rs_mass += d.lam1_rs
            slope += (0.0 if block.macro else d.lam1_abs) - d.lam1_rs
            for k in np.flatnonzero(x):
                uid = block.users[block.item_user[k]].id
                r = block.item_rep[k]
                iterate.x_rs[uid][r] = 1.0
                iterate.z_rs[uid][r] = z_rs[k]
                if not block.macro:
                    iterate.x_abs[uid][r] = 1.0
                    iterate.z_abs[uid][r] = z_abs[k]
            duals[bs] = update_duals(block, d, x, z_abs, z_rs, eta, beta)

        # the dual function is affine in eta for fixed prices
        if fixed_eta is None:
            ub = selected + rs_mass + max(0.0, slope)
        else:
            ub = selected + rs_mass + fixed_eta * slope
        best_ub = min(best_ub, ub * qscale)

        if fixed_eta is None:
            cand = recover_feasible(net, iterate)
        else:
            # with a frozen partition the repair depends on the selection only
            key = tuple(sorted(iterate.selection().items()))
            cand = memo.get(key)
            if cand is None:
                cand = memo[key] = recover_feasible(net, iterate)
        val = objective(net, cand)
        if val > best_lb + 1e-12:
            best, best_lb = cand, val
        gap = relative_gap(best_ub, best_lb)
        trace.append((tau, best_lb, best_ub, eta, gap))
        eta_trace.append(eta)
        if gap <= cfg.tolerance:
            converged = True
            break
        if fixed_eta is None:
            prices = {bs: (d.lam1_abs, d.lam1_rs) for bs, d in duals.items()}
            eta = update_eta(eta, prices, beta)

    if fixed_eta is None:
        best = center_partition(net, best)
    delay = tau * 2 * cfg.backhaul_delay_s if cfg.backhaul_delay else 0.0
    if not converged:
        log.info("no convergence after %d iterations (gap %.4f)", tau, trace[-1][4])
    return SolverReport(best, best_lb, best_ub, best_lb, trace[-1][4], tau, converged,
                        best.eta, trace, delay, eta_trace)
