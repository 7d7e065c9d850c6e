import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import demand, random_network
from hcnstream.network import Network
from hcnstream.oracle import oracle_optimum
from hcnstream.solver import (
    BSBlock,
    DualVars,
    PrimalVars,
    SolverConfig,
    cheapest_allocation,
    constraint_violations,
    is_feasible,
    objective,
    project_step,
    recover_feasible,
    solve_jtravqs,
    solve_vqs_subproblem,
    step_size,
    unit_knapsack,
    update_duals,
    update_eta,
    vqs_scores,
)


def one_pico(q=5.0, rate=1e6, c_abs=4e6, c_rs=2e6):
    return Network([0, 1], [demand(0, 1, c_abs, c_rs, [q], [rate])])


# ----------------------------------------------------------------- objective

def test_objective_examples():
    net = one_pico()
    p = PrimalVars.empty(net, 0.5)
    assert objective(net, p) == 0.0
    p.x_abs[0][0] = p.x_rs[0][0] = 1.0
    assert objective(net, p) == 10.0
    mnet = Network([0], [demand(0, 0, 0.0, 2e6, [5.0], [1e6])])
    p = PrimalVars.empty(mnet, 0.5)
    p.x_rs[0][0] = 1.0
    assert objective(mnet, p) == 5.0


# ------------------------------------------------------------- RA subproblem

def test_zero_prices_cost_nothing():
    za, zr, cost = cheapest_allocation([2.0, 0.5], [1.0, 4.0], 0.0, 0.0)
    assert np.all(cost == 0.0)
    assert np.all(za * [2.0, 0.5] + zr * [1.0, 4.0] >= 1.0 - 1e-12)


def test_unservable_item_infinite_cost():
    za, zr, cost = cheapest_allocation([0.3], [0.4], 1.0, 1.0)
    assert cost[0] == np.inf and za[0] == 0.0 and zr[0] == 0.0


@settings(max_examples=80, deadline=None)
@given(a=st.floats(0, 5), b=st.floats(0, 5), pa=st.floats(0, 3), pr=st.floats(0, 3))
def test_cheapest_allocation_matches_lp(a, b, pa, pr):
    za, zr, cost = cheapest_allocation([a], [b], pa, pr)
    res = linprog([pa, pr], A_ub=[[-a, -b]], b_ub=[-1.0], bounds=[(0, 1), (0, 1)], method="highs")
    if res.status != 0:
        assert cost[0] == np.inf
    else:
        assert cost[0] == pytest.approx(res.fun, abs=1e-9)
        assert a * za[0] + b * zr[0] >= 1.0 - 1e-9
        assert 0 <= za[0] <= 1 and 0 <= zr[0] <= 1


def test_cheapest_allocation_grid_oracle():
    rng = np.random.default_rng(3)
    grid = np.linspace(0.0, 1.0, 1001)
    ga, gr = np.meshgrid(grid, grid, indexing="ij")
    for _ in range(3):
        a, b = rng.uniform(0.5, 3.0, 2)
        pa, pr = rng.uniform(0, 2, 2)
        ok = a * ga + b * gr >= 1.0
        best = (pa * ga + pr * gr)[ok].min()
        _, _, cost = cheapest_allocation([a], [b], pa, pr)
        assert cost[0] <= best + 1e-12
        assert cost[0] >= best - 1e-3 * (pa + pr)


# ------------------------------------------------------------ VQS subproblem

def test_unit_knapsack_examples():
    assert unit_knapsack(np.array([-1.0, -0.5])) == (None, 0.0)
    assert unit_knapsack(np.array([3.0])) == (0, 3.0)
    assert unit_knapsack(np.array([1.0, 2.0, 2.0]))[0] == 1  # lowest index on ties
    assert unit_knapsack(np.array([5.0, 1.0]), np.array([False, True])) == (1, 1.0)


def test_vqs_bruteforce_six_reps():
    rng = np.random.default_rng(0)
    for _ in range(50):
        users = [demand(i, 1, rng.uniform(1e6, 9e6), rng.uniform(1e6, 9e6),
                        np.cumsum(rng.uniform(1, 10, 6)), np.cumsum(rng.uniform(2e5, 1e6, 6)))
                 for i in range(3)]
        block = BSBlock(1, users, qscale=50.0)
        scores = rng.normal(0, 0.2, block.n_items)
        x, value = solve_vqs_subproblem(block, scores)
        best = 0.0
        for k in range(block.n_users):
            lo, hi = block.starts[k], block.starts[k + 1]
            opts = [0.0] + [scores[i] for i in range(lo, hi) if block.admissible[i]]
            best += max(opts)
            assert x[lo:hi].sum() <= 1
        assert value == pytest.approx(best, abs=1e-12)


# --------------------------------------------------------------- dual steps

def test_project_step_examples():
    assert project_step(0.2, 0.1, 0.1) == pytest.approx(0.21)
    assert project_step(0.05, 0.1, -0.9) == 0.0
    assert project_step(-0.3, 0.1, -0.2, nonneg=False) == pytest.approx(-0.32)
    assert step_size(4, 0.5) == 0.25


def test_update_duals_fixed_point_and_signs():
    net = one_pico()
    block = BSBlock(1, net.users, 5.0)
    d = DualVars.zeros(block.n_items, block.n_users)
    # the unique item served exactly at the budget edge: zero residuals for lam1
    x = np.array([1.0])
    za = np.array([0.25])
    zr = np.array([0.0])
    new = update_duals(block, d, x, za, zr, eta=0.25, beta=0.3)
    assert new.lam1_abs == 0.0 and new.lam1_rs == 0.0
    d.lam1_abs = 0.2
    new = update_duals(block, d, x, za + 1 / 3, zr, eta=0.25, beta=0.3)
    assert new.lam1_abs == pytest.approx(0.2 + 0.3 / 3)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), beta=st.floats(1e-3, 2.0), eta=st.floats(0, 1))
def test_update_duals_nonnegative(seed, beta, eta):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n_pbs=1, n_users=4)
    block = BSBlock(1, net.users_of(1), 10.0)
    d = DualVars.zeros(block.n_items, block.n_users)
    d.lam1_abs, d.lam1_rs = rng.uniform(0, 1, 2)
    x = (rng.random(block.n_items) > 0.5).astype(float)
    new = update_duals(block, d, x, rng.random(block.n_items), rng.random(block.n_items), eta, beta)
    for arr in (new.lam1_abs, new.lam1_rs, new.lam2, new.lam3_abs, new.lam3_rs, new.lam4_abs, new.lam4_rs):
        assert np.all(np.asarray(arr) >= 0.0)


def test_update_eta_examples():
    assert update_eta(0.4, {0: (0.0, 0.0), 1: (0.3, 0.3), 2: (0.1, 0.1)}, 0.5) == 0.4
    assert update_eta(1.0, {1: (1.0, 0.0)}, 0.5) == 1.0
    # rows -0.2 (MBS: 0 - 0.2), +0.3, +0.1
    assert update_eta(0.5, {0: (9.9, 0.2), 1: (0.5, 0.2), 2: (0.3, 0.2)}, 0.1) == pytest.approx(0.52)


# ----------------------------------------------------------------- recovery

def test_recover_feasible_identity():
    net = one_pico()
    p = PrimalVars.empty(net, 0.5)
    p.x_abs[0][0] = p.x_rs[0][0] = 1.0
    p.z_abs[0][0] = 0.25
    assert is_feasible(net, p)
    assert recover_feasible(net, p) is p


def test_recover_drops_oversized_rep():
    net = Network([0, 1], [demand(0, 1, 1e6, 1e6, [5.0], [3e6])])
    p = PrimalVars.empty(net, 0.5)
    p.x_abs[0][0] = p.x_rs[0][0] = 1.0
    out = recover_feasible(net, p)
    assert out.selection() == {0: None}
    assert objective(net, out) == 0.0


def test_recover_below_oracle():
    rng = np.random.default_rng(21)
    for _ in range(5):
        net = random_network(rng, n_pbs=1, n_users=3, n_reps=2)
        p = PrimalVars.empty(net, float(rng.random()))
        for u in net.users:
            r = int(rng.integers(u.n_reps))
            p.x_rs[u.id][r] = 1.0
            if not u.on_macro:
                p.x_abs[u.id][r] = 1.0
        out = recover_feasible(net, p)
        assert not constraint_violations(net, out)
        assert objective(net, out) <= oracle_optimum(net, exact=True).value + 1e-9


# ------------------------------------------------------------------- solver

def test_single_user_instance():
    net = one_pico(q=5.0, rate=1e6, c_abs=4e6, c_rs=2e6)
    rep = solve_jtravqs(net)
    assert rep.objective == pytest.approx(10.0)
    p = rep.best_feasible
    assert 4e6 * p.z_abs[0][0] + 2e6 * p.z_rs[0][0] >= 1e6 * (1 - 1e-9)
    assert 0.0 <= rep.eta <= 1.0


def test_nothing_feasible():
    net = Network([0, 1], [demand(0, 1, 1e5, 1e5, [5.0, 7.0], [1e6, 2e6]), demand(1, 0, 0, 0, [3.0], [1e3])])
    rep = solve_jtravqs(net)
    assert rep.objective == 0.0


def test_invalid_inputs():
    with pytest.raises(ValueError):
        solve_jtravqs(one_pico(), SolverConfig(beta0=0.0))
    with pytest.raises(ValueError):
        solve_jtravqs(one_pico(), fixed_eta=1.5)
    with pytest.raises(ValueError):
        solve_jtravqs(Network([0], []))


def test_fixed_eta_zero_leaves_abs_empty():
    rng = np.random.default_rng(4)
    net = random_network(rng, n_pbs=2, n_users=6)
    rep = solve_jtravqs(net, fixed_eta=0.0)
    assert all(np.all(z == 0.0) for z in rep.best_feasible.z_abs.values())
    assert rep.eta == 0.0


def test_oracle_sandwich_small_instances():
    rng = np.random.default_rng(7)
    for _ in range(6):
        net = random_network(rng, n_pbs=2, n_users=4, n_reps=3)
        opt = oracle_optimum(net).value
        rep = solve_jtravqs(net)
        assert rep.lower_bound >= 0.95 * opt - 1e-9
        assert rep.upper_bound >= opt - 1e-6
        assert rep.lower_bound <= opt + 1e-9


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_trace_invariants(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n_pbs=2, n_users=5, n_reps=3)
    rep = solve_jtravqs(net, SolverConfig(max_iters=60))
    lbs = [t[1] for t in rep.trace]
    ubs = [t[2] for t in rep.trace]
    assert all(b >= a for a, b in zip(lbs, lbs[1:]))
    assert all(b <= a for a, b in zip(ubs, ubs[1:]))
    assert all(lb <= ub + 1e-9 for lb, ub in zip(lbs, ubs))
    assert all(0.0 <= t[3] <= 1.0 for t in rep.trace)
    assert is_feasible(net, rep.best_feasible)


def test_trace_csv(tmp_path):
    rep = solve_jtravqs(one_pico())
    path = tmp_path / "trace.csv"
    rep.write_trace(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,lb,ub,eta,gap"
    assert len(lines) == 1 + len(rep.trace)


def test_backhaul_delay_accounting():
    rep = solve_jtravqs(one_pico(), SolverConfig(backhaul_delay=True))
    assert rep.backhaul_delay_s == pytest.approx(rep.iterations * 2 * 0.06)
