"""Slotted DASH streaming over the HCN.

Every slot each active client receives ``z * C * slot`` bits at its current
representation, completes whole segments into its playback buffer and plays
for up to one slot. The base stations re-solve allocation and quality
selection on the clients' remaining video, with the rate requirement of a
client relaxed by how far its buffer is ahead of the slowest client.
Decisions computed during slot t take effect in slot t+1, and a new
representation applies from the next segment a client starts.

The partition is not re-optimized per slot: the joint mode runs at the
partition of the static joint solution, the fixed mode at a given one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from hcnstream.network import Network, UserDemand, pf_pseudo_quality
from hcnstream.phy import PhyLink
from hcnstream.solver import (
    BSBlock,
    DualVars,
    SolverConfig,
    SolverReport,
    solve_jtravqs,
    solve_ra_subproblem,
    solve_vqs_subproblem,
    vqs_scores,
)
from hcnstream.topology import Topology
from hcnstream.video import VideoLibrary

SLOT_HEADER = ["slot", "user", "bs", "rep", "z_abs", "z_rs", "buffer_s", "stalled_s", "rebuffer_events_cum"]
DASH_MODES = ("jtravqs-dash", "ravqs-dash-fixed")


@dataclass(frozen=True)
class DashConfig:
    slot_s: float = 10.0
    playback_s: float = 1800.0
    rho_tcp: float = 0.85
    floor: bool = False
    churn: bool = False
    churn_window_s: float = 8 * 3600.0
    churn_peak: float = 0.30
    solver: SolverConfig = SolverConfig(max_iters=60, tolerance=1e-2)
    solver_static: SolverConfig = SolverConfig()

    def validate(self) -> None:
        if self.slot_s <= 0 or self.playback_s <= 0:
            raise ValueError("slot and playback durations must be positive")
        if not 0.0 < self.rho_tcp <= 1.0:
            raise ValueError("rho_tcp must lie in (0, 1]")
        if self.churn_peak < 0 or self.churn_window_s <= 0:
            raise ValueError("invalid churn profile")
        self.solver.validate()


@dataclass
class DashClientState:
    user_id: int
    video: int
    buffer: float = 0.0
    playhead: float = 0.0
    current_rep: int | None = None
    next_rep: int | None = None
    partial_segment: tuple[int, float] = (0, 0.0)  # (segment index, bits downloaded)
    rebuffer_log: list[tuple[int, float]] = field(default_factory=list)
    active: bool = True
    rebuffer_events: int = 0
    stalled_total: float = 0.0
    played_total: float = 0.0
    _stalling: bool = False

    @property
    def segment(self) -> int:
        return self.partial_segment[0]


def estimate_tcp_throughput(phy_rate: float, rho_tcp: float = 0.85, n_sharing: int = 1) -> float:
    """TCP goodput: a fixed fraction of the PHY rate, shared equally among
    ``n_sharing`` competing flows."""
    if n_sharing < 1:
        raise ValueError("n_sharing must be >= 1")
    return rho_tcp * phy_rate / n_sharing


def update_buffer(client: DashClientState, received_s: float, slot_len: float, slot: int = 0,
                  remaining_s: float = math.inf) -> tuple[float, float]:
    """End-of-slot buffer recursion; returns (played, stalled) seconds.

    ``remaining_s`` caps playback at the end of the video; a finished video
    does not stall.
    """
    if received_s < 0:
        raise ValueError("received seconds must be non-negative")
    want = min(slot_len, remaining_s)
    played = min(want, client.buffer + received_s)
    client.buffer = max(0.0, client.buffer + received_s - played)
    client.playhead += played
    client.played_total += played
    stalled = want - played
    if stalled > 0:
        client.rebuffer_log.append((slot, stalled))
        client.stalled_total += stalled
        if not client._stalling:
            client.rebuffer_events += 1
        client._stalling = True
    else:
        client._stalling = False
    return played, stalled


def delta_buffers(clients) -> dict[int, float]:
    """Buffer lead of each active client over the slowest one."""
    active = [c for c in clients if c.active]
    if not active:
        raise ValueError("no active clients")
    low = min(c.buffer for c in active)
    return {c.user_id: c.buffer - low for c in active}


def dash_demand(u: UserDemand, library: VideoLibrary, client: DashClientState, delta_b: float,
                min_rep: int = 0) -> UserDemand:
    """Per-slot demand: tail quality and tail rate from the client's current
    segment, the rate relaxed by ``max(delta_b, 1)``."""
    v, t = client.video, client.segment
    relax = max(delta_b, 1.0)
    n_reps = library.n_reps(v)
    tail = np.array([library.tail_rate(v, r, t) for r in range(n_reps)])
    if u.optimized:
        quality = library.quality_table(v, t)
        rate = tail / relax
    else:
        quality = np.array([pf_pseudo_quality(u.c_abs, u.c_rs)])
        req = u.requested_rep if u.requested_rep is not None else n_reps - 1
        rate = np.array([tail[req] / relax])
    floor = min(min_rep, len(quality) - 1) if u.optimized else 0
    return UserDemand(u.id, u.bs, u.c_abs, u.c_rs, quality, rate, u.optimized, v, u.requested_rep, floor)


def solve_dashra(block: BSBlock, duals: DualVars):
    """Rate allocation under the buffer-relaxed requirement (the block must
    be built from :func:`dash_demand` users)."""
    return solve_ra_subproblem(block, duals)


def solve_dashvqs(block: BSBlock, scores: np.ndarray):
    """Tail-quality selection; same one-per-user knapsack as the static case."""
    return solve_vqs_subproblem(block, scores)


def dash_block_step(block: BSBlock, duals: DualVars):
    """RA then VQS for one BS at the given prices: (x, z_abs, z_rs)."""
    z_abs, z_rs, cost = solve_dashra(block, duals)
    x, _ = solve_dashvqs(block, vqs_scores(block, cost))
    return x, z_abs * x, z_rs * x


def churn_factor(t_s: float, window_s: float, peak: float) -> float:
    """Linear ramp from 1 to 1+peak at mid-window and back to 1."""
    if window_s <= 0:
        return 1.0
    frac = (t_s % window_s) / window_s
    return 1.0 + peak * (1.0 - abs(2.0 * frac - 1.0))


def active_count(base: int, t_s: float, cfg: DashConfig) -> int:
    if not cfg.churn:
        return base
    return int(math.floor(base * churn_factor(t_s, cfg.churn_window_s, cfg.churn_peak) + 1e-9))


@dataclass
class DashResult:
    rows: list[list] = field(default_factory=list)
    clients: dict[int, DashClientState] = field(default_factory=dict)
    reports: list[SolverReport] = field(default_factory=list)
    optimized: dict[int, bool] = field(default_factory=dict)
    bs_of: dict[int, int] = field(default_factory=dict)

    def rebuffer_seconds(self) -> dict[int, float]:
        return {uid: c.stalled_total for uid, c in self.clients.items()}

    def write_slots(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SLOT_HEADER)
            w.writerows(self.rows)


class DashSimulator:
    """State of one DASH run; advance with :meth:`step_slot`."""

    def __init__(self, topo: Topology, links: dict[int, PhyLink], library: VideoLibrary,
                 static_net: Network, cfg: DashConfig, mode: str = "jtravqs-dash",
                 eta_fixed: float | None = None, min_reps: dict[int, int] | None = None, seed: int = 0):
        cfg.validate()
        if mode not in DASH_MODES:
            raise ValueError(f"unknown DASH mode {mode!r}")
        if mode == "ravqs-dash-fixed" and eta_fixed is None:
            raise ValueError("ravqs-dash-fixed needs eta_fixed")
        if eta_fixed is None:
            eta_fixed = solve_jtravqs(static_net, cfg.solver_static).eta
        if not 0.0 <= eta_fixed <= 1.0:
            raise ValueError(f"eta {eta_fixed} outside [0, 1]")
        self.cfg = cfg
        self.mode = mode
        self.eta_fixed = eta_fixed
        self.library = library
        self.rng = np.random.default_rng(seed)
        self.min_reps = dict(min_reps or {}) if cfg.floor else {}
        # demands at full TCP efficiency: the solver sees rho * C
        self.base: dict[int, UserDemand] = {}
        for u in static_net.users:
            link = links[u.id]
            c_abs = 0.0 if u.on_macro else estimate_tcp_throughput(link.rate_abs, cfg.rho_tcp)
            c_rs = estimate_tcp_throughput(link.rate_rs, cfg.rho_tcp)
            self.base[u.id] = UserDemand(u.id, u.bs, c_abs, c_rs, u.quality, u.rate, u.optimized,
                                         u.video_id, u.requested_rep)
        self.order = [u.id for u in static_net.users]
        self.bs_ids = list(static_net.bs_ids)
        self.n_base = len(self.order) if not cfg.churn else max(1, int(round(len(self.order) / (1 + cfg.churn_peak))))
        self.n_segments = {v: library.n_segments(v) for v in library.videos}
        self._target: dict[int, float] = {}
        self._needed: dict[int, int] = {}
        self.clients: dict[int, DashClientState] = {}
        self.plan: dict[int, tuple[int | None, float, float]] = {}
        self.result = DashResult(optimized={u.id: u.optimized for u in static_net.users},
                                 bs_of={u.id: u.bs for u in static_net.users})
        self.slot = 0
        self._sync_population(0.0)
        self.plan = self._decide()

    # -------------------------------------------------------------- helpers

    def _video_len(self, v: int) -> float:
        return sum(self.library.segment_duration(v, s) for s in range(self.n_segments[v]))

    def _playback_target(self, v: int) -> float:
        if v not in self._target:
            self._target[v] = min(self.cfg.playback_s, self._video_len(v))
        return self._target[v]

    def _segments_needed(self, v: int) -> int:
        if v not in self._needed:
            need, acc = 0, 0.0
            while need < self.n_segments[v] and acc < self._playback_target(v) - 1e-9:
                acc += self.library.segment_duration(v, need)
                need += 1
            self._needed[v] = need
        return self._needed[v]

    def _new_client(self, uid: int, fresh_video: bool) -> DashClientState:
        u = self.base[uid]
        video = u.video_id if u.video_id is not None else 0
        if fresh_video:
            video = int(self.rng.choice(sorted(self.library.videos)))
        return DashClientState(uid, video)

    def _sync_population(self, t_s: float) -> None:
        want = min(len(self.order), active_count(self.n_base, t_s, self.cfg))
        for k, uid in enumerate(self.order):
            c = self.clients.get(uid)
            if k < want:
                if c is None or not c.active:
                    fresh = c is not None or self.slot > 0
                    if c is not None:
                        # keep per-user accounting across sessions
                        nc = self._new_client(uid, fresh)
                        nc.rebuffer_log, nc.rebuffer_events = c.rebuffer_log, c.rebuffer_events
                        nc.stalled_total, nc.played_total = c.stalled_total, c.played_total
                        c = nc
                    else:
                        c = self._new_client(uid, fresh)
                    self.clients[uid] = c
            elif c is not None and c.active:
                c.active = False

    def _downloading(self, c: DashClientState) -> bool:
        return c.active and c.segment < self._segments_needed(c.video)

    def _decide(self) -> dict[int, tuple[int | None, float, float]]:
        pending = [c for c in self.clients.values() if self._downloading(c)]
        if not pending:
            return {}
        low = min(c.buffer for c in self.clients.values() if c.active)
        users = []
        for c in pending:
            u = self.base[c.user_id]
            users.append(dash_demand(u, self.library, c, c.buffer - low, self.min_reps.get(u.id, 0)))
        net = Network(self.bs_ids, users)
        rep = solve_jtravqs(net, self.cfg.solver, fixed_eta=self.eta_fixed)
        self.result.reports.append(rep)
        sel = rep.best_feasible.selection()
        plan = {}
        for u in users:
            r = sel.get(u.id)
            if r is None:
                plan[u.id] = (None, 0.0, 0.0)
            else:
                za = float(rep.best_feasible.z_abs[u.id][r])
                zr = float(rep.best_feasible.z_rs[u.id][r])
                # PF users stream their requested representation
                real = r if u.optimized else (u.requested_rep if u.requested_rep is not None else
                                              self.library.n_reps(u.video_id) - 1)
                plan[u.id] = (real, za, zr)
        return plan

    def _download(self, c: DashClientState, bits: float) -> float:
        """Spend ``bits`` on the segment queue; returns seconds completed."""
        received = 0.0
        need = self._segments_needed(c.video)
        seg, done = c.partial_segment
        while seg < need:
            if c.current_rep is None:
                c.current_rep = c.next_rep
            if c.current_rep is None:
                break
            size = self.library.segment_bits(c.video, c.current_rep, seg)
            if done + bits < size:
                done += bits
                bits = 0.0
                break
            bits -= size - done
            received += self.library.segment_duration(c.video, seg)
            seg, done = seg + 1, 0.0
            # quality switches take effect at segment boundaries
            c.current_rep = c.next_rep if c.next_rep is not None else c.current_rep
        c.partial_segment = (seg, done)
        return received

    # ---------------------------------------------------------------- slot

    def step_slot(self) -> list[list]:
        """Apply the plan decided in the previous slot, play, then decide the
        next slot. Returns this slot's CSV rows."""
        cfg = self.cfg
        t = self.slot
        rows = []
        for uid in self.order:
            c = self.clients.get(uid)
            if c is None or not c.active:
                continue
            u = self.base[uid]
            rep, za, zr = self.plan.get(uid, (None, 0.0, 0.0))
            if rep is not None:
                c.next_rep = rep
            bits = (za * u.c_abs + zr * u.c_rs) * cfg.slot_s
            received = self._download(c, bits) if self._downloading(c) else 0.0
            remaining = self._playback_target(c.video) - c.playhead
            _, stalled = update_buffer(c, received, cfg.slot_s, t, max(0.0, remaining))
            rows.append([t, uid, u.bs, -1 if c.current_rep is None else c.current_rep,
                         repr(za), repr(zr), repr(c.buffer), repr(stalled), c.rebuffer_events])
            if cfg.churn and c.playhead >= self._playback_target(c.video) - 1e-9:
                # continuous viewing: the next video starts from scratch
                c.active = False
        self.result.rows.extend(rows)
        self.slot += 1
        self._sync_population(self.slot * cfg.slot_s)
        self.plan = self._decide()
        return rows

    def finished(self) -> bool:
        return all(not c.active or c.playhead >= self._playback_target(c.video) - 1e-9
                   for c in self.clients.values())

    def run(self, horizon_s: float | None = None) -> DashResult:
        if horizon_s is None:
            horizon_s = self.cfg.churn_window_s if self.cfg.churn else self.cfg.playback_s
        n_slots = int(math.ceil(horizon_s / self.cfg.slot_s))
        for _ in range(n_slots):
            if not self.cfg.churn and self.finished():
                break
            self.step_slot()
        self.result.clients = dict(self.clients)
        return self.result


def run_dash(topo: Topology, links, library: VideoLibrary, static_net: Network, cfg: DashConfig,
             mode: str = "jtravqs-dash", eta_fixed: float | None = None,
             min_reps: dict[int, int] | None = None, seed: int = 0, horizon_s: float | None = None) -> DashResult:
    sim = DashSimulator(topo, links, library, static_net, cfg, mode, eta_fixed, min_reps, seed)
    return sim.run(horizon_s)

