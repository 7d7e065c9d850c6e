"""Seeded batch experiments: configuration, per-topology runs and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from hcnstream.baselines import draw_requests, pfra_quality, solve_pfra, solve_ravqs_fixed_eta
from hcnstream.dash import SLOT_HEADER, DashConfig, run_dash
from hcnstream.metrics import compute_metrics
from hcnstream.network import Network, build_network
from hcnstream.oracle import oracle_optimum
from hcnstream.phy import PhyParams, compute_links
from hcnstream.solver import SolverConfig, SolverReport, solve_jtravqs
from hcnstream.topology import MBS_ID, TopologyConfig, generate_topology
from hcnstream.video import SyntheticConfig, load_traces, synthetic_library

log = logging.getLogger(__name__)

MODES = ("jtravqs", "pfra", "ravqs-fixed", "jtravqs-dash", "ravqs-dash-fixed")
# thermal noise (-174 dBm/Hz) plus a 9 dB receiver noise figure, in W/Hz
THERMAL_NOISE_PSD = 10 ** ((-174.0 + 9.0) / 10.0) / 1000.0
ORACLE_LIMIT = 200_000

RAW_FIELDS = ["topology", "seed", "mode", "eta", "user", "bs", "tier", "optimized", "rep", "quality",
              "z_abs", "z_rs", "objective", "converged", "oracle"]
DASH_FIELDS = ["rebuffer_s", "rebuffer_events", "events_per_min"]
TRACE_FIELDS = ["topology", "run_eta", "iter", "lb", "ub", "eta", "gap"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    n_pbs: int = 4
    n_users: int = 20
    radius_km: float = 1.0
    bias_db: float = 0.0
    p_mbs_dbm: float = 46.0
    p_pbs_dbm: float = 30.0
    shadowing_db: float = 8.0
    bandwidth: float = 20e6
    noise_psd: float = THERMAL_NOISE_PSD
    f: float = 1.0
    n_videos: int = 4
    n_reps: int = 3
    n_segments: int = 18
    segment_s: float = 10.0
    trace_file: str | None = None
    mode: str = "jtravqs"
    eta_fixed: float | None = None
    eta_sweep: int = 0
    n_topologies: int = 10
    seed: int = 0
    oracle: bool = False
    solver: dict = field(default_factory=dict)
    dash: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.f <= 1.0:
            raise ConfigError("f must lie in [0, 1]")
        if self.n_topologies < 1:
            raise ConfigError("n_topologies must be >= 1")
        if self.eta_fixed is not None and not 0.0 <= self.eta_fixed <= 1.0:
            raise ConfigError("eta_fixed must lie in [0, 1]")
        if self.eta_sweep and self.mode != "ravqs-fixed":
            raise ConfigError("eta_sweep applies to mode ravqs-fixed only")
        if self.eta_sweep < 0 or self.eta_sweep == 1:
            raise ConfigError("eta_sweep needs at least 2 grid points")
        if self.n_reps < 1 or self.n_segments < 1 or self.n_videos < 1:
            raise ConfigError("video parameters must be positive")
        try:
            self.topology_config().validate()
            self.solver_config().validate()
            self.dash_config().validate()
            self.phy_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    # ------------------------------------------------------------ builders

    def topology_config(self) -> TopologyConfig:
        return TopologyConfig(n_pbs=self.n_pbs, n_users=self.n_users, radius_km=self.radius_km,
                              p_mbs_dbm=self.p_mbs_dbm, p_pbs_dbm=self.p_pbs_dbm,
                              shadowing_db=self.shadowing_db, bias_db=self.bias_db,
                              optimized_fraction=self.f, n_videos=self.n_videos)

    def phy_params(self) -> PhyParams:
        return PhyParams(bandwidth=self.bandwidth, noise_psd=self.noise_psd)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def dash_config(self) -> DashConfig:
        kw = dict(self.dash)
        if "solver" in kw:
            kw["solver"] = SolverConfig(**kw["solver"])
        kw.setdefault("solver_static", self.solver_config())
        return DashConfig(**kw)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config fields: {unknown}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        """YAML or JSON file (JSON is read by the YAML parser)."""
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data)


# ------------------------------------------------------------------ runs


@dataclass
class Scenario:
    """Everything derived from one topology seed."""

    seed: int
    topo: object
    links: dict
    library: object
    requests: dict[int, int]
    net: Network  # solver view (PF-only users carry a pseudo-representation)
    video_net: Network  # every user with its video quality table


def build_scenario(cfg: ExperimentConfig, seed: int) -> Scenario:
    topo = generate_topology(cfg.topology_config(), seed)
    phy = cfg.phy_params()
    links = compute_links(topo, phy)
    if cfg.trace_file:
        library = load_traces(cfg.trace_file, segment_duration=cfg.segment_s)
    else:
        library = synthetic_library(SyntheticConfig(n_videos=cfg.n_videos, n_reps=cfg.n_reps,
                                                     n_segments=cfg.n_segments,
                                                     segment_duration=cfg.segment_s), seed)
    n_lib = len(library.videos)
    if any(u.video_id is not None and u.video_id >= n_lib for u in topo.users):
        raise ConfigError(f"trace file holds {n_lib} videos, topology requests {cfg.n_videos}")
    video_net = build_network(topo, phy, library, links=links, all_optimized=True)
    requests = draw_requests(video_net, seed)
    video_net = build_network(topo, phy, library, links=links, requested=requests, all_optimized=True)
    net = build_network(topo, phy, library, links=links, requested=requests)
    return Scenario(seed, topo, links, library, requests, net, video_net)


def _oracle_value(net: Network) -> float:
    size = max((math.prod(u.n_reps + 1 for u in net.users_of(bs)) for bs in net.bs_ids), default=1)
    if size > ORACLE_LIMIT:
        raise ConfigError(f"instance too large for the oracle ({size} assignments per BS)")
    return oracle_optimum(net).value


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _static_rows(k: int, sc: Scenario, mode: str, eta: float, report: SolverReport | None,
                 sel: dict, z: dict, objective: float, oracle: float | None) -> list[dict]:
    rows = []
    for u in sc.net.users:
        vu = sc.video_net.user(u.id)
        r = sel.get(u.id)
        rep = -1 if r is None else int(r)
        quality = 0.0 if r is None else float(vu.quality[r])
        za, zr = z.get(u.id, (0.0, 0.0))
        rows.append({
            "topology": k, "seed": sc.seed, "mode": mode, "eta": eta, "user": u.id, "bs": u.bs,
            "tier": "macro" if u.bs == MBS_ID else "pico", "optimized": u.optimized, "rep": rep,
            "quality": quality, "z_abs": za, "z_rs": zr, "objective": objective,
            "converged": True if report is None else report.converged, "oracle": oracle,
        })
    return rows


def _report_view(sc: Scenario, report: SolverReport) -> tuple[dict, dict]:
    """Delivered representation and resources per user from a solver report."""
    p = report.best_feasible
    sel, z = {}, {}
    for u in sc.net.users:
        r = p.selection().get(u.id)
        if r is None:
            continue
        sel[u.id] = r if u.optimized else sc.requests[u.id]
        z[u.id] = (float(p.z_abs[u.id][r]), float(p.z_rs[u.id][r]))
    return sel, z


def _trace_rows(k: int, run_eta, report: SolverReport) -> list[dict]:
    return [{"topology": k, "run_eta": run_eta, "iter": it, "lb": lb, "ub": ub, "eta": eta, "gap": gap}
            for it, lb, ub, eta, gap in report.trace]


def run_topology(cfg: ExperimentConfig, k: int) -> tuple[list[dict], list[dict], list[list]]:
    """Raw rows, trace rows and DASH slot rows of topology ``k``."""
    seed = cfg.seed + k
    sc = build_scenario(cfg, seed)
    scfg = cfg.solver_config()
    oracle = _oracle_value(sc.net) if cfg.oracle else None
    raw, trace, slots = [], [], []

    def pfra_eta() -> float:
        return solve_pfra(sc.video_net, seed, requests=sc.requests).eta

    if cfg.mode == "jtravqs":
        rep = solve_jtravqs(sc.net, scfg)
        sel, z = _report_view(sc, rep)
        raw += _static_rows(k, sc, cfg.mode, rep.eta, rep, sel, z, rep.objective, oracle)
        trace += _trace_rows(k, "", rep)
    elif cfg.mode == "pfra":
        pf = solve_pfra(sc.video_net, seed, eta=cfg.eta_fixed, requests=sc.requests)
        z = {uid: (pf.z_abs[uid], pf.z_rs[uid]) for uid in pf.z_abs}
        raw += _static_rows(k, sc, cfg.mode, pf.eta, None, pf.delivered, z,
                            pfra_quality(sc.video_net, pf), oracle)
    elif cfg.mode == "ravqs-fixed":
        if cfg.eta_sweep:
            etas = [float(e) for e in np.linspace(0.0, 1.0, cfg.eta_sweep)]
        else:
            etas = [cfg.eta_fixed if cfg.eta_fixed is not None else pfra_eta()]
        for eta in etas:
            rep = solve_ravqs_fixed_eta(sc.net, eta, scfg)
            sel, z = _report_view(sc, rep)
            raw += _static_rows(k, sc, cfg.mode, eta, rep, sel, z, rep.objective, oracle)
            trace += _trace_rows(k, eta, rep)
    else:
        static = solve_jtravqs(sc.net, scfg)
        trace += _trace_rows(k, "", static)
        floor = {uid: r for uid, r in static.best_feasible.selection().items() if r is not None}
        if cfg.mode == "jtravqs-dash":
            eta = static.eta
        else:
            eta = cfg.eta_fixed if cfg.eta_fixed is not None else pfra_eta()
        dcfg = cfg.dash_config()
        res = run_dash(sc.topo, sc.links, sc.library, sc.net, dcfg, cfg.mode, eta, floor, seed)
        played = {}
        for row in res.rows:
            slots.append([k] + row)
            if row[3] >= 0:
                played.setdefault(row[1], []).append(row[3])
        for u in sc.net.users:
            c = res.clients.get(u.id)
            if c is None:
                continue
            minutes = (c.played_total + c.stalled_total) / 60.0
            reps = played.get(u.id)
            raw.append({
                "topology": k, "seed": seed, "mode": cfg.mode, "eta": eta, "user": u.id, "bs": u.bs,
                "tier": "macro" if u.bs == MBS_ID else "pico", "optimized": u.optimized,
                "rep": float(np.mean(reps)) if reps else -1, "quality": "",
                "z_abs": "", "z_rs": "", "objective": static.objective, "converged": static.converged,
                "oracle": oracle, "rebuffer_s": c.stalled_total, "rebuffer_events": c.rebuffer_events,
                "events_per_min": c.rebuffer_events / minutes if minutes > 0 else 0.0,
            })
    for row in raw:
        if not row["converged"]:
            log.warning("topology %d: solver stopped at the iteration limit", k)
            break
    return raw, trace, slots


def _write_csv(path: Path, header: list[str], rows) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header] if isinstance(row, dict) else [_fmt(v) for v in row])
    os.replace(tmp, path)


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict[str, Path]:
    """Run every topology and write raw, metrics and trace CSVs (plus the
    per-slot CSV in DASH modes). Returns the written paths."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw, trace, slots = [], [], []
    for k in range(cfg.n_topologies):
        r, t, s = run_topology(cfg, k)
        raw += r
        trace += t
        slots += s
    dash = cfg.mode in ("jtravqs-dash", "ravqs-dash-fixed")
    fields = RAW_FIELDS + (DASH_FIELDS if dash else [])
    paths = {"raw": out / "raw.csv", "metrics": out / "metrics.csv", "trace": out / "trace.csv"}
    _write_csv(paths["raw"], fields, raw)
    metrics = compute_metrics(read_rows(paths["raw"]), seed=cfg.seed)
    keys = sorted({key for m in metrics for key in m}, key=lambda s: (s not in ("topology", "seed", "mode", "eta"), s))
    _write_csv(paths["metrics"], keys, [{key: m.get(key) for key in keys} for m in metrics])
    _write_csv(paths["trace"], TRACE_FIELDS, trace)
    if dash:
        paths["slots"] = out / "slots.csv"
        _write_csv(paths["slots"], ["topology"] + SLOT_HEADER, slots)
    return paths


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
