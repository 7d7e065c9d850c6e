"""Random macro/pico topologies, biased association and per-phase interference."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hcnstream.phy import path_loss_db

MBS_ID = 0
ABS = "ABS"
RS = "RS"
PHASES = (ABS, RS)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: str  # "MBS" or "PBS"
    position: tuple[float, float]  # km
    tx_power: float  # W

    @property
    def is_macro(self) -> bool:
        return self.kind == "MBS"


@dataclass(frozen=True)
class User:
    id: int
    position: tuple[float, float]  # km
    optimized: bool = True
    video_id: int | None = None


@dataclass(frozen=True)
class TopologyConfig:
    n_pbs: int = 4
    n_users: int = 20
    radius_km: float = 1.0
    p_mbs_dbm: float = 46.0
    p_pbs_dbm: float = 30.0
    shadowing_db: float = 8.0
    bias_db: float = 0.0
    optimized_fraction: float = 1.0
    n_videos: int = 1
    min_distance_km: float = 0.01

    def validate(self) -> None:
        if self.n_pbs < 0:
            raise ValueError(f"n_pbs must be >= 0, got {self.n_pbs}")
        if self.n_users < 1:
            raise ValueError(f"n_users must be >= 1, got {self.n_users}")
        if not self.radius_km > 0:
            raise ValueError(f"radius_km must be > 0, got {self.radius_km}")
        if not 0.0 <= self.optimized_fraction <= 1.0:
            raise ValueError("optimized_fraction must lie in [0, 1]")
        if self.n_videos < 1:
            raise ValueError("n_videos must be >= 1")
        if self.shadowing_db < 0 or self.min_distance_km <= 0:
            raise ValueError("shadowing_db must be >= 0 and min_distance_km > 0")


@dataclass
class Topology:
    stations: list[BaseStation]
    users: list[User]
    association: dict[int, int]
    mean_gains: dict[tuple[int, int], float]
    radius_km: float
    bias_db: float = 0.0

    def station(self, bs_id: int) -> BaseStation:
        return self._by_id[bs_id]

    def __post_init__(self) -> None:
        self._by_id = {bs.id: bs for bs in self.stations}

    @property
    def pbs_ids(self) -> list[int]:
        return [bs.id for bs in self.stations if not bs.is_macro]

    def users_of(self, bs_id: int) -> list[User]:
        return [u for u in self.users if self.association[u.id] == bs_id]

    def gain(self, bs_id: int, user_id: int) -> float:
        return self.mean_gains[(bs_id, user_id)]

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "radius_km": self.radius_km,
            "bias_db": self.bias_db,
            "stations": [
                {"id": b.id, "kind": b.kind, "position": list(b.position), "tx_power": b.tx_power}
                for b in self.stations
            ],
            "users": [
                {
                    "id": u.id,
                    "position": list(u.position),
                    "optimized": u.optimized,
                    "video_id": u.video_id,
                }
                for u in self.users
            ],
            "association": {str(k): v for k, v in sorted(self.association.items())},
            "mean_gains": [
                [j, i, g] for (j, i), g in sorted(self.mean_gains.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        stations = [
            BaseStation(s["id"], s["kind"], tuple(s["position"]), s["tx_power"])
            for s in data["stations"]
        ]
        users = [
            User(u["id"], tuple(u["position"]), u["optimized"], u["video_id"])
            for u in data["users"]
        ]
        return cls(
            stations=stations,
            users=users,
            association={int(k): v for k, v in data["association"].items()},
            mean_gains={(int(j), int(i)): float(g) for j, i, g in data["mean_gains"]},
            radius_km=data["radius_km"],
            bias_db=data.get("bias_db", 0.0),
        )

    def dumps(self) -> str:
        # repr() of floats round-trips exactly through json
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "Topology":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _uniform_in_disc(rng: np.random.Generator, radius: float, n: int) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def generate_topology(cfg: TopologyConfig, seed: int) -> Topology:
    """Draw a random single-macrocell topology.

    PBSs and users are placed uniformly in the disc; the MBS sits at the
    origin. Mean gains combine the distance path loss with one log-normal
    shadowing draw per (BS, user) pair. The result is a deterministic
    function of ``(cfg, seed)``.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)

    stations = [BaseStation(MBS_ID, "MBS", (0.0, 0.0), dbm_to_watts(cfg.p_mbs_dbm))]
    for k, (px, py) in enumerate(_uniform_in_disc(rng, cfg.radius_km, cfg.n_pbs), start=1):
        stations.append(BaseStation(k, "PBS", (float(px), float(py)), dbm_to_watts(cfg.p_pbs_dbm)))

    upos = _uniform_in_disc(rng, cfg.radius_km, cfg.n_users)
    n_opt = int(round(cfg.optimized_fraction * cfg.n_users))
    optimized = np.zeros(cfg.n_users, dtype=bool)
    optimized[rng.permutation(cfg.n_users)[:n_opt]] = True
    videos = rng.integers(0, cfg.n_videos, size=cfg.n_users)
    users = [
        User(i, (float(x), float(y)), bool(optimized[i]), int(videos[i]))
        for i, (x, y) in enumerate(upos)
    ]

    shadow = rng.normal(0.0, cfg.shadowing_db, size=(len(stations), cfg.n_users))
    gains: dict[tuple[int, int], float] = {}
    for j, bs in enumerate(stations):
        for u in users:
            d = math.hypot(bs.position[0] - u.position[0], bs.position[1] - u.position[1])
            d = max(d, cfg.min_distance_km)
            loss_db = path_loss_db(d) + shadow[j, u.id]
            gains[(bs.id, u.id)] = 10.0 ** (-loss_db / 10.0)

    topo = Topology(stations, users, {}, gains, cfg.radius_km, cfg.bias_db)
    topo.association = associate_users(topo, cfg.bias_db)
    return topo


def associate_users(topo: Topology, bias_db: float, noise_w: float = 1.0) -> dict[int, int]:
    """Biased SNR association: PBS j wins if SNR_j + bias >= SNR_MBS.

    Among the PBSs satisfying the rule the strongest one is picked, ties going
    to the lowest id. Noise is common to both sides of the comparison.
    """
    mbs = topo.station(MBS_ID)
    assoc: dict[int, int] = {}
    for u in topo.users:
        snr_mbs = 10.0 * math.log10(mbs.tx_power * topo.gain(MBS_ID, u.id) / noise_w)
        best_id, best_snr = MBS_ID, -math.inf
        for bs in topo.stations:
            if bs.is_macro:
                continue
            snr = 10.0 * math.log10(bs.tx_power * topo.gain(bs.id, u.id) / noise_w)
            if snr + bias_db >= snr_mbs and snr > best_snr:
                best_id, best_snr = bs.id, snr
        assoc[u.id] = best_id
    return assoc


def aggregate_interference(topo: Topology, user: User | int, phase: str) -> float:
    """Sum of mean received power from every transmitter active in ``phase``
    except the serving BS. The MBS is silent during ABS."""
    uid = user.id if isinstance(user, User) else user
    serving = topo.association[uid]
    total = 0.0
    for bs in topo.stations:
        if bs.id == serving:
            continue
        if bs.is_macro and phase == ABS:
            continue
        total += bs.tx_power * topo.gain(bs.id, uid)
    return total
