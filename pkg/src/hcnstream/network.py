"""Solver-facing view of one HCN instance: per-user rates, qualities and demands."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hcnstream.phy import PhyParams, compute_links
from hcnstream.topology import MBS_ID, Topology
from hcnstream.video import VideoLibrary


@dataclass
class UserDemand:
    """One user as seen by its serving BS.

    ``quality[r]`` and ``rate[r]`` are the utility and the sustained bitrate
    (bits/s) of representation ``r``. PF-only users carry a single
    pseudo-representation whose utility is the log of their achievable rate.
    """

    id: int
    bs: int
    c_abs: float
    c_rs: float
    quality: np.ndarray
    rate: np.ndarray
    optimized: bool = True
    video_id: int | None = None
    requested_rep: int | None = None
    min_rep: int = 0

    @property
    def on_macro(self) -> bool:
        return self.bs == MBS_ID

    @property
    def n_reps(self) -> int:
        return len(self.quality)

    @property
    def weight(self) -> int:
        """Objective multiplicity: PBS users count in both phases."""
        return 1 if self.on_macro else 2


@dataclass
class Network:
    bs_ids: list[int]
    users: list[UserDemand]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if MBS_ID not in self.bs_ids:
            self.bs_ids = [MBS_ID] + list(self.bs_ids)
        self.bs_ids = sorted(set(self.bs_ids))
        for u in self.users:
            if u.bs not in self.bs_ids:
                raise ValueError(f"user {u.id} served by unknown BS {u.bs}")
            if len(u.quality) != len(u.rate) or len(u.quality) == 0:
                raise ValueError(f"user {u.id}: quality and rate tables must be non-empty and aligned")
            if u.on_macro and u.c_abs != 0.0:
                raise ValueError(f"MBS user {u.id} cannot have an ABS rate")

    def users_of(self, bs: int) -> list[UserDemand]:
        return [u for u in self.users if u.bs == bs]

    @property
    def pbs_ids(self) -> list[int]:
        return [b for b in self.bs_ids if b != MBS_ID]

    def user(self, uid: int) -> UserDemand:
        for u in self.users:
            if u.id == uid:
                return u
        raise KeyError(uid)

    @property
    def max_quality(self) -> float:
        return max(float(np.max(u.quality)) for u in self.users)


def pf_pseudo_quality(c_abs: float, c_rs: float) -> float:
    """Log of the best achievable rate (bits/s); zero for dead links."""
    c = max(c_abs, c_rs)
    return math.log(c) if c > 1.0 else 0.0


def build_network(
    topo: Topology,
    phy: PhyParams,
    library: VideoLibrary,
    segment: int = 0,
    requested: dict[int, int] | None = None,
    links=None,
    all_optimized: bool = False,
) -> Network:
    """Assemble solver input from a topology, PHY parameters and traces.

    ``requested`` maps PF-only users to the representation whose bitrate
    their pseudo-representation must sustain; the top representation is
    assumed when absent. ``all_optimized`` gives every user its video
    quality table regardless of its participation flag.
    """
    links = compute_links(topo, phy) if links is None else links
    requested = requested or {}
    users = []
    for u in topo.users:
        link = links[u.id]
        bs = topo.association[u.id]
        video = 0 if u.video_id is None else u.video_id
        n_reps = library.n_reps(video)
        if segment == 0:
            rates = library.rate_table(video)
        else:
            rates = np.array([library.tail_rate(video, r, segment) for r in range(n_reps)])
        c_abs = 0.0 if bs == MBS_ID else link.rate_abs
        if u.optimized or all_optimized:
            users.append(
                UserDemand(u.id, bs, c_abs, link.rate_rs, library.quality_table(video, segment), rates,
                           True, video, requested.get(u.id))
            )
        else:
            req = requested.get(u.id, n_reps - 1)
            users.append(
                UserDemand(u.id, bs, c_abs, link.rate_rs,
                           np.array([pf_pseudo_quality(c_abs, link.rate_rs)]),
                           np.array([rates[req]]), False, video, req)
            )
    return Network(list(topo.pbs_ids) + [MBS_ID], users,
                   meta={"n_users": len(users), "segment": segment})
