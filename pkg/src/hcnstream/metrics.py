"""Aggregate statistics recomputable from the raw per-user rows."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

N_BOOT = 10_000


def bootstrap_median_ci(values, n_boot: int = N_BOOT, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the median."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("no values")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    meds = np.median(x[idx], axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(meds, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def _mean_var(values) -> tuple[float, float]:
    if len(values) == 0:
        return float("nan"), float("nan")
    x = np.asarray(values, dtype=float)
    var = float(x.var(ddof=1)) if x.size > 1 else 0.0
    return float(x.mean()), var


def _f(row: dict, key: str) -> float:
    return float(row[key])


def compute_metrics(rows: list[dict], seed: int = 0) -> list[dict]:
    """One metrics record per run (topology, partition).

    Rows are the raw per-user records; values may be strings (as read back
    from CSV) or numbers.
    """
    if not rows:
        raise ValueError("no rows")
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for r in rows:
        groups[(int(r["topology"]), _f(r, "eta"))].append(r)
    out = []
    for (topo, eta), grp in sorted(groups.items()):
        rec = {"topology": topo, "seed": int(grp[0]["seed"]), "mode": grp[0]["mode"], "eta": eta,
               "objective": _f(grp[0], "objective")}
        if grp[0].get("oracle") not in (None, ""):
            rec["oracle"] = _f(grp[0], "oracle")
        for tier in ("macro", "pico"):
            reps = [_f(r, "rep") for r in grp if r["tier"] == tier and _f(r, "rep") >= 0]
            rec[f"mean_rep_{tier}"], rec[f"var_rep_{tier}"] = _mean_var(reps)
        served = [_f(r, "rep") for r in grp if _f(r, "rep") >= 0]
        rec["mean_rep"], rec["var_rep"] = _mean_var(served)
        rec["served"] = len(served)
        if "rebuffer_s" in grp[0]:
            reb = [_f(r, "rebuffer_s") for r in grp]
            ev = [_f(r, "events_per_min") for r in grp]
            rec["median_rebuffer_s"] = float(np.median(reb))
            rec["rebuffer_ci_lo"], rec["rebuffer_ci_hi"] = bootstrap_median_ci(reb, seed=seed)
            rec["median_events_per_min"] = float(np.median(ev))
            rec["events_ci_lo"], rec["events_ci_hi"] = bootstrap_median_ci(ev, seed=seed)
            opt = [_f(r, "rebuffer_s") for r in grp if int(r["optimized"])]
            rec["median_rebuffer_optimized_s"] = float(np.median(opt)) if opt else float("nan")
        out.append(rec)
    return out
