"""Seeded random single-slot instances for property and acceptance tests."""

from __future__ import annotations

import numpy as np

from p2p_coalition.model import BatteryState, CombinerMode, NetworkLimits, ProsumerConfig, SlotReading
from p2p_coalition.pricing import PriceSchedule


def random_slot(seed: int, n_max: int = 20, n_min: int = 1, sunny: bool = False):
    """Return ``(roster, batteries, readings, schedule, limits)`` for one slot.

    Mixes battery-less households, deficits, near-full and near-empty
    batteries so that every classification branch and both market sides
    show up across seeds. ``sunny`` makes solar surplus (and so receivers)
    much more common.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_min, n_max + 1))
    p_s = float(rng.uniform(0.05, 0.15))
    schedule = PriceSchedule(
        grid_buy=p_s + float(rng.uniform(0.0, 0.25)),
        grid_sell=p_s,
        beta=float(rng.choice([0.0, rng.uniform(0.0, 0.3)])),
        degradation=float(rng.uniform(0.0, 0.15)),
        k=float(rng.uniform(0.02, 1.0)),
    )
    limits = NetworkLimits(
        transfer_limit=float(rng.uniform(0.1, 3.0)),
        combiner_mode=CombinerMode.CAP_MIN if rng.random() < 0.3 else CombinerMode.PER_PAPER_MAX,
    )
    roster, batteries, readings = [], {}, {}
    for i in range(n):
        capacity = 0.0 if rng.random() < 0.15 else float(rng.uniform(1.0, 15.0))
        soc_min = float(rng.uniform(0, 0.2) * capacity)
        cfg = ProsumerConfig(
            id=f"p{i:02d}",
            battery_capacity=capacity,
            alpha=float(rng.uniform(0.3, 2.0)),
            soc_min=soc_min,
            rated_rate=float(rng.uniform(0.2, 3.0)) if capacity else 0.0,
            charge_efficiency=float(rng.choice([1.0, rng.uniform(0.8, 1.0)])),
        )
        roster.append(cfg)
        batteries[cfg.id] = BatteryState(float(rng.uniform(soc_min, capacity)) if capacity else 0.0)
        pv = float(rng.uniform(0, 6)) if rng.random() < 0.8 else 0.0
        demand = float(rng.uniform(0, 4))
        if sunny:
            pv, demand = pv + 3.0, demand / 2
        readings[cfg.id] = SlotReading(pv, demand)
    return tuple(roster), batteries, readings, schedule, limits
