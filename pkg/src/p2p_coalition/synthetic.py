"""Seeded synthetic households so every run works without external data.

Solar follows a clipped sine bell between 06:00 and 18:00 scaled by a
per-household system size and a per-day cloud factor. Demand is a base
load plus a morning peak around 07:30 and an evening peak around 19:00.
Values are kWh per slot.
"""

from __future__ import annotations

import numpy as np

from .model import CombinerMode, NetworkLimits, ProsumerConfig
from .pricing import PriceSchedule
from .simulation import Readings, SimulationConfig

BATTERY_SIZES = (0.0, 6.5, 10.0, 13.5)

# Inverter rate and feeder limit in kWh per slot (1.6 kW at 15 minutes). Small
# enough that midday solar regularly overflows the battery path.
RATED_RATE = 0.4
TRANSFER_LIMIT = 0.4

DEFAULT_SCHEDULE = PriceSchedule(
    grid_buy=0.26, grid_sell=0.10, beta=0.1, degradation=0.1, k=0.3
)


def make_roster(n: int, seed: int) -> tuple[ProsumerConfig, ...]:
    rng = np.random.default_rng([seed, 1])
    roster = []
    for i in range(n):
        capacity = float(rng.choice(BATTERY_SIZES, p=(0.1, 0.2, 0.3, 0.4)))
        roster.append(
            ProsumerConfig(
                id=str(i + 1),
                battery_capacity=capacity,
                alpha=round(float(rng.uniform(0.5, 1.5)), 3),
                soc_min=0.0,
                rated_rate=RATED_RATE if capacity else 0.0,
                charge_efficiency=1.0,
                initial_soc=round(float(rng.uniform(0.2, 0.8)) * capacity, 3),
            )
        )
    return tuple(roster)


def make_readings(
    ids: tuple[str, ...],
    n_slots: int = 96,
    seed: int = 0,
    slots_per_day: int = 96,
    solar: bool = True,
) -> Readings:
    """Generation and demand for ``ids`` over ``n_slots``; ``solar=False`` gives a fully overcast run."""
    rng = np.random.default_rng([seed, 2])
    N = len(ids)
    hours_per_slot = 24.0 / slots_per_day
    hour = (np.arange(n_slots) % slots_per_day + 0.5) * hours_per_slot
    day = np.arange(n_slots) // slots_per_day
    n_days = int(day.max()) + 1

    size_kw = rng.uniform(3.0, 10.0, N)
    cloud = rng.uniform(0.3, 1.0, (n_days, N))
    bell = np.clip(np.sin(np.pi * (hour - 6.0) / 12.0), 0.0, None) ** 1.5
    noise = rng.uniform(0.85, 1.0, (n_slots, N))
    pv = bell[:, None] * size_kw[None, :] * cloud[day] * noise * hours_per_slot
    if not solar:
        pv = np.zeros_like(pv)

    base_kw = rng.uniform(0.2, 0.6, N)
    morning = rng.uniform(0.5, 2.0, N)
    evening = rng.uniform(1.0, 3.0, N)
    shape_m = np.exp(-0.5 * ((hour - 7.5) / 1.0) ** 2)
    shape_e = np.exp(-0.5 * ((hour - 19.0) / 1.5) ** 2)
    jitter = rng.uniform(0.8, 1.2, (n_slots, N))
    demand_kw = base_kw[None, :] + morning[None, :] * shape_m[:, None] + evening[None, :] * shape_e[:, None]
    demand = demand_kw * jitter * hours_per_slot

    return Readings(ids, np.round(pv, 6), np.round(demand, 6))


def make_scenario(
    n_prosumers: int = 10,
    n_slots: int = 96,
    seed: int = 0,
    solar: bool = True,
    schedule: PriceSchedule = DEFAULT_SCHEDULE,
) -> tuple[SimulationConfig, Readings]:
    roster = make_roster(n_prosumers, seed)
    config = SimulationConfig(
        roster=roster,
        prices=(schedule,),
        limits=NetworkLimits(transfer_limit=TRANSFER_LIMIT, combiner_mode=CombinerMode.PER_PAPER_MAX),
        slots_per_day=96,
        seed=seed,
    )
    readings = make_readings(config.ids, n_slots, seed, config.slots_per_day, solar)
    return config, readings
