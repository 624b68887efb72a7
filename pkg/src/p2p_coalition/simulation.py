"""Multi-slot simulation, the feed-in-tariff baseline and their comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coalition import (
    STATE1_MODES,
    Partition,
    ProsumerOutcome,
    SlotOutcome,
    form_coalitions_slot,
)
from .errors import ConfigError, DataError, DomainError
from .model import (
    BatteryState,
    NetworkLimits,
    ProsumerConfig,
    SlotReading,
    effective_transfer_cap,
    settle_slot_energy,
)
from .pricing import PriceSchedule, State, no_market_prices, state1_settlement

DELTA_TOL = 1e-9


@dataclass(frozen=True)
class Readings:
    """Solar generation and household demand, arrays shaped ``(slots, prosumers)``.

    NaN marks a missing reading; the simulation refuses to run over one.
    """

    ids: tuple[str, ...]
    pv: np.ndarray
    demand: np.ndarray

    def __post_init__(self) -> None:
        ids = tuple(str(i) for i in self.ids)
        object.__setattr__(self, "ids", ids)
        pv = np.asarray(self.pv, dtype=float)
        demand = np.asarray(self.demand, dtype=float)
        if pv.ndim != 2 or pv.shape != demand.shape or pv.shape[1] != len(ids):
            raise DataError(
                f"pv {pv.shape} and demand {demand.shape} must both be (slots, {len(ids)})"
            )
        if len(set(ids)) != len(ids):
            raise DataError("duplicate prosumer ids in readings")
        if np.any(pv < 0) or np.any(demand < 0):
            raise DataError("readings must be non-negative")
        if np.any(np.isinf(pv)) or np.any(np.isinf(demand)):
            raise DataError("readings must be finite")
        object.__setattr__(self, "pv", pv)
        object.__setattr__(self, "demand", demand)

    @property
    def n_slots(self) -> int:
        return self.pv.shape[0]

    def column(self, prosumer_id: str) -> int:
        return self.ids.index(prosumer_id)

    def reading(self, slot: int, prosumer_id: str) -> SlotReading:
        j = self.column(prosumer_id)
        pv, demand = self.pv[slot, j], self.demand[slot, j]
        if math.isnan(pv) or math.isnan(demand):
            raise DataError(f"missing reading for prosumer {prosumer_id!r} at slot {slot}")
        return SlotReading(float(pv), float(demand))


@dataclass(frozen=True)
class SimulationConfig:
    """Roster, prices and network limits for a run.

    ``prices`` holds either one schedule used for every slot or one per slot.
    """

    roster: tuple[ProsumerConfig, ...]
    prices: tuple[PriceSchedule, ...]
    limits: NetworkLimits = field(default_factory=NetworkLimits)
    slots_per_day: int = 96
    seed: int | None = None
    state1_mode: str = "direct"
    clamp_to_band: bool = False
    slot_minutes: float = 15.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "roster", tuple(self.roster))
        object.__setattr__(self, "prices", tuple(self.prices))
        if not self.roster:
            raise ConfigError("roster", "at least one prosumer is required")
        ids = [p.id for p in self.roster]
        if len(set(ids)) != len(ids):
            raise ConfigError("roster", "prosumer ids must be unique")
        if not self.prices:
            raise ConfigError("prices", "at least one price schedule is required")
        if int(self.slots_per_day) < 1:
            raise ConfigError("slots_per_day", f"must be >= 1, got {self.slots_per_day}")
        if self.state1_mode not in STATE1_MODES:
            raise ConfigError("state1_mode", f"must be one of {STATE1_MODES}")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.roster)

    def schedule_at(self, slot: int) -> PriceSchedule:
        if len(self.prices) == 1:
            return self.prices[0]
        if slot >= len(self.prices):
            raise DataError(f"no price schedule for slot {slot} ({len(self.prices)} given)")
        return self.prices[slot]


def _slot_inputs(config: SimulationConfig, readings: Readings, slot: int) -> dict[str, SlotReading]:
    out = {}
    for n in config.ids:
        if n not in readings.ids:
            raise DataError(f"missing reading for prosumer {n!r} at slot {slot}")
        out[n] = readings.reading(slot, n)
    return out


def _horizon(readings: Readings, n_slots: int | None) -> int:
    T = readings.n_slots if n_slots is None else int(n_slots)
    if T < 1:
        raise DataError("at least one slot is required")
    if T > readings.n_slots:
        raise DataError(f"readings cover {readings.n_slots} slots, {T} requested")
    return T


def run_simulation(
    config: SimulationConfig, readings: Readings, n_slots: int | None = None
) -> list[SlotOutcome]:
    """Form coalitions slot by slot, carrying every battery's charge forward."""
    T = _horizon(readings, n_slots)
    batteries = {p.id: p.starting_battery() for p in config.roster}
    partition = None
    outcomes = []
    for t in range(T):
        partition, outcome, _ = form_coalitions_slot(
            config.roster,
            batteries,
            _slot_inputs(config, readings, t),
            config.schedule_at(t),
            config.limits,
            partition,
            slot=t,
            state1_mode=config.state1_mode,
            clamp_to_band=config.clamp_to_band,
        )
        batteries = {p.id: BatteryState(p.soc_end) for p in outcome.prosumers}
        outcomes.append(outcome)
    return outcomes


def fit_baseline(
    config: SimulationConfig,
    readings: Readings,
    n_slots: int | None = None,
    align_with: list[SlotOutcome] | None = None,
) -> list[SlotOutcome]:
    """Feed-in-tariff scheme: self-dispatch, then surplus to the grid and deficit from it.

    With ``align_with`` every slot starts from the charge the given run had at
    that slot, so each slot answers "what if this prosumer had not cooperated
    now". Without it the baseline carries its own charge forward.
    """
    T = _horizon(readings, n_slots)
    if align_with is not None and len(align_with) < T:
        raise DomainError(f"aligned run has {len(align_with)} slots, {T} needed")
    ids = config.ids
    socs = {p.id: p.starting_battery().soc for p in config.roster}
    outcomes = []
    for t in range(T):
        schedule = config.schedule_at(t)
        inputs = _slot_inputs(config, readings, t)
        if align_with is not None:
            starts = {r.id: r.soc_start for r in align_with[t].prosumers}
            socs = {n: starts[n] for n in ids}
        records = []
        for cfg in config.roster:
            balance = settle_slot_energy(cfg, BatteryState(socs[cfg.id]), inputs[cfg.id], config.limits)
            utility, cost = state1_settlement(balance.surplus, balance.deficit, schedule)
            records.append(
                ProsumerOutcome(
                    id=cfg.id,
                    config=cfg,
                    state=State.STATE1,
                    reason="fit",
                    reading=inputs[cfg.id],
                    soc_start=socs[cfg.id],
                    balance=balance,
                    cap=effective_transfer_cap(cfg, config.limits),
                    traded=0.0,
                    battery_utility=0.0,
                    utility=utility,
                    cost=cost,
                    soc_end=balance.soc_after,
                )
            )
        socs = {r.id: r.soc_end for r in records}
        outcomes.append(
            SlotOutcome(
                slot=t,
                schedule=schedule,
                cleared=no_market_prices(schedule),
                partition=Partition.grand_state1(ids, t),
                prosumers=tuple(records),
            )
        )
    return outcomes


@dataclass(frozen=True)
class ComparisonReport:
    """P2P minus FiT net benefit per slot and prosumer, plus daily totals."""

    ids: tuple[str, ...]
    p2p_net: np.ndarray
    fit_net: np.ndarray
    traded: np.ndarray
    slots_per_day: int
    aligned: bool

    @property
    def delta(self) -> np.ndarray:
        return self.p2p_net - self.fit_net

    @property
    def min_delta(self) -> float:
        return float(self.delta.min()) if self.delta.size else 0.0

    @property
    def violations(self) -> list[tuple[int, str, float]]:
        """Slots where a prosumer did worse than under the feed-in tariff."""
        rows, cols = np.nonzero(self.delta < -DELTA_TOL)
        return [(int(t), self.ids[j], float(self.delta[t, j])) for t, j in zip(rows, cols)]

    def _daily(self, values: np.ndarray) -> np.ndarray:
        T = values.shape[0]
        days = -(-T // self.slots_per_day)
        out = np.zeros((days, values.shape[1]))
        for d in range(days):
            out[d] = values[d * self.slots_per_day:(d + 1) * self.slots_per_day].sum(axis=0)
        return out

    @property
    def daily_p2p(self) -> np.ndarray:
        return self._daily(self.p2p_net)

    @property
    def daily_fit(self) -> np.ndarray:
        return self._daily(self.fit_net)

    @property
    def daily_delta(self) -> np.ndarray:
        return self._daily(self.delta)


def _net_matrix(outcomes: list[SlotOutcome], ids: tuple[str, ...], attr: str) -> np.ndarray:
    out = np.zeros((len(outcomes), len(ids)))
    for t, o in enumerate(outcomes):
        rec = o.by_id()
        out[t] = [getattr(rec[n], attr) for n in ids]
    return out


def compare(
    p2p: list[SlotOutcome], fit: list[SlotOutcome], slots_per_day: int = 96
) -> ComparisonReport:
    if len(p2p) != len(fit):
        raise DomainError(f"runs differ in length: {len(p2p)} vs {len(fit)} slots")
    if not p2p:
        raise DomainError("nothing to compare")
    ids = tuple(r.id for r in p2p[0].prosumers)
    for a, b in zip(p2p, fit):
        if tuple(r.id for r in a.prosumers) != ids or tuple(r.id for r in b.prosumers) != ids:
            raise DomainError(f"slot {a.slot}: runs cover different prosumers")
    aligned = all(
        ra.soc_start == rb.soc_start
        for a, b in zip(p2p, fit)
        for ra, rb in zip(a.prosumers, b.prosumers)
    )
    return ComparisonReport(
        ids=ids,
        p2p_net=_net_matrix(p2p, ids, "net_benefit"),
        fit_net=_net_matrix(fit, ids, "net_benefit"),
        traded=_net_matrix(p2p, ids, "traded"),
        slots_per_day=slots_per_day,
        aligned=aligned,
    )


def daily_welfare(outcomes: list[SlotOutcome], slots_per_day: int = 96) -> list[float]:
    """Total realised net benefit of all prosumers per day."""
    days: list[list[float]] = []
    for o in outcomes:
        d = o.slot // slots_per_day
        while len(days) <= d:
            days.append([])
        days[d].extend(p.net_benefit for p in o.prosumers)
    return [math.fsum(v) for v in days]
