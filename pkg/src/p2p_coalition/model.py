"""Prosumer, battery and network data plus the per-slot self-dispatch arithmetic.

All energies are kWh per slot. A prosumer first serves its household from
solar and battery; only what is left over (surplus or deficit) reaches any
market.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError, DomainError


class CombinerMode(str, Enum):
    """How the battery rate and the network transfer limit combine into ``e_max``."""

    PER_PAPER_MAX = "per-paper-max"
    CAP_MIN = "cap-min"


def _finite(field: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected a number, got {value!r}") from None
    if not math.isfinite(value):
        raise ConfigError(field, f"must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ProsumerConfig:
    """Static parameters of one prosumer.

    ``battery_capacity == 0`` means no battery; such a prosumer can never
    leave state 1. ``initial_soc`` defaults to half the capacity.
    """

    id: str
    battery_capacity: float = 0.0
    alpha: float = 1.0
    soc_min: float = 0.0
    rated_rate: float = 0.0
    charge_efficiency: float = 1.0
    initial_soc: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", str(self.id))
        cap = _finite("battery_capacity", self.battery_capacity)
        alpha = _finite("alpha", self.alpha)
        soc_min = _finite("soc_min", self.soc_min)
        rate = _finite("rated_rate", self.rated_rate)
        eta = _finite("charge_efficiency", self.charge_efficiency)
        if cap < 0:
            raise ConfigError("battery_capacity", f"must be >= 0, got {cap}")
        if alpha <= 0:
            raise ConfigError("alpha", f"satisfaction parameter must be > 0, got {alpha}")
        if soc_min < 0:
            raise ConfigError("soc_min", f"must be >= 0, got {soc_min}")
        if soc_min > cap:
            raise ConfigError("soc_min", f"{soc_min} exceeds battery_capacity {cap}")
        if rate < 0:
            raise ConfigError("rated_rate", f"must be >= 0, got {rate}")
        if not 0 < eta <= 1:
            raise ConfigError("charge_efficiency", f"must lie in (0, 1], got {eta}")
        for name, value in (("battery_capacity", cap), ("alpha", alpha), ("soc_min", soc_min),
                            ("rated_rate", rate), ("charge_efficiency", eta)):
            object.__setattr__(self, name, value)
        if self.initial_soc is not None:
            soc0 = _finite("initial_soc", self.initial_soc)
            if not soc_min <= soc0 <= cap:
                raise ConfigError("initial_soc", f"{soc0} outside [{soc_min}, {cap}]")
            object.__setattr__(self, "initial_soc", soc0)

    @property
    def has_battery(self) -> bool:
        return self.battery_capacity > 0

    def starting_battery(self) -> "BatteryState":
        if self.initial_soc is not None:
            return BatteryState(self.initial_soc)
        return BatteryState(max(self.soc_min, 0.5 * self.battery_capacity))


@dataclass(frozen=True)
class BatteryState:
    soc: float

    def check(self, config: ProsumerConfig) -> None:
        if not math.isfinite(self.soc):
            raise DomainError(f"prosumer {config.id!r}: non-finite state of charge")
        if not config.soc_min <= self.soc <= config.battery_capacity:
            raise DomainError(
                f"prosumer {config.id!r}: state of charge {self.soc} outside "
                f"[{config.soc_min}, {config.battery_capacity}]"
            )


@dataclass(frozen=True)
class SlotReading:
    pv: float
    household_demand: float

    def __post_init__(self) -> None:
        for name in ("pv", "household_demand"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class NetworkLimits:
    transfer_limit: float = 0.0
    combiner_mode: CombinerMode = CombinerMode.PER_PAPER_MAX

    def __post_init__(self) -> None:
        limit = _finite("transfer_limit", self.transfer_limit)
        if limit < 0:
            raise ConfigError("transfer_limit", f"must be >= 0, got {limit}")
        object.__setattr__(self, "transfer_limit", limit)
        object.__setattr__(self, "combiner_mode", CombinerMode(self.combiner_mode))


@dataclass(frozen=True)
class EnergyBalance:
    """Outcome of self-dispatch for one prosumer and slot.

    ``self_consumption`` is household demand met from solar and battery;
    energy routed into the battery is reported separately as ``charged``.
    ``soc_after`` is the state of charge once self-dispatch is done.
    """

    self_consumption: float = 0.0
    surplus: float = 0.0
    deficit: float = 0.0
    charged: float = 0.0
    discharged: float = 0.0
    soc_after: float = 0.0


def self_consumption(pv: float, discharged: float, demand: float) -> float:
    """Own solar plus battery energy actually used, ``min(pv + discharged, demand)``."""
    if pv < 0 or discharged < 0 or demand < 0:
        raise DomainError(
            f"energies must be >= 0 (pv={pv}, discharged={discharged}, demand={demand})"
        )
    return min(pv + discharged, demand)


def effective_transfer_cap(config: ProsumerConfig, limits: NetworkLimits) -> float:
    if limits.combiner_mode is CombinerMode.CAP_MIN:
        return min(config.rated_rate, limits.transfer_limit)
    return max(config.rated_rate, limits.transfer_limit)


def settle_slot_energy(
    config: ProsumerConfig,
    battery: BatteryState,
    reading: SlotReading,
    limits: NetworkLimits,
) -> EnergyBalance:
    """Serve the household from solar and battery before any trading.

    Excess solar charges the battery up to the free capacity and ``e_max``;
    a shortfall is drawn from the battery down to ``soc_min``. Whatever is
    left becomes surplus or deficit. ``pv == demand`` is a no-op slot.
    """
    battery.check(config)
    pv, demand = reading.pv, reading.household_demand
    e_max = effective_transfer_cap(config, limits)
    soc = battery.soc
    eta = config.charge_efficiency

    if pv > demand:
        excess = pv - demand
        charged = max(0.0, min(config.battery_capacity - soc, e_max, excess))
        new_soc = min(config.battery_capacity, soc + eta * charged)
        return EnergyBalance(
            self_consumption=self_consumption(pv, 0.0, demand),
            surplus=excess - charged,
            charged=charged,
            soc_after=new_soc,
        )
    if pv < demand:
        need = demand - pv
        discharged = max(0.0, min(soc - config.soc_min, e_max, need))
        new_soc = max(config.soc_min, soc - eta * discharged)
        return EnergyBalance(
            self_consumption=self_consumption(pv, discharged, demand),
            deficit=need - discharged,
            discharged=discharged,
            soc_after=new_soc,
        )
    return EnergyBalance(self_consumption=demand, soc_after=soc)

