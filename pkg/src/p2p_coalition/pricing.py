"""Utilities, threshold prices, optimal battery quantities and closed-form clearing.

Prices are $/kWh, energies kWh, and the scaling factor ``k`` is $/kWh^2 so
that ``k * capacity * e`` is a money amount.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import ConfigError, DomainError, InvariantViolation, NoMarketError
from .model import BatteryState, EnergyBalance, ProsumerConfig


class State(str, Enum):
    STATE1 = "state1"
    PROVIDER = "provider"
    RECEIVER = "receiver"

    @property
    def in_coalition2(self) -> bool:
        return self is not State.STATE1


@dataclass(frozen=True)
class PriceSchedule:
    """Grid prices and market parameters for one slot.

    ``grid_buy`` is what the grid charges, ``grid_sell`` the feed-in price,
    ``beta`` the tax/fee markup of the charging price over the discharging
    price, ``degradation`` the per-kWh battery wear cost.
    """

    grid_buy: float
    grid_sell: float
    beta: float = 0.0
    degradation: float = 0.0
    k: float = 1.0

    def __post_init__(self) -> None:
        for name in ("grid_buy", "grid_sell", "beta", "degradation", "k"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ConfigError(name, f"expected a number, got {value!r}") from None
            if not math.isfinite(value):
                raise ConfigError(name, f"must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.grid_sell < 0:
            raise ConfigError("grid_sell", f"must be >= 0, got {self.grid_sell}")
        if self.grid_buy < self.grid_sell:
            raise ConfigError(
                "grid_buy", f"{self.grid_buy} is below grid_sell {self.grid_sell}"
            )
        if self.beta < 0:
            raise ConfigError("beta", f"must be >= 0, got {self.beta}")
        if self.degradation < 0:
            raise ConfigError("degradation", f"must be >= 0, got {self.degradation}")
        if not 0 < self.k <= 1:
            raise ConfigError("k", f"scaling factor must lie in (0, 1], got {self.k}")


@dataclass(frozen=True)
class ClearedPrices:
    """Prices in force for one slot.

    The mid-market pair drives the state decisions; the ``*_s2`` pair is the
    coalition-2 clearing result and is ``None`` when no market formed.
    """

    p_d_mid: float
    p_c_mid: float
    p_d_s2: float | None = None
    p_c_s2: float | None = None
    alpha_d: float | None = None
    alpha_c: float | None = None
    heterogeneous_alpha: bool = False
    clamped_to_band: bool = False
    warnings: tuple[str, ...] = ()

    @property
    def has_market(self) -> bool:
        return self.p_d_s2 is not None


@dataclass(frozen=True)
class StateDecision:
    state: State
    optimal_quantity: float
    utility_at_optimum: float
    case: int | None = None


def _guard(k: float, alpha: float) -> None:
    if not k > 0:
        raise DomainError(f"scaling factor k must be > 0, got {k}")
    if not alpha > 0:
        raise DomainError(f"satisfaction parameter alpha must be > 0, got {alpha}")


def mid_market_prices(schedule: PriceSchedule) -> tuple[float, float]:
    """P2P reference prices: discharge at the grid mid-point, charge with the beta markup."""
    p_d = (schedule.grid_buy + schedule.grid_sell) / 2
    return p_d, (1 + schedule.beta) * p_d


def state1_settlement(
    surplus: float, deficit: float, schedule: PriceSchedule
) -> tuple[float, float]:
    """Return ``(utility, cost)`` of selling surplus and buying deficit at grid rates."""
    if surplus < 0 or deficit < 0:
        raise DomainError(f"surplus and deficit must be >= 0, got {surplus}, {deficit}")
    if surplus > 0 and deficit > 0:
        raise InvariantViolation(
            f"surplus ({surplus}) and deficit ({deficit}) cannot both be positive"
        )
    return schedule.grid_sell * surplus, schedule.grid_buy * deficit


def charge_utility(
    e: float, available_capacity: float, alpha: float, price: float, schedule: PriceSchedule
) -> float:
    """Concave benefit of charging ``e`` kWh minus degradation and purchase cost."""
    return (
        schedule.k * (available_capacity * e - 0.5 * alpha * e * e)
        - (schedule.degradation + price) * e
    )


def discharge_utility(
    e: float, soc: float, alpha: float, price: float, schedule: PriceSchedule
) -> float:
    """Concave benefit of discharging ``e`` kWh plus sale revenue net of degradation."""
    return schedule.k * (soc * e - 0.5 * alpha * e * e) + (price - schedule.degradation) * e


def threshold_charge_price(
    config: ProsumerConfig, battery: BatteryState, schedule: PriceSchedule
) -> float:
    """Highest charging price the prosumer will still pay."""
    return schedule.k * (config.battery_capacity - battery.soc) - schedule.degradation


def threshold_discharge_price(
    config: ProsumerConfig, battery: BatteryState, schedule: PriceSchedule
) -> float:
    """Lowest discharging price that still motivates a sale."""
    return schedule.degradation - schedule.k * battery.soc


def unclamped_charge(
    config: ProsumerConfig, battery: BatteryState, schedule: PriceSchedule, price: float
) -> float:
    _guard(schedule.k, config.alpha)
    gap = threshold_charge_price(config, battery, schedule) - price
    return max(0.0, gap / (schedule.k * config.alpha))


def unclamped_discharge(
    config: ProsumerConfig, battery: BatteryState, schedule: PriceSchedule, price: float
) -> float:
    _guard(schedule.k, config.alpha)
    gap = price - threshold_discharge_price(config, battery, schedule)
    return max(0.0, gap / (schedule.k * config.alpha))


def optimal_charge(
    config: ProsumerConfig,
    battery: BatteryState,
    schedule: PriceSchedule,
    price: float,
    cap: float,
    surplus: float | None = None,
) -> float:
    """Utility-maximising charge at ``price``, clipped to rate, free capacity and surplus.

    Pass ``surplus=None`` to drop the surplus bound.
    """
    e = unclamped_charge(config, battery, schedule, price)
    bound = min(cap, config.battery_capacity - battery.soc)
    if surplus is not None:
        bound = min(bound, surplus)
    return min(e, max(bound, 0.0))


def optimal_discharge(
    config: ProsumerConfig,
    battery: BatteryState,
    schedule: PriceSchedule,
    price: float,
    cap: float,
    deficit: float | None = None,
) -> float:
    """Utility-maximising discharge at ``price``, clipped to rate and usable charge.

    ``deficit`` optionally adds the household-deficit bound; providers in the
    market are called without it.
    """
    e = unclamped_discharge(config, battery, schedule, price)
    bound = min(cap, battery.soc - config.soc_min)
    if deficit is not None:
        bound = min(bound, deficit)
    return min(e, max(bound, 0.0))


def classify_state(
    config: ProsumerConfig,
    battery: BatteryState,
    balance: EnergyBalance,
    schedule: PriceSchedule,
    cleared: ClearedPrices,
    cap: float,
) -> StateDecision:
    """Pick state 1, provider or receiver from the four price cases.

    ``battery`` is the state of charge after self-dispatch. Both attractive
    (case 4) goes to the side with the larger optimal utility; an exact tie
    abstains. A side whose clipped optimum is zero is never chosen.
    """
    if not config.has_battery or balance.deficit > 0:
        return StateDecision(State.STATE1, 0.0, 0.0)

    p_c, p_d = cleared.p_c_mid, cleared.p_d_mid
    wants_charge = p_c < threshold_charge_price(config, battery, schedule)
    wants_discharge = p_d > threshold_discharge_price(config, battery, schedule)
    case = {(True, False): 1, (False, True): 2, (False, False): 3, (True, True): 4}[
        (wants_charge, wants_discharge)
    ]
    if case == 3:
        return StateDecision(State.STATE1, 0.0, 0.0, case)

    e_c = optimal_charge(config, battery, schedule, p_c, cap, balance.surplus)
    e_d = optimal_discharge(config, battery, schedule, p_d, cap)
    u_c = charge_utility(e_c, config.battery_capacity - battery.soc, config.alpha, p_c, schedule)
    u_d = discharge_utility(e_d, battery.soc, config.alpha, p_d, schedule)
    if case == 1:
        u_d, e_d = 0.0, 0.0
    elif case == 2:
        u_c, e_c = 0.0, 0.0

    if e_c > 0 and u_c > u_d:
        return StateDecision(State.RECEIVER, e_c, u_c, case)
    if e_d > 0 and u_d > u_c:
        return StateDecision(State.PROVIDER, e_d, u_d, case)
    return StateDecision(State.STATE1, 0.0, 0.0, case)


def _common_alpha(alphas: Sequence[float]) -> tuple[float, bool]:
    first = alphas[0]
    heterogeneous = any(a != first for a in alphas)
    return math.fsum(alphas) / len(alphas), heterogeneous


def aggregate_supply(
    providers: Sequence[tuple[float, float]], schedule: PriceSchedule, p_d: float
) -> float:
    """Total energy offered by providers given as ``(soc, alpha)`` pairs at price ``p_d``.

    Providers share one satisfaction parameter; differing values are averaged.
    """
    if not providers:
        return 0.0
    alpha_d, _ = _common_alpha([a for _, a in providers])
    _guard(schedule.k, alpha_d)
    K = len(providers)
    total_soc = math.fsum(s for s, _ in providers)
    return total_soc / alpha_d - (schedule.degradation - p_d) * K / (schedule.k * alpha_d)


def aggregate_demand(
    receivers: Sequence[tuple[float, float]], schedule: PriceSchedule, p_c: float
) -> float:
    """Total energy requested by receivers given as ``(free_capacity, alpha)`` pairs."""
    if not receivers:
        return 0.0
    alpha_c, _ = _common_alpha([a for _, a in receivers])
    _guard(schedule.k, alpha_c)
    L = len(receivers)
    total_gap = math.fsum(g for g, _ in receivers)
    return total_gap / alpha_c - (schedule.degradation + p_c) * L / (schedule.k * alpha_c)


def clear_coalition2_prices(
    providers: Sequence[tuple[float, float]],
    receivers: Sequence[tuple[float, float]],
    schedule: PriceSchedule,
    *,
    clamp_to_band: bool = False,
) -> ClearedPrices:
    """Closed-form prices at which aggregate supply equals aggregate demand.

    ``providers`` are ``(soc, alpha)``, ``receivers`` ``(free_capacity, alpha)``.
    A discharge price outside ``[grid_sell, grid_buy]`` is kept and flagged in
    ``warnings`` unless ``clamp_to_band`` is set.
    """
    K, L = len(providers), len(receivers)
    if K == 0 or L == 0:
        raise NoMarketError(f"coalition 2 needs providers and receivers (K={K}, L={L})")
    alpha_d, het_d = _common_alpha([a for _, a in providers])
    alpha_c, het_c = _common_alpha([a for _, a in receivers])
    _guard(schedule.k, alpha_d)
    _guard(schedule.k, alpha_c)
    p_l, k, beta = schedule.degradation, schedule.k, schedule.beta
    total_soc = math.fsum(s for s, _ in providers)
    total_gap = math.fsum(g for g, _ in receivers)

    numerator = p_l * (alpha_c * K - alpha_d * L) - k * (alpha_c * total_soc - alpha_d * total_gap)
    p_d = numerator / (alpha_c * K + alpha_d * (1 + beta) * L)

    notes = []
    if het_d or het_c:
        notes.append("heterogeneous alpha: clearing used per-side mean")
    clamped = False
    if not schedule.grid_sell <= p_d <= schedule.grid_buy:
        notes.append(
            f"discharge price {p_d:.6g} outside grid band "
            f"[{schedule.grid_sell:.6g}, {schedule.grid_buy:.6g}]"
        )
        if clamp_to_band:
            p_d = min(max(p_d, schedule.grid_sell), schedule.grid_buy)
            clamped = True

    mid_d, mid_c = mid_market_prices(schedule)
    return ClearedPrices(
        p_d_mid=mid_d,
        p_c_mid=mid_c,
        p_d_s2=p_d,
        p_c_s2=(1 + beta) * p_d,
        alpha_d=alpha_d,
        alpha_c=alpha_c,
        heterogeneous_alpha=het_d or het_c,
        clamped_to_band=clamped,
        warnings=tuple(notes),
    )


def no_market_prices(schedule: PriceSchedule) -> ClearedPrices:
    mid_d, mid_c = mid_market_prices(schedule)
    return ClearedPrices(p_d_mid=mid_d, p_c_mid=mid_c)
