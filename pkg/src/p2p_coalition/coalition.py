"""Per-slot coalition formation, supply/demand balancing and stability checks.

Every slot ends with exactly two coalitions: ``W`` (state 1, battery kept
out of the market) and ``V = K | L`` (state 2, providers discharging to
sell and receivers charging to buy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import DomainError, InvariantViolation
from .model import (
    BatteryState,
    EnergyBalance,
    NetworkLimits,
    ProsumerConfig,
    SlotReading,
    effective_transfer_cap,
    settle_slot_energy,
)
from .pricing import (
    ClearedPrices,
    PriceSchedule,
    State,
    charge_utility,
    classify_state,
    clear_coalition2_prices,
    discharge_utility,
    no_market_prices,
    optimal_charge,
    optimal_discharge,
    state1_settlement,
)

BALANCE_TOL = 1e-9
STABILITY_TOL = 1e-9
_ZERO = 1e-12

STATE1_MODES = ("direct", "matched")

# Reasons a prosumer with a battery ends a slot in W although it could trade.
# The realised market, not the prosumer's preference, kept it out.
EXCLUSION_REASONS = frozenset({"tie", "no_market", "zero_at_clearing", "balancing"})


@dataclass(frozen=True)
class Partition:
    state1_members: frozenset[str]
    providers: frozenset[str]
    receivers: frozenset[str]
    slot_index: int = 0

    @property
    def coalition2(self) -> frozenset[str]:
        return self.providers | self.receivers

    def state_of(self, prosumer_id: str) -> State:
        if prosumer_id in self.providers:
            return State.PROVIDER
        if prosumer_id in self.receivers:
            return State.RECEIVER
        return State.STATE1

    def check(self, ids: Iterable[str]) -> None:
        ids = set(ids)
        W, K, L = self.state1_members, self.providers, self.receivers
        if W & K or W & L or K & L:
            raise InvariantViolation(f"slot {self.slot_index}: W, K and L overlap")
        if W | K | L != ids:
            raise InvariantViolation(
                f"slot {self.slot_index}: partition covers {sorted(W | K | L)}, "
                f"expected {sorted(ids)}"
            )

    @classmethod
    def grand_state1(cls, ids: Iterable[str], slot_index: int = 0) -> "Partition":
        return cls(frozenset(ids), frozenset(), frozenset(), slot_index)


@dataclass(frozen=True)
class Transition:
    prosumer_id: str
    previous_state: State
    new_state: State
    moves: tuple[str, ...]


@dataclass(frozen=True)
class ProsumerOutcome:
    """Everything one prosumer did and earned in one slot."""

    id: str
    config: ProsumerConfig
    state: State
    reason: str
    reading: SlotReading
    soc_start: float
    balance: EnergyBalance
    cap: float
    traded: float
    battery_utility: float
    utility: float
    cost: float
    soc_end: float

    @property
    def net_benefit(self) -> float:
        return self.utility - self.cost

    @property
    def soc_after_dispatch(self) -> float:
        return self.balance.soc_after

    @property
    def excluded(self) -> bool:
        return self.reason in EXCLUSION_REASONS


@dataclass(frozen=True)
class SlotOutcome:
    slot: int
    schedule: PriceSchedule
    cleared: ClearedPrices
    partition: Partition
    prosumers: tuple[ProsumerOutcome, ...] = ()
    transitions: tuple[Transition, ...] = ()

    def by_id(self) -> dict[str, ProsumerOutcome]:
        return {p.id: p for p in self.prosumers}


@dataclass(frozen=True)
class BalanceResult:
    offers: dict[str, float]
    requests: dict[str, float]
    reassigned_to_state1: frozenset[str]
    passes: int = 0


@dataclass(frozen=True)
class StabilityReport:
    violating_deviations: tuple[tuple[str, State, float], ...] = field(default=())

    @property
    def is_dhp_stable(self) -> bool:
        return not self.violating_deviations


def pareto_prefers(a: Mapping[str, float], b: Mapping[str, float]) -> bool:
    """True when nobody is worse off under ``a`` than ``b`` and someone is better off."""
    if set(a) != set(b):
        raise DomainError(f"assignments cover different prosumers: {sorted(set(a) ^ set(b))}")
    return all(a[n] >= b[n] for n in a) and any(a[n] > b[n] for n in a)


def _cut_pass(quantities: dict[str, float], excess: float) -> None:
    active = [n for n, q in quantities.items() if q > 0]
    share = excess / len(active)
    for n in active:
        q = quantities[n] - min(quantities[n], share)
        quantities[n] = 0.0 if q <= _ZERO else q


def balance_supply_demand(
    provider_offers: Mapping[str, float], receiver_requests: Mapping[str, float]
) -> BalanceResult:
    """Trim the long side of coalition 2 until offered and requested energy match.

    Each pass removes the current excess in equal shares, never taking a
    member below zero; passes repeat until the residual is within
    ``BALANCE_TOL``. Members left with nothing are reassigned to state 1, and
    if one side is empty the whole other side is.
    """
    for name, values in (("offer", provider_offers), ("request", receiver_requests)):
        for n, q in values.items():
            if not q >= 0 or not math.isfinite(q):
                raise DomainError(f"{name} of {n!r} must be finite and >= 0, got {q}")
    offers = {n: float(q) for n, q in provider_offers.items()}
    requests = {n: float(q) for n, q in receiver_requests.items()}

    passes = 0
    if any(q > 0 for q in offers.values()) and any(q > 0 for q in requests.values()):
        while True:
            supply, demand = math.fsum(offers.values()), math.fsum(requests.values())
            if abs(supply - demand) <= BALANCE_TOL:
                break
            passes += 1
            if supply > demand:
                _cut_pass(offers, supply - demand)
            else:
                _cut_pass(requests, demand - supply)
    else:
        offers = dict.fromkeys(offers, 0.0)
        requests = dict.fromkeys(requests, 0.0)

    dropped = frozenset(n for n, q in (*offers.items(), *requests.items()) if q == 0)
    return BalanceResult(offers, requests, dropped, passes)


def _state1_terms(
    balances: Sequence[EnergyBalance], schedule: PriceSchedule, mode: str, p_mid: float
) -> list[tuple[float, float]]:
    if mode == "direct":
        return [state1_settlement(b.surplus, b.deficit, schedule) for b in balances]
    if mode != "matched":
        raise DomainError(f"unknown state-1 settlement mode {mode!r}; use one of {STATE1_MODES}")
    # Solar surplus and household deficit are pooled; matched energy trades at the
    # mid-market rate pro rata, the remainder goes to the grid.
    supply = math.fsum(b.surplus for b in balances)
    demand = math.fsum(b.deficit for b in balances)
    matched = min(supply, demand)
    terms = []
    for b in balances:
        state1_settlement(b.surplus, b.deficit, schedule)
        sold = b.surplus * matched / supply if supply > 0 else 0.0
        bought = b.deficit * matched / demand if demand > 0 else 0.0
        utility = p_mid * sold + schedule.grid_sell * (b.surplus - sold)
        cost = p_mid * bought + schedule.grid_buy * (b.deficit - bought)
        terms.append((utility, cost))
    return terms


def form_coalitions_slot(
    prosumers: Sequence[ProsumerConfig],
    batteries: Mapping[str, BatteryState],
    readings: Mapping[str, SlotReading],
    schedule: PriceSchedule,
    limits: NetworkLimits,
    previous_partition: Partition | None = None,
    *,
    slot: int = 0,
    state1_mode: str = "direct",
    clamp_to_band: bool = False,
) -> tuple[Partition, SlotOutcome, tuple[Transition, ...]]:
    """Run one slot of coalition formation and settlement.

    1. Mid-market prices; every prosumer self-dispatches its battery.
    2. Deficit or battery-less prosumers stay in W; the rest pick a state
       from the price cases at the mid-market prices.
    3. If both sides are non-empty, coalition-2 prices are cleared on them
       and each candidate's quantity is its optimum at the cleared price.
    4. Offers and requests are balanced; anyone left with zero joins W.
    5. Battery trades settle at the cleared prices, solar surplus and
       deficit at grid (or pooled mid-market) rates.

    ``previous_partition`` only feeds the transition log; ``None`` means
    everyone was in W.
    """
    ids = [p.id for p in prosumers]
    if len(set(ids)) != len(ids):
        raise DomainError("prosumer ids must be unique")

    mid = no_market_prices(schedule)
    caps: dict[str, float] = {}
    balances: dict[str, EnergyBalance] = {}
    after: dict[str, BatteryState] = {}
    reasons: dict[str, str] = {}
    candidates: dict[str, State] = {}
    for cfg in prosumers:
        n = cfg.id
        caps[n] = effective_transfer_cap(cfg, limits)
        balances[n] = settle_slot_energy(cfg, batteries[n], readings[n], limits)
        after[n] = BatteryState(balances[n].soc_after)
        if not cfg.has_battery:
            reasons[n] = "no_battery"
        elif balances[n].deficit > 0:
            reasons[n] = "deficit"
        else:
            decision = classify_state(cfg, after[n], balances[n], schedule, mid, caps[n])
            if decision.state is not State.STATE1:
                candidates[n] = decision.state
            elif decision.case == 4 and _is_tie(cfg, after[n], balances[n], schedule, mid, caps[n]):
                reasons[n] = "tie"
            else:
                reasons[n] = "price_case"

    by_id = {cfg.id: cfg for cfg in prosumers}
    providers = [n for n in ids if candidates.get(n) is State.PROVIDER]
    receivers = [n for n in ids if candidates.get(n) is State.RECEIVER]
    traded: dict[str, float] = {}
    cleared = mid
    if providers and receivers:
        priced = clear_coalition2_prices(
            [(after[n].soc, by_id[n].alpha) for n in providers],
            [(by_id[m].battery_capacity - after[m].soc, by_id[m].alpha) for m in receivers],
            schedule,
            clamp_to_band=clamp_to_band,
        )
        offers = {
            n: optimal_discharge(by_id[n], after[n], schedule, priced.p_d_s2, caps[n])
            for n in providers
        }
        requests = {
            m: optimal_charge(
                by_id[m], after[m], schedule, priced.p_c_s2, caps[m], balances[m].surplus
            )
            for m in receivers
        }
        for n, q in (*offers.items(), *requests.items()):
            if q <= 0:
                reasons[n] = "zero_at_clearing"
        result = balance_supply_demand(
            {n: q for n, q in offers.items() if q > 0},
            {m: q for m, q in requests.items() if q > 0},
        )
        traded = {n: q for n, q in (*result.offers.items(), *result.requests.items()) if q > 0}
        if traded:
            cleared = priced
            for n in result.reassigned_to_state1:
                reasons[n] = "balancing"
        else:
            for n in candidates:
                if reasons.get(n) != "zero_at_clearing":
                    reasons[n] = "no_market"
    else:
        for n in candidates:
            reasons[n] = "no_market"

    final = {n: candidates[n] if n in traded else State.STATE1 for n in ids}
    for n in traded:
        reasons[n] = "traded"
    partition = Partition(
        state1_members=frozenset(n for n in ids if final[n] is State.STATE1),
        providers=frozenset(n for n in ids if final[n] is State.PROVIDER),
        receivers=frozenset(n for n in ids if final[n] is State.RECEIVER),
        slot_index=slot,
    )
    partition.check(ids)

    transitions = []
    for n in ids:
        before = previous_partition.state_of(n) if previous_partition else State.STATE1
        changed = before.in_coalition2 != final[n].in_coalition2
        transitions.append(Transition(n, before, final[n], ("split", "merge") if changed else ("stay",)))

    terms = _state1_terms([balances[n] for n in ids], schedule, state1_mode, mid.p_d_mid)
    records = []
    for cfg, (u1, c1) in zip(prosumers, terms):
        n = cfg.id
        q = traded.get(n, 0.0)
        soc = after[n].soc
        if final[n] is State.PROVIDER:
            u2 = discharge_utility(q, soc, cfg.alpha, cleared.p_d_s2, schedule)
            soc_end = max(cfg.soc_min, soc - cfg.charge_efficiency * q)
        elif final[n] is State.RECEIVER:
            u2 = charge_utility(q, cfg.battery_capacity - soc, cfg.alpha, cleared.p_c_s2, schedule)
            soc_end = min(cfg.battery_capacity, soc + cfg.charge_efficiency * q)
        else:
            u2, soc_end = 0.0, soc
        records.append(
            ProsumerOutcome(
                id=n,
                config=cfg,
                state=final[n],
                reason=reasons[n],
                reading=readings[n],
                soc_start=batteries[n].soc,
                balance=balances[n],
                cap=caps[n],
                traded=q,
                battery_utility=u2,
                utility=u1 + u2,
                cost=c1,
                soc_end=soc_end,
            )
        )
    outcome = SlotOutcome(
        slot=slot,
        schedule=schedule,
        cleared=cleared,
        partition=partition,
        prosumers=tuple(records),
        transitions=tuple(transitions),
    )
    return partition, outcome, outcome.transitions


def _is_tie(cfg, battery, balance, schedule, cleared, cap) -> bool:
    utils = state_utilities(cfg, battery, balance, cap, schedule, cleared)
    u_c, u_d = utils[State.RECEIVER], utils[State.PROVIDER]
    return u_c > 0 and u_c == u_d


def state_utilities(
    config: ProsumerConfig,
    battery: BatteryState,
    balance: EnergyBalance,
    cap: float,
    schedule: PriceSchedule,
    cleared: ClearedPrices,
) -> dict[State, float]:
    """Battery utility of each state for a price-taker at the decision prices.

    State 1 earns nothing from the battery; each coalition-2 role earns its
    utility at the optimal clipped quantity. ``battery`` is the post-dispatch
    state of charge.
    """
    p_c, p_d = cleared.p_c_mid, cleared.p_d_mid
    e_c = optimal_charge(config, battery, schedule, p_c, cap, balance.surplus)
    e_d = optimal_discharge(config, battery, schedule, p_d, cap)
    return {
        State.STATE1: 0.0,
        State.RECEIVER: charge_utility(
            e_c, config.battery_capacity - battery.soc, config.alpha, p_c, schedule
        ),
        State.PROVIDER: discharge_utility(e_d, battery.soc, config.alpha, p_d, schedule),
    }


def feasible_states(record: ProsumerOutcome) -> tuple[State, ...]:
    """States a prosumer may take: coalition 2 needs a battery, no deficit, and market room."""
    if not record.config.has_battery or record.balance.deficit > 0 or record.excluded:
        return (State.STATE1,)
    return (State.STATE1, State.PROVIDER, State.RECEIVER)


def _record_utilities(record: ProsumerOutcome, outcome: SlotOutcome, cleared: ClearedPrices):
    return state_utilities(
        record.config,
        BatteryState(record.soc_after_dispatch),
        record.balance,
        record.cap,
        outcome.schedule,
        cleared,
    )


def verify_dhp_stability(
    outcome: SlotOutcome, cleared: ClearedPrices | None = None, tol: float = STABILITY_TOL
) -> StabilityReport:
    """List every unilateral state change that would pay a prosumer more than ``tol``.

    Prices are held at the decision prices in ``cleared`` (price-taking); a
    prosumer the market excluded from coalition 2 can only stay in state 1.
    """
    cleared = cleared or outcome.cleared
    violations = []
    for record in outcome.prosumers:
        utils = _record_utilities(record, outcome, cleared)
        current = utils[record.state]
        for alternative in feasible_states(record):
            if alternative is record.state:
                continue
            gain = utils[alternative] - current
            if gain > tol:
                violations.append((record.id, alternative, gain))
    return StabilityReport(tuple(violations))


def social_welfare(outcome: SlotOutcome) -> float:
    """Sum of every prosumer's realised net benefit in the slot."""
    return math.fsum(p.net_benefit for p in outcome.prosumers)


def evaluated_welfare(
    outcome: SlotOutcome,
    assignment: Mapping[str, State] | None = None,
    cleared: ClearedPrices | None = None,
) -> float:
    """Welfare of a state assignment under the fixed-price evaluation used by the verifier.

    Each prosumer contributes its solar settlement plus the price-taking
    battery utility of its assigned state. ``assignment=None`` scores the
    outcome's own states.
    """
    cleared = cleared or outcome.cleared
    total = []
    for record in outcome.prosumers:
        state = assignment[record.id] if assignment is not None else record.state
        solar = record.utility - record.battery_utility - record.cost
        total.append(solar + _record_utilities(record, outcome, cleared)[state])
    return math.fsum(total)
