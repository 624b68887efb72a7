"""Coalition-based peer-to-peer battery energy trading among prosumers."""

from .coalition import (
    BalanceResult,
    Partition,
    ProsumerOutcome,
    SlotOutcome,
    StabilityReport,
    Transition,
    balance_supply_demand,
    evaluated_welfare,
    form_coalitions_slot,
    pareto_prefers,
    social_welfare,
    verify_dhp_stability,
)
from .dataio import (
    ResultsBundle,
    Scenario,
    load_readings,
    load_results,
    load_scenario,
    make_bundle,
    verify_bundle,
    write_readings,
    write_results,
    write_scenario,
)
from .errors import (
    BundleError,
    ConfigError,
    DataError,
    DomainError,
    DuplicateKeyError,
    InvariantViolation,
    MalformedRowError,
    NegativeValueError,
    NoMarketError,
    P2PError,
    SlotGapError,
)
from .model import (
    BatteryState,
    CombinerMode,
    EnergyBalance,
    NetworkLimits,
    ProsumerConfig,
    SlotReading,
    effective_transfer_cap,
    self_consumption,
    settle_slot_energy,
)
from .pricing import (
    ClearedPrices,
    PriceSchedule,
    State,
    classify_state,
    clear_coalition2_prices,
    mid_market_prices,
    optimal_charge,
    optimal_discharge,
    state1_settlement,
)
from .simulation import (
    ComparisonReport,
    Readings,
    SimulationConfig,
    compare,
    daily_welfare,
    fit_baseline,
    run_simulation,
)

__version__ = "0.1.0"
