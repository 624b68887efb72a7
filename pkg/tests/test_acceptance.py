"""Acceptance criteria 1-9, each at its stated tolerance and time budget.

Every criterion records a one-line PASS/FAIL verdict that the terminal
summary prints; run this file directly to see only those lines.
"""

from __future__ import annotations

import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from instances import random_slot  # noqa: E402
from oracles import brute_force_welfare, grid_argmax, u_charge, u_discharge  # noqa: E402
from p2p_coalition import dataio, synthetic  # noqa: E402
from p2p_coalition.coalition import (  # noqa: E402
    balance_supply_demand,
    evaluated_welfare,
    form_coalitions_slot,
    verify_dhp_stability,
)
from p2p_coalition.model import BatteryState, ProsumerConfig  # noqa: E402
from p2p_coalition.pricing import (  # noqa: E402
    PriceSchedule,
    aggregate_demand,
    aggregate_supply,
    clear_coalition2_prices,
    optimal_charge,
    optimal_discharge,
    threshold_charge_price,
    threshold_discharge_price,
)
from p2p_coalition.simulation import compare, fit_baseline, run_simulation  # noqa: E402

RESULTS: dict[int, tuple[bool, str]] = {}

TITLES = {
    1: "closed-form clearing",
    2: "optimum vs grid oracle",
    3: "threshold equality gives zero",
    4: "partition invariant",
    5: "stability",
    6: "welfare vs brute force",
    7: "never detrimental",
    8: "balancing conservation",
    9: "determinism and round-trip",
}


def verdict(n: int) -> str:
    ok, detail = RESULTS[n]
    return f"criterion {n} ({TITLES[n]}): {'PASS' if ok else 'FAIL'} - {detail}"


def verdict_lines() -> list[str]:
    return [verdict(n) for n in sorted(RESULTS)]


def _record(n: int, check) -> None:
    try:
        ok, detail = check()
    except Exception as exc:  # a crash is a failed criterion, reported as such
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    RESULTS[n] = (ok, detail)
    print(verdict(n))
    assert ok, detail


def criterion_1():
    t0 = time.perf_counter()
    s = PriceSchedule(grid_buy=3.0, grid_sell=0.5, beta=0.1, degradation=2.0, k=1.0)
    c = clear_coalition2_prices([(3.0, 1.0)], [(5.0, 1.0)], s)
    worked = (
        abs(c.p_d_s2 - 2 / 2.1) <= 1e-12
        and abs(c.p_c_s2 - 2.2 / 2.1) <= 1e-12
        and abs(aggregate_supply([(3.0, 1.0)], s, c.p_d_s2)
                - aggregate_demand([(5.0, 1.0)], s, c.p_c_s2)) <= 1e-9
    )
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        K, L = rng.integers(1, 21, size=2)
        a_d, a_c = rng.uniform(0.1, 3.0, size=2)
        providers = [(float(x), float(a_d)) for x in rng.uniform(0, 15, K)]
        receivers = [(float(x), float(a_c)) for x in rng.uniform(0, 15, L)]
        sch = PriceSchedule(1.0, 0.0, beta=float(rng.uniform(0, 1)),
                            degradation=float(rng.uniform(0, 1)), k=float(rng.uniform(0.01, 1)))
        cl = clear_coalition2_prices(providers, receivers, sch)
        gap = abs(aggregate_supply(providers, sch, cl.p_d_s2) - aggregate_demand(receivers, sch, cl.p_c_s2))
        worst = max(worst, gap)
    elapsed = time.perf_counter() - t0
    ok = worked and worst <= 1e-9 and elapsed < 1.0
    return ok, f"worked instance {'ok' if worked else 'WRONG'}, max |E_d-E_c| {worst:.2e}, {elapsed:.3f}s"


def criterion_2():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_e, worst_u = 0.0, -math.inf
    for _ in range(1000):
        b = float(rng.uniform(0.5, 15))
        soc_min = float(rng.uniform(0, 0.2)) * b
        soc = float(rng.uniform(soc_min, b))
        cfg = ProsumerConfig("x", battery_capacity=b, alpha=float(rng.uniform(0.1, 3)), soc_min=soc_min)
        sch = PriceSchedule(1.0, 0.0, beta=float(rng.uniform(0, 0.5)),
                            degradation=float(rng.uniform(0, 0.5)), k=float(rng.uniform(0.01, 1)))
        price = float(rng.uniform(-0.5, 1.5))
        cap = float(rng.uniform(0.1, 6))
        surplus = float(rng.uniform(0, 6))
        bat = BatteryState(soc)
        k, p_l, a = sch.k, sch.degradation, cfg.alpha
        gap = b - soc

        e = optimal_charge(cfg, bat, sch, price, cap, surplus)
        f = lambda x: u_charge(x, gap, a, price, k, p_l)  # noqa: E731
        x, best = grid_argmax(f, max(0.0, min(cap, gap, surplus)))
        worst_e, worst_u = max(worst_e, abs(e - x)), max(worst_u, best - f(e))

        e = optimal_discharge(cfg, bat, sch, price, cap)
        f = lambda x: u_discharge(x, soc, a, price, k, p_l)  # noqa: E731
        x, best = grid_argmax(f, max(0.0, min(cap, soc - soc_min)))
        worst_e, worst_u = max(worst_e, abs(e - x)), max(worst_u, best - f(e))
    elapsed = time.perf_counter() - t0
    ok = worst_e <= 2e-3 and worst_u <= 1e-9 and elapsed < 10.0
    return ok, f"max |e*-e_grid| {worst_e:.2e} kWh, max shortfall {worst_u:.2e} $, {elapsed:.2f}s"


def criterion_3():
    rng = np.random.default_rng(3)
    nonzero = 0
    for _ in range(1000):
        b = float(rng.uniform(0.5, 15))
        cfg = ProsumerConfig("x", battery_capacity=b, alpha=float(rng.uniform(0.1, 3)))
        bat = BatteryState(float(rng.uniform(0, b)))
        sch = PriceSchedule(1.0, 0.0, degradation=float(rng.uniform(0, 0.5)), k=float(rng.uniform(0.01, 1)))
        p_nc = threshold_charge_price(cfg, bat, sch)
        p_nd = threshold_discharge_price(cfg, bat, sch)
        nonzero += optimal_charge(cfg, bat, sch, p_nc, 100.0) != 0.0
        nonzero += optimal_discharge(cfg, bat, sch, p_nd, 100.0) != 0.0
    return nonzero == 0, f"{nonzero} non-zero optima out of 2000 threshold evaluations"


def criterion_4():
    cfg, rd = synthetic.make_scenario(n_prosumers=10, n_slots=96, seed=0)
    t0 = time.perf_counter()
    out = run_simulation(cfg, rd)
    elapsed = time.perf_counter() - t0
    bad = 0
    for o in out:
        W, V = o.partition.state1_members, o.partition.coalition2
        bad += bool(W & V) or len(W | V) != 10
    markets = sum(o.cleared.has_market for o in out)
    ok = bad == 0 and len(out) == 96 and elapsed < 1.0
    return ok, f"{bad} bad slots of {len(out)} ({markets} with a market), {elapsed:.3f}s"


def criterion_5():
    unstable, markets = [], 0
    for seed in range(1000):
        roster, bats, reads, sch, lim = random_slot(seed, n_max=20, sunny=seed % 2 == 1)
        _, out, _ = form_coalitions_slot(roster, bats, reads, sch, lim)
        markets += out.cleared.has_market
        if not verify_dhp_stability(out, tol=1e-9).is_dhp_stable:
            unstable.append(seed)
    return not unstable, f"{len(unstable)} unstable of 1000 instances ({markets} with a market)"


def criterion_6():
    t0 = time.perf_counter()
    worst, markets = 0.0, 0
    for seed in range(100):
        roster, bats, reads, sch, lim = random_slot(10_000 + seed, n_max=8, n_min=3 if seed % 2 else 1,
                                                    sunny=seed % 2 == 1)
        _, out, _ = form_coalitions_slot(roster, bats, reads, sch, lim)
        markets += out.cleared.has_market
        worst = max(worst, abs(evaluated_welfare(out) - brute_force_welfare(out)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60.0
    return ok, f"max welfare gap {worst:.2e} $ over 100 instances ({markets} with a market), {elapsed:.2f}s"


def criterion_7():
    worst, trades = math.inf, 0
    for seed in range(100):
        cfg, rd = synthetic.make_scenario(n_prosumers=10, n_slots=96, seed=seed)
        p2p = run_simulation(cfg, rd)
        rep = compare(p2p, fit_baseline(cfg, rd, align_with=p2p))
        worst = min(worst, rep.min_delta)
        trades += int((rep.traded > 0).sum())
    cloudy = 0.0
    for seed in range(100):
        cfg, rd = synthetic.make_scenario(n_prosumers=10, n_slots=96, seed=seed, solar=False)
        p2p = run_simulation(cfg, rd)
        rep = compare(p2p, fit_baseline(cfg, rd, align_with=p2p))
        cloudy = max(cloudy, float(np.abs(rep.delta).max()))
    ok = worst >= -1e-9 and cloudy <= 1e-9
    return ok, f"min delta {worst:.3g} $ over 100 days ({trades} trades), zero-solar max |delta| {cloudy:.2e}"


def criterion_8():
    r = balance_supply_demand({"a": 0.4, "b": 3.0}, {"c": 1.0})
    exhaustion = r.offers["a"] == 0 and "a" in r.reassigned_to_state1
    worst = abs(math.fsum(r.offers.values()) - math.fsum(r.requests.values()))
    rng = np.random.default_rng(8)
    partial = 0
    for _ in range(2000):
        offers = {f"k{i}": float(q) for i, q in enumerate(rng.exponential(2.0, rng.integers(1, 20)))}
        requests = {f"l{i}": float(q) for i, q in enumerate(rng.exponential(2.0, rng.integers(1, 20)))}
        res = balance_supply_demand(offers, requests)
        worst = max(worst, abs(math.fsum(res.offers.values()) - math.fsum(res.requests.values())))
        partial += bool(res.reassigned_to_state1)
    ok = exhaustion and worst <= 1e-9
    return ok, f"max imbalance {worst:.2e} kWh, {partial} random cases with members moved to W"


def _bundle_bytes(directory: Path, seed: int) -> dict[str, bytes]:
    cfg, rd = synthetic.make_scenario(n_prosumers=10, n_slots=96, seed=seed)
    scenario = dataio.parse_scenario(dataio.scenario_bytes(cfg))
    readings = dataio.parse_readings(dataio.readings_to_csv(rd))
    p2p = run_simulation(scenario.config, readings)
    rep = compare(p2p, fit_baseline(scenario.config, readings, align_with=p2p))
    dataio.write_results(dataio.make_bundle(scenario, readings, p2p, rep), directory)
    return {name: (directory / name).read_bytes() for name in dataio.BUNDLE_FILES}


def criterion_9():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        identical = _bundle_bytes(tmp / "a", 9) == _bundle_bytes(tmp / "b", 9)
        _, rd = synthetic.make_scenario(seed=9)
        rng = np.random.default_rng(9)
        rough = dataio.Readings(rd.ids, rd.pv * rng.uniform(0.5, 1.5, rd.pv.shape), rd.demand / 3)
        lossless = True
        for readings in (rd, rough):
            dataio.write_readings(readings, tmp / "r.csv")
            back = dataio.load_readings(tmp / "r.csv")
            lossless &= (back.ids == readings.ids and np.array_equal(back.pv, readings.pv)
                         and np.array_equal(back.demand, readings.demand))
    return identical and lossless, f"bundles identical: {identical}, readings round-trip lossless: {lossless}"


CRITERIA = {n: globals()[f"criterion_{n}"] for n in TITLES}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_acceptance_criterion(n):
    _record(n, CRITERIA[n])


if __name__ == "__main__":
    for n in sorted(CRITERIA):
        RESULTS[n] = CRITERIA[n]()
        print(verdict(n), flush=True)
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
