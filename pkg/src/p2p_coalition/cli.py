"""Command-line entry point.

Exit status is 0 on success, 1 when inputs fail validation (or a check
fails), and 2 on runtime failures such as unreadable or corrupt bundles.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import dataio, synthetic
from .errors import BundleError, ConfigError, DataError, DomainError, NoMarketError, P2PError
from .pricing import PriceSchedule, aggregate_demand, aggregate_supply, clear_coalition2_prices
from .simulation import compare, daily_welfare, fit_baseline, run_simulation

OUT_ENV = "P2P_COALITION_OUT"
DEFAULT_OUT = "results"

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Bad flags are a validation failure, so they share exit status 1.
    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _default_out() -> str:
    return os.environ.get(OUT_ENV, DEFAULT_OUT)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="p2p-coalition",
        description="Coalition-based peer-to-peer battery energy trading simulator.",
        epilog=f"Exit status: 0 success, 1 validation failure, 2 runtime failure. "
        f"--out defaults to ${OUT_ENV} or '{DEFAULT_OUT}'.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, out: bool = True) -> None:
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--readings", required=True, help="readings CSV (prosumer_id,slot,pv_kwh,demand_kwh)")
        if out:
            p.add_argument("--out", default=None, help=f"results directory (default ${OUT_ENV} or '{DEFAULT_OUT}')")
        p.add_argument("--seed", type=int, default=None, help="seed recorded in the manifest (overrides the scenario)")
        p.add_argument("--slots", type=int, default=None, help="simulate only the first N slots")
        p.add_argument("--quiet", action="store_true", help="suppress the summary table")

    p = sub.add_parser("simulate", help="run the P2P market and write a results bundle")
    common(p)
    p = sub.add_parser("baseline", help="run the feed-in-tariff scheme and print daily welfare")
    common(p, out=False)
    p = sub.add_parser("compare", help="P2P against feed-in tariff; exit 1 if anyone is worse off")
    common(p)

    p = sub.add_parser("clear-prices", help="clear coalition-2 prices for a hand-written instance")
    p.add_argument("--config", default=None, help="scenario JSON whose price schedule to use")
    p.add_argument("--instance", required=True,
                   help='JSON {"providers": [{"soc", "alpha"}], "receivers": [{"gap", "alpha"}], "prices"?}')
    p.add_argument("--slot", type=int, default=0, help="slot whose schedule to use (default 0)")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("verify", help="replay stability and never-detrimental checks on a bundle")
    p.add_argument("results", nargs="?", default=None, help=f"bundle directory (default ${OUT_ENV} or '{DEFAULT_OUT}')")
    p.add_argument("--out", dest="results_flag", default=None, help="same as the positional argument")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("gen-data", help="write a synthetic scenario and readings")
    p.add_argument("--out", default=None, help=f"target directory (default ${OUT_ENV} or '{DEFAULT_OUT}')")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slots", type=int, default=96)
    p.add_argument("--prosumers", type=int, default=10)
    p.add_argument("--no-solar", action="store_true", help="fully overcast profiles")
    p.add_argument("--quiet", action="store_true")
    return parser


def _say(args, *lines: str) -> None:
    if not args.quiet:
        for line in lines:
            print(line)


def _load_inputs(args):
    scenario = dataio.load_scenario(args.config)
    readings = dataio.load_readings(args.readings)
    config = scenario.config
    if args.seed is not None:
        config = replace(config, seed=args.seed)
        scenario = dataio.Scenario(config, scenario.output_dir, dataio.scenario_bytes(config, scenario.output_dir))
    if args.slots is not None and args.slots < 1:
        raise UsageError(f"--slots must be >= 1, got {args.slots}")
    return scenario, readings


def _out_dir(args, scenario=None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if scenario is not None and scenario.output_dir:
        return Path(scenario.output_dir)
    return Path(_default_out())


def _daily_table(report) -> list[str]:
    lines = [f"{'day':>4} {'p2p':>12} {'fit':>12} {'delta':>12} {'min_delta':>12}"]
    p2p, fit, delta = report.daily_p2p.sum(axis=1), report.daily_fit.sum(axis=1), report.daily_delta
    for d in range(len(p2p)):
        lines.append(
            f"{d:>4} {p2p[d]:>12.6f} {fit[d]:>12.6f} {p2p[d] - fit[d]:>12.6f} {delta[d].min():>12.6f}"
        )
    return lines


def _run_pair(scenario, readings, slots):
    config = scenario.config
    p2p = run_simulation(config, readings, slots)
    fit = fit_baseline(config, readings, slots, align_with=p2p)
    return p2p, compare(p2p, fit, config.slots_per_day)


def cmd_simulate(args) -> int:
    scenario, readings = _load_inputs(args)
    p2p, report = _run_pair(scenario, readings, args.slots)
    out = dataio.write_results(dataio.make_bundle(scenario, readings, p2p, report), _out_dir(args, scenario))
    trades = sum(o.cleared.has_market for o in p2p)
    _say(args, f"{len(p2p)} slots, {len(report.ids)} prosumers, {trades} slots with a coalition-2 market",
         *_daily_table(report), f"bundle written to {out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    scenario, readings = _load_inputs(args)
    fit = fit_baseline(scenario.config, readings, args.slots)
    spd = scenario.config.slots_per_day
    lines = [f"{'day':>4} {'fit':>12}"]
    lines += [f"{d:>4} {w:>12.6f}" for d, w in enumerate(daily_welfare(fit, spd))]
    _say(args, *lines)
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario, readings = _load_inputs(args)
    p2p, report = _run_pair(scenario, readings, args.slots)
    if args.out:
        dataio.write_results(dataio.make_bundle(scenario, readings, p2p, report), args.out)
    _say(args, *_daily_table(report), f"min per-slot delta {report.min_delta:.3g}")
    if report.violations:
        for t, pid, d in report.violations[:20]:
            print(f"slot {t} prosumer {pid}: delta {d:.6g}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _instance_schedule(args, doc: dict) -> PriceSchedule:
    if "prices" in doc:
        try:
            return PriceSchedule(**doc["prices"])
        except TypeError as exc:
            raise ConfigError("instance.prices", str(exc)) from None
    if args.config is None:
        raise UsageError("give --config or a 'prices' object in the instance")
    return dataio.load_scenario(args.config).config.schedule_at(args.slot)


def cmd_clear_prices(args) -> int:
    try:
        doc = json.loads(Path(args.instance).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("instance", f"cannot read {args.instance}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("instance", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("instance", "top level must be an object")
    schedule = _instance_schedule(args, doc)
    try:
        providers = [(float(p["soc"]), float(p.get("alpha", 1.0))) for p in doc.get("providers", [])]
        receivers = [(float(r["gap"]), float(r.get("alpha", 1.0))) for r in doc.get("receivers", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("instance", f"providers need soc, receivers need gap ({exc})") from None
    cleared = clear_coalition2_prices(providers, receivers, schedule)
    supply = aggregate_supply(providers, schedule, cleared.p_d_s2)
    demand = aggregate_demand(receivers, schedule, cleared.p_c_s2)
    _say(
        args,
        f"p_d_s2 {cleared.p_d_s2:.12g}",
        f"p_c_s2 {cleared.p_c_s2:.12g}",
        f"supply {supply:.12g}",
        f"demand {demand:.12g}",
        *(f"warning: {w}" for w in cleared.warnings),
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    directory = Path(args.results or args.results_flag or _default_out())
    bundle = dataio.load_results(directory)
    deviations = dataio.verify_bundle(bundle)
    if deviations:
        print(f"{'slot':>5} {'prosumer':>10} {'check':>18}  detail")
        for d in deviations:
            print(f"{d.slot:>5} {d.prosumer_id:>10} {d.check:>18}  {d.detail}")
        return EXIT_INVALID
    _say(args, f"{directory}: {len(bundle.outcomes)} rows, stable and never detrimental")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    if args.prosumers < 1 or args.slots < 1:
        raise UsageError("--prosumers and --slots must be >= 1")
    config, readings = synthetic.make_scenario(args.prosumers, args.slots, args.seed, solar=not args.no_solar)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_scenario(config, out / "config.json")
    dataio.write_readings(readings, out / "readings.csv")
    _say(args, f"wrote {out / 'config.json'} and {out / 'readings.csv'}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "baseline": cmd_baseline,
    "compare": cmd_compare,
    "clear-prices": cmd_clear_prices,
    "verify": cmd_verify,
    "gen-data": cmd_gen_data,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except BundleError as exc:
        print(f"error: corrupt results bundle: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except NoMarketError as exc:
        print(f"error: no market: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, DataError, UsageError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (P2PError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
