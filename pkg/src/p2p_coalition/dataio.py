"""Readings CSV, scenario JSON and results-bundle files.

Readings are one row per ``(prosumer_id, slot, pv_kwh, demand_kwh)``.
Scenarios are JSON documents holding the roster, prices, network limits
and run options. A results bundle is a directory with three CSV tables,
a copy of the scenario and a ``manifest.json``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .coalition import ProsumerOutcome, SlotOutcome, verify_dhp_stability
from .errors import (
    BundleError,
    ConfigError,
    DataError,
    DuplicateKeyError,
    MalformedRowError,
    NegativeValueError,
    SlotGapError,
)
from .model import CombinerMode, EnergyBalance, NetworkLimits, ProsumerConfig, SlotReading
from .pricing import ClearedPrices, PriceSchedule, State, state1_settlement
from .simulation import DELTA_TOL, ComparisonReport, Readings, SimulationConfig

READINGS_HEADER = ("prosumer_id", "slot", "pv_kwh", "demand_kwh")

OUTCOME_COLUMNS = (
    "slot", "prosumer_id", "state", "reason", "pv_kwh", "demand_kwh", "soc_start",
    "charged", "discharged", "self_consumption", "surplus", "deficit",
    "soc_after_dispatch", "cap", "traded", "soc_end", "p_d_mid", "p_c_mid",
    "p_d_s2", "p_c_s2", "battery_utility", "utility", "cost", "net_benefit",
)
PARTITION_COLUMNS = ("slot", "prosumer_id", "coalition", "state", "previous_state", "moves")
COMPARISON_COLUMNS = (
    "slot", "day", "prosumer_id", "p2p_net", "fit_net", "delta", "traded", "prosumer_min_delta",
)

BUNDLE_FILES = ("outcomes.csv", "partitions.csv", "comparison.csv", "config.json", "manifest.json")
FORMAT_VERSION = 1


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fmt(value: float | None) -> str:
    """Twelve significant digits; ``None`` becomes an empty cell and ``-0`` becomes ``0``."""
    if value is None:
        return ""
    value = float(value)
    if value == 0:
        return "0"
    return f"{value:.12g}"


# ---------------------------------------------------------------- readings


def _parse_float(text: str, column: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRowError(f"{column} is not a number: {text!r}", row) from None
    if not math.isfinite(value):
        raise MalformedRowError(f"{column} must be finite, got {text!r}", row)
    if value < 0:
        raise NegativeValueError(f"{column} must be >= 0, got {text}", row)
    return value


def parse_readings(text: str) -> Readings:
    """Parse readings CSV text. Row numbers in errors count the header as row 1."""
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or tuple(h.strip() for h in header) != READINGS_HEADER:
        raise MalformedRowError(f"header must be {','.join(READINGS_HEADER)}, got {header}", 1)

    values: dict[tuple[str, int], tuple[float, float]] = {}
    first_row: dict[tuple[str, int], int] = {}
    ids: list[str] = []
    for row_no, row in enumerate(rows, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(READINGS_HEADER):
            raise MalformedRowError(f"expected {len(READINGS_HEADER)} fields, got {len(row)}", row_no)
        pid, slot_text = row[0].strip(), row[1].strip()
        if not pid:
            raise MalformedRowError("empty prosumer_id", row_no)
        try:
            slot = int(slot_text)
        except ValueError:
            raise MalformedRowError(f"slot is not an integer: {slot_text!r}", row_no) from None
        if slot < 0:
            raise NegativeValueError(f"slot must be >= 0, got {slot}", row_no)
        pv = _parse_float(row[2].strip(), "pv_kwh", row_no)
        demand = _parse_float(row[3].strip(), "demand_kwh", row_no)
        key = (pid, slot)
        if key in values:
            raise DuplicateKeyError(
                f"duplicate reading for prosumer {pid!r} slot {slot} (first at row {first_row[key]})",
                row_no,
            )
        if pid not in ids:
            ids.append(pid)
        values[key] = (pv, demand)
        first_row[key] = row_no

    if not values:
        raise MalformedRowError("no readings after the header", 2)
    n_slots = max(slot for _, slot in values) + 1
    for pid in ids:
        for slot in range(n_slots):
            if (pid, slot) not in values:
                raise SlotGapError(pid, slot)

    pv = np.empty((n_slots, len(ids)))
    demand = np.empty((n_slots, len(ids)))
    for j, pid in enumerate(ids):
        for slot in range(n_slots):
            pv[slot, j], demand[slot, j] = values[(pid, slot)]
    return Readings(tuple(ids), pv, demand)


def load_readings(path: str | os.PathLike) -> Readings:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read readings {path}: {exc.strerror or exc}") from exc
    try:
        return parse_readings(text)
    except DataError as exc:
        exc.args = (f"{path}: {exc.args[0]}",) + exc.args[1:]
        raise


def readings_to_csv(readings: Readings) -> str:
    """Prosumer-major CSV; ``repr`` floats so that parsing returns the same values."""
    if np.isnan(readings.pv).any() or np.isnan(readings.demand).any():
        raise DataError("cannot write readings with missing values")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(READINGS_HEADER)
    for j, pid in enumerate(readings.ids):
        for t in range(readings.n_slots):
            writer.writerow((pid, t, repr(float(readings.pv[t, j])), repr(float(readings.demand[t, j]))))
    return out.getvalue()


def write_readings(readings: Readings, path: str | os.PathLike) -> None:
    _write_text(Path(path), readings_to_csv(readings))


# ---------------------------------------------------------------- scenarios

_PROSUMER_KEYS = (
    "id", "battery_capacity", "alpha", "soc_min", "rated_rate", "charge_efficiency", "initial_soc",
)
_PRICE_KEYS = ("grid_buy", "grid_sell", "beta", "degradation", "k")
_SIM_KEYS = ("slots_per_day", "seed", "state1_mode", "clamp_to_band", "slot_minutes")


@dataclass(frozen=True)
class Scenario:
    """A loaded scenario: the run configuration plus the exact bytes it came from."""

    config: SimulationConfig
    output_dir: str | None
    raw: bytes

    @property
    def sha256(self) -> str:
        return sha256_bytes(self.raw)


def _section(doc: dict, key: str, required: bool = True) -> dict:
    if key not in doc:
        if required:
            raise ConfigError(key, "missing section")
        return {}
    value = doc[key]
    if not isinstance(value, dict):
        raise ConfigError(key, f"expected an object, got {type(value).__name__}")
    return value


def _unknown(section: dict, allowed: tuple[str, ...], where: str) -> None:
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(where, f"unknown keys {extra}")


def _prefixed(where: str, exc: ConfigError) -> ConfigError:
    return ConfigError(f"{where}.{exc.field}", str(exc).split(": ", 1)[-1])


def _price_schedules(prices: dict) -> tuple[PriceSchedule, ...]:
    _unknown(prices, _PRICE_KEYS, "prices")
    for key in ("grid_buy", "grid_sell"):
        if key not in prices:
            raise ConfigError(f"prices.{key}", "missing")
    lengths = {len(v) for v in prices.values() if isinstance(v, list)}
    if len(lengths) > 1:
        raise ConfigError("prices", f"per-slot price lists differ in length: {sorted(lengths)}")
    n = lengths.pop() if lengths else 1
    if n == 0:
        raise ConfigError("prices", "per-slot price lists are empty")
    schedules = []
    for t in range(n):
        values = {k: (v[t] if isinstance(v, list) else v) for k, v in prices.items()}
        try:
            schedules.append(PriceSchedule(**values))
        except ConfigError as exc:
            where = f"prices[{t}]" if lengths or n > 1 else "prices"
            raise _prefixed(where, exc) from None
    return tuple(schedules)


def scenario_from_dict(doc: Any) -> tuple[SimulationConfig, str | None]:
    if not isinstance(doc, dict):
        raise ConfigError("scenario", "top level must be a JSON object")
    _unknown(doc, ("prosumers", "prices", "network", "simulation", "output"), "scenario")

    roster_doc = doc.get("prosumers")
    if not isinstance(roster_doc, list) or not roster_doc:
        raise ConfigError("prosumers", "must be a non-empty list")
    roster = []
    for i, entry in enumerate(roster_doc):
        where = f"prosumers[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(where, "expected an object")
        _unknown(entry, _PROSUMER_KEYS, where)
        if "id" not in entry:
            raise ConfigError(f"{where}.id", "missing")
        try:
            roster.append(ProsumerConfig(**entry))
        except ConfigError as exc:
            raise _prefixed(where, exc) from None

    schedules = _price_schedules(_section(doc, "prices"))

    network = _section(doc, "network", required=False)
    _unknown(network, ("transfer_limit", "combiner_mode"), "network")
    mode = network.get("combiner_mode", CombinerMode.PER_PAPER_MAX.value)
    try:
        mode = CombinerMode(mode)
    except ValueError:
        choices = [m.value for m in CombinerMode]
        raise ConfigError("network.combiner_mode", f"must be one of {choices}, got {mode!r}") from None
    try:
        limits = NetworkLimits(network.get("transfer_limit", 0.0), mode)
    except ConfigError as exc:
        raise _prefixed("network", exc) from None

    sim = _section(doc, "simulation", required=False)
    _unknown(sim, _SIM_KEYS, "simulation")
    seed = sim.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError("simulation.seed", f"must be an integer, got {seed!r}")
    spd = sim.get("slots_per_day", 96)
    if isinstance(spd, bool) or not isinstance(spd, int):
        raise ConfigError("simulation.slots_per_day", f"must be an integer, got {spd!r}")
    try:
        config = SimulationConfig(
            roster=tuple(roster),
            prices=schedules,
            limits=limits,
            slots_per_day=spd,
            seed=seed,
            state1_mode=sim.get("state1_mode", "direct"),
            clamp_to_band=bool(sim.get("clamp_to_band", False)),
            slot_minutes=float(sim.get("slot_minutes", 15.0)),
        )
    except ConfigError as exc:
        raise _prefixed("simulation", exc) from None

    output = _section(doc, "output", required=False)
    _unknown(output, ("directory",), "output")
    return config, output.get("directory")


def scenario_to_dict(config: SimulationConfig, output_dir: str | None = None) -> dict:
    prosumers = []
    for p in config.roster:
        entry = {k: getattr(p, k) for k in _PROSUMER_KEYS}
        if entry["initial_soc"] is None:
            del entry["initial_soc"]
        prosumers.append(entry)
    if len(config.prices) == 1:
        prices = {k: getattr(config.prices[0], k) for k in _PRICE_KEYS}
    else:
        prices = {k: [getattr(s, k) for s in config.prices] for k in _PRICE_KEYS}
    doc = {
        "prosumers": prosumers,
        "prices": prices,
        "network": {
            "transfer_limit": config.limits.transfer_limit,
            "combiner_mode": config.limits.combiner_mode.value,
        },
        "simulation": {k: getattr(config, k) for k in _SIM_KEYS},
    }
    if output_dir is not None:
        doc["output"] = {"directory": output_dir}
    return doc


def scenario_bytes(config: SimulationConfig, output_dir: str | None = None) -> bytes:
    text = json.dumps(scenario_to_dict(config, output_dir), indent=2, sort_keys=True)
    return (text + "\n").encode("utf-8")


def parse_scenario(raw: bytes) -> Scenario:
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError("scenario", f"not valid JSON: {exc}") from None
    config, output_dir = scenario_from_dict(doc)
    return Scenario(config, output_dir, raw)


def load_scenario(path: str | os.PathLike) -> Scenario:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read scenario: {exc.strerror or exc}") from exc
    return parse_scenario(raw)


def write_scenario(config: SimulationConfig, path: str | os.PathLike, output_dir: str | None = None) -> None:
    _write_bytes(Path(path), scenario_bytes(config, output_dir))


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class ResultsBundle:
    """Everything a results directory holds, still in memory."""

    scenario: Scenario
    readings_sha256: str
    p2p: list[SlotOutcome]
    comparison: ComparisonReport

    @property
    def n_prosumers(self) -> int:
        return len(self.comparison.ids)

    @property
    def n_slots(self) -> int:
        return len(self.p2p)


def make_bundle(
    scenario: Scenario | SimulationConfig,
    readings: Readings,
    p2p: list[SlotOutcome],
    comparison: ComparisonReport,
) -> ResultsBundle:
    if isinstance(scenario, SimulationConfig):
        scenario = Scenario(scenario, None, scenario_bytes(scenario))
    digest = sha256_bytes(readings_to_csv(readings).encode("utf-8"))
    return ResultsBundle(scenario, digest, p2p, comparison)


def _csv_text(columns: tuple[str, ...], rows: list[list[str]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return out.getvalue()


def _outcome_rows(bundle: ResultsBundle) -> list[list[str]]:
    rows = []
    for o in bundle.p2p:
        c = o.cleared
        for r in o.prosumers:
            b = r.balance
            rows.append([
                str(o.slot), r.id, r.state.value, r.reason,
                fmt(r.reading.pv), fmt(r.reading.household_demand), fmt(r.soc_start),
                fmt(b.charged), fmt(b.discharged), fmt(b.self_consumption),
                fmt(b.surplus), fmt(b.deficit), fmt(b.soc_after), fmt(r.cap),
                fmt(r.traded), fmt(r.soc_end), fmt(c.p_d_mid), fmt(c.p_c_mid),
                fmt(c.p_d_s2), fmt(c.p_c_s2), fmt(r.battery_utility),
                fmt(r.utility), fmt(r.cost), fmt(r.net_benefit),
            ])
    return rows


def _partition_rows(bundle: ResultsBundle) -> list[list[str]]:
    rows = []
    for o in bundle.p2p:
        moves = {t.prosumer_id: t for t in o.transitions}
        for r in o.prosumers:
            t = moves.get(r.id)
            rows.append([
                str(o.slot), r.id, "V" if r.state.in_coalition2 else "W", r.state.value,
                t.previous_state.value if t else "", "+".join(t.moves) if t else "",
            ])
    return rows


def _comparison_rows(bundle: ResultsBundle) -> list[list[str]]:
    rep = bundle.comparison
    delta = rep.delta
    per_prosumer_min = delta.min(axis=0)
    slots = [o.slot for o in bundle.p2p]
    rows = []
    for t, slot in enumerate(slots):
        for j, pid in enumerate(rep.ids):
            rows.append([
                str(slot), str(slot // rep.slots_per_day), pid,
                fmt(rep.p2p_net[t, j]), fmt(rep.fit_net[t, j]), fmt(delta[t, j]),
                fmt(rep.traded[t, j]), fmt(per_prosumer_min[j]),
            ])
    return rows


def manifest_dict(bundle: ResultsBundle) -> dict:
    config = bundle.scenario.config
    rep = bundle.comparison
    return {
        "format_version": FORMAT_VERSION,
        "config_sha256": bundle.scenario.sha256,
        "readings_sha256": bundle.readings_sha256,
        "seed": config.seed,
        "n_prosumers": bundle.n_prosumers,
        "n_slots": bundle.n_slots,
        "slots_per_day": config.slots_per_day,
        "slot_minutes": config.slot_minutes,
        "rows": bundle.n_prosumers * bundle.n_slots,
        "min_delta": rep.min_delta,
        "daily_p2p_welfare": [float(x) for x in rep.daily_p2p.sum(axis=1)],
        "daily_fit_welfare": [float(x) for x in rep.daily_fit.sum(axis=1)],
        "config": json.loads(bundle.scenario.raw.decode("utf-8")),
    }


def write_results(bundle: ResultsBundle, directory: str | os.PathLike) -> Path:
    """Write the bundle files into ``directory`` (created if needed) and return its path."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create results directory {directory}: {exc.strerror or exc}") from exc
    _write_text(directory / "outcomes.csv", _csv_text(OUTCOME_COLUMNS, _outcome_rows(bundle)))
    _write_text(directory / "partitions.csv", _csv_text(PARTITION_COLUMNS, _partition_rows(bundle)))
    _write_text(directory / "comparison.csv", _csv_text(COMPARISON_COLUMNS, _comparison_rows(bundle)))
    _write_bytes(directory / "config.json", bundle.scenario.raw)
    manifest = json.dumps(manifest_dict(bundle), indent=2, sort_keys=True) + "\n"
    _write_text(directory / "manifest.json", manifest)
    return directory


@dataclass(frozen=True)
class LoadedBundle:
    """A results directory read back as raw tables."""

    directory: Path
    manifest: dict
    scenario: Scenario
    outcomes: list[dict[str, str]]
    partitions: list[dict[str, str]]
    comparison: list[dict[str, str]]


def _read_table(path: Path, columns: tuple[str, ...]) -> list[dict[str, str]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise BundleError(f"cannot read {path}: {exc.strerror or exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != columns:
        raise BundleError(f"{path}: unexpected columns {reader.fieldnames}")
    rows = list(reader)
    for i, row in enumerate(rows, start=2):
        if None in row or any(v is None for v in row.values()):
            raise BundleError(f"{path}: row {i} has the wrong number of fields")
    return rows


def load_results(directory: str | os.PathLike) -> LoadedBundle:
    """Read a bundle back, checking file presence, row counts and the config hash."""
    directory = Path(directory)
    if not directory.is_dir():
        raise BundleError(f"{directory} is not a directory")
    missing = [name for name in BUNDLE_FILES if not (directory / name).is_file()]
    if missing:
        raise BundleError(f"{directory}: missing {', '.join(missing)}")
    try:
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleError(f"{directory / 'manifest.json'}: unreadable ({exc})") from exc
    if not isinstance(manifest, dict):
        raise BundleError(f"{directory / 'manifest.json'}: not a JSON object")
    for key in ("config_sha256", "n_prosumers", "n_slots", "rows"):
        if key not in manifest:
            raise BundleError(f"{directory / 'manifest.json'}: missing {key!r}")

    raw = (directory / "config.json").read_bytes()
    if sha256_bytes(raw) != manifest["config_sha256"]:
        raise BundleError(f"{directory / 'config.json'}: hash does not match the manifest")
    try:
        scenario = parse_scenario(raw)
    except ConfigError as exc:
        raise BundleError(f"{directory / 'config.json'}: {exc}") from exc

    outcomes = _read_table(directory / "outcomes.csv", OUTCOME_COLUMNS)
    partitions = _read_table(directory / "partitions.csv", PARTITION_COLUMNS)
    comparison = _read_table(directory / "comparison.csv", COMPARISON_COLUMNS)
    expected = manifest["rows"]
    for name, table in (("outcomes", outcomes), ("partitions", partitions), ("comparison", comparison)):
        if len(table) != expected:
            raise BundleError(f"{directory / (name + '.csv')}: {len(table)} rows, manifest says {expected}")
    return LoadedBundle(directory, manifest, scenario, outcomes, partitions, comparison)


@dataclass(frozen=True)
class Deviation:
    """One failed check found while replaying a bundle."""

    slot: int
    prosumer_id: str
    check: str
    detail: str


def _num(row: dict[str, str], key: str, where: str) -> float:
    try:
        return float(row[key])
    except ValueError:
        raise BundleError(f"{where}: {key} is not a number: {row[key]!r}") from None


def _opt_num(row: dict[str, str], key: str, where: str) -> float | None:
    return None if row[key] == "" else _num(row, key, where)


def _record(row: dict[str, str], cfg: ProsumerConfig, where: str) -> ProsumerOutcome:
    try:
        state = State(row["state"])
    except ValueError:
        raise BundleError(f"{where}: unknown state {row['state']!r}") from None
    n = lambda key: _num(row, key, where)  # noqa: E731
    try:
        reading = SlotReading(n("pv_kwh"), n("demand_kwh"))
    except ValueError as exc:
        raise BundleError(f"{where}: {exc}") from None
    return ProsumerOutcome(
        id=cfg.id,
        config=cfg,
        state=state,
        reason=row["reason"],
        reading=reading,
        soc_start=n("soc_start"),
        balance=EnergyBalance(
            self_consumption=n("self_consumption"),
            surplus=n("surplus"),
            deficit=n("deficit"),
            charged=n("charged"),
            discharged=n("discharged"),
            soc_after=n("soc_after_dispatch"),
        ),
        cap=n("cap"),
        traded=n("traded"),
        battery_utility=n("battery_utility"),
        utility=n("utility"),
        cost=n("cost"),
        soc_end=n("soc_end"),
    )


def verify_bundle(bundle: LoadedBundle, tol: float = DELTA_TOL) -> list[Deviation]:
    """Replay the stability and never-detrimental checks over stored tables.

    Stability is re-run on the stored states and post-dispatch balances at the
    stored decision prices. The feed-in comparison is recomputed from the
    stored surplus and deficit and must agree with the comparison table.
    Structural damage (bad numbers, unknown ids) raises ``BundleError``.
    """
    config = bundle.scenario.config
    roster = {p.id: p for p in config.roster}
    deviations: list[Deviation] = []

    slots: dict[int, list[dict[str, str]]] = {}
    for i, row in enumerate(bundle.outcomes, start=2):
        where = f"outcomes.csv row {i}"
        if row["prosumer_id"] not in roster:
            raise BundleError(f"{where}: prosumer {row['prosumer_id']!r} not in the scenario")
        try:
            slot = int(row["slot"])
        except ValueError:
            raise BundleError(f"{where}: bad slot {row['slot']!r}") from None
        slots.setdefault(slot, []).append(row)

    partition_state = {(r["slot"], r["prosumer_id"]): r for r in bundle.partitions}
    compared = {(r["slot"], r["prosumer_id"]): r for r in bundle.comparison}

    for slot in sorted(slots):
        rows = slots[slot]
        ids = [r["prosumer_id"] for r in rows]
        if sorted(ids) != sorted(roster):
            deviations.append(Deviation(slot, "*", "partition", f"slot covers {sorted(ids)}"))
        records = []
        for row in rows:
            where = f"outcomes.csv slot {slot} prosumer {row['prosumer_id']}"
            records.append(_record(row, roster[row["prosumer_id"]], where))
        first = rows[0]
        schedule = config.schedule_at(slot)
        cleared = ClearedPrices(
            p_d_mid=_num(first, "p_d_mid", "outcomes.csv"),
            p_c_mid=_num(first, "p_c_mid", "outcomes.csv"),
            p_d_s2=_opt_num(first, "p_d_s2", "outcomes.csv"),
            p_c_s2=_opt_num(first, "p_c_s2", "outcomes.csv"),
        )
        outcome = SlotOutcome(slot, schedule, cleared, None, tuple(records))  # type: ignore[arg-type]
        for pid, alternative, gain in verify_dhp_stability(outcome, tol=tol).violating_deviations:
            deviations.append(Deviation(
                slot, pid, "stability", f"switching to {alternative.value} gains {gain:.6g}"
            ))

        for rec, row in zip(records, rows):
            key = (str(slot), rec.id)
            part = partition_state.get(key)
            if part is None:
                raise BundleError(f"partitions.csv: no row for slot {slot} prosumer {rec.id}")
            coalition = "V" if rec.state.in_coalition2 else "W"
            if part["state"] != rec.state.value or part["coalition"] != coalition:
                deviations.append(Deviation(
                    slot, rec.id, "partition",
                    f"outcomes say {rec.state.value}, partitions say {part['state']}/{part['coalition']}",
                ))
            comp = compared.get(key)
            if comp is None:
                raise BundleError(f"comparison.csv: no row for slot {slot} prosumer {rec.id}")
            u, c = state1_settlement(rec.balance.surplus, rec.balance.deficit, schedule)
            delta = _num(row, "net_benefit", "outcomes.csv") - (u - c)
            if delta < -tol:
                deviations.append(Deviation(
                    slot, rec.id, "never_detrimental", f"P2P minus FiT is {delta:.6g}"
                ))
            stored = _num(comp, "delta", "comparison.csv")
            if stored < -tol:
                deviations.append(Deviation(
                    slot, rec.id, "never_detrimental", f"stored delta is {stored:.6g}"
                ))
            if abs(stored - delta) > max(tol, 1e-9 * max(1.0, abs(delta))):
                deviations.append(Deviation(
                    slot, rec.id, "comparison", f"stored delta {stored:.12g}, replayed {delta:.12g}"
                ))
    return deviations


def _write_text(path: Path, text: str) -> None:
    _write_bytes(path, text.encode("utf-8"))


def _write_bytes(path: Path, data: bytes) -> None:
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
