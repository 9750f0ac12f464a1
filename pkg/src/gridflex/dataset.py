"""District description loading, validation, and serialization.

A district is described by a single JSON schema naming per-building CSV
time series plus district-level weather, pricing, and carbon-intensity
files. Everything is loaded eagerly and kept immutable; simulation code
never touches the filesystem after :func:`load_district` returns.

Value problems (a negative demand, humidity above 100) are collected
into a :class:`ValidationReport` and abort loading unless ``lenient``.
Structural problems (missing files or columns, length mismatches,
malformed specs, dangling references) always raise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from gridflex import lstm as lstm_mod
from gridflex.der import (
    BatterySpec,
    ElectricHeaterSpec,
    EVChargerSpec,
    HeatPumpSpec,
    PVSpec,
    ThermalStorageSpec,
)
from gridflex.errors import (
    ColumnMissing,
    DomainViolation,
    LengthMismatch,
    MissingFile,
)
from gridflex.outage import OutageModel
from gridflex.rewards import RewardParams, reward_names

HVAC_MODES = ("off", "cooling", "heating")
HVAC_MODE_ENCODING = {"off": 0, "cooling": 1, "heating": 2}
CHARGER_STATES = ("away", "connected", "incoming")
CHARGER_STATE_ENCODING = {"away": 0, "connected": 1, "incoming": 2}

CALENDAR_COLUMNS = ("month", "day_type", "hour", "daylight_savings_status")

BUILDING_REQUIRED_COLUMNS = CALENDAR_COLUMNS + (
    "indoor_dry_bulb_temperature",
    "indoor_dry_bulb_temperature_set_point",
    "indoor_relative_humidity",
    "occupant_count",
    "cooling_demand",
    "heating_demand",
    "dhw_demand",
    "non_shiftable_load",
    "hvac_mode",
)

DEMAND_COLUMNS = ("cooling_demand", "heating_demand", "dhw_demand", "non_shiftable_load")

_FORECAST_SUFFIXES = ("", "_predicted_6h", "_predicted_12h", "_predicted_24h")

WEATHER_COLUMNS = tuple(
    base + suffix
    for base in (
        "outdoor_dry_bulb_temperature",
        "outdoor_relative_humidity",
        "diffuse_solar_irradiance",
        "direct_solar_irradiance",
    )
    for suffix in _FORECAST_SUFFIXES
)

PRICING_COLUMNS = tuple("electricity_pricing" + suffix for suffix in _FORECAST_SUFFIXES)
CARBON_COLUMNS = ("carbon_intensity",)

EV_SCHEDULE_COLUMNS = (
    "charger_state",
    "estimated_arrival_time",
    "estimated_departure_time",
    "estimated_arrival_soc",
    "required_departure_soc",
)

PV_INVERTER_COLUMN = "inverter_ac_power_per_kw"

# (low, high, must_be_integral) per numeric building column; hour is handled
# separately because its legal range depends on the declared convention.
_BUILDING_BOUNDS = {
    "month": (1, 12, True),
    "day_type": (1, 8, True),
    "daylight_savings_status": (0, 1, True),
    "indoor_dry_bulb_temperature": (-60.0, 80.0, False),
    "indoor_dry_bulb_temperature_set_point": (-60.0, 80.0, False),
    "indoor_relative_humidity": (0.0, 100.0, False),
    "occupant_count": (0.0, math.inf, False),
    "cooling_demand": (0.0, math.inf, False),
    "heating_demand": (0.0, math.inf, False),
    "dhw_demand": (0.0, math.inf, False),
    "non_shiftable_load": (0.0, math.inf, False),
}

_WEATHER_BOUNDS = {}
for _suffix in _FORECAST_SUFFIXES:
    _WEATHER_BOUNDS["outdoor_dry_bulb_temperature" + _suffix] = (-90.0, 60.0, False)
    _WEATHER_BOUNDS["outdoor_relative_humidity" + _suffix] = (0.0, 100.0, False)
    _WEATHER_BOUNDS["diffuse_solar_irradiance" + _suffix] = (0.0, 1500.0, False)
    _WEATHER_BOUNDS["direct_solar_irradiance" + _suffix] = (0.0, 1500.0, False)

_MAX_VIOLATIONS_PER_COLUMN = 20


# ---------------------------------------------------------------------------
# observation and action catalogs

SHARED_OBSERVATIONS = CALENDAR_COLUMNS + WEATHER_COLUMNS + CARBON_COLUMNS

BUILDING_OBSERVATIONS = (
    "indoor_dry_bulb_temperature",
    "indoor_dry_bulb_temperature_set_point",
    "indoor_dry_bulb_temperature_delta",
    "indoor_dry_bulb_temperature_set_point_override_delta",
    "indoor_relative_humidity",
    "occupant_count",
    "hvac_mode",
    "cooling_demand",
    "heating_demand",
    "dhw_demand",
    "non_shiftable_load",
    "cooling_electricity_consumption",
    "heating_electricity_consumption",
    "dhw_electricity_consumption",
    "electrical_storage_electricity_consumption",
    "net_electricity_consumption",
    "cooling_storage_soc",
    "heating_storage_soc",
    "dhw_storage_soc",
    "electrical_storage_soc",
    "solar_generation",
    "cooling_device_efficiency",
    "heating_device_efficiency",
    "dhw_device_efficiency",
    "power_outage",
)

EV_OBSERVATION_TEMPLATES = (
    "electric_vehicle_charger_state_{i}",
    "electric_vehicle_soc_{i}",
    "electric_vehicle_estimated_arrival_soc_{i}",
    "electric_vehicle_required_departure_soc_{i}",
    "electric_vehicle_estimated_arrival_time_{i}",
    "electric_vehicle_estimated_departure_time_{i}",
)

STORAGE_ACTIONS = ("cooling_storage", "heating_storage", "dhw_storage", "electrical_storage")
DEVICE_ACTIONS = ("cooling_device", "heating_device")


def observation_catalog(n_chargers: int) -> tuple[str, ...]:
    """Every observation name a building with ``n_chargers`` may activate."""
    ev = tuple(
        template.format(i=i)
        for i in range(n_chargers)
        for template in EV_OBSERVATION_TEMPLATES
    )
    return SHARED_OBSERVATIONS + PRICING_COLUMNS + BUILDING_OBSERVATIONS + ev


def action_catalog(der: DerSpecs) -> tuple[str, ...]:
    """Every action name the given DER fleet can accept.

    Device actions require the device; storage actions require the store;
    chargers in ``no_control`` mode expose no action at all.
    """
    names: list[str] = []
    if der.cooling_storage is not None:
        names.append("cooling_storage")
    if der.heating_storage is not None:
        names.append("heating_storage")
    if der.dhw_storage is not None:
        names.append("dhw_storage")
    if der.electrical_storage is not None:
        names.append("electrical_storage")
    if der.cooling_device is not None:
        names.append("cooling_device")
    if der.heating_device is not None:
        names.append("heating_device")
    for i, charger in enumerate(der.ev_chargers):
        if charger.mode != "no_control":
            names.append(f"electric_vehicle_storage_{i}")
    return tuple(names)


def action_bounds(config: BuildingConfig) -> tuple[tuple[float, float], ...]:
    """(low, high) per active action, in active_actions order."""
    bounds = []
    for name in config.active_actions:
        if name in DEVICE_ACTIONS:
            bounds.append((0.0, 1.0))
        elif name.startswith("electric_vehicle_storage_"):
            index = int(name.rsplit("_", 1)[1])
            mode = config.der.ev_chargers[index].mode
            bounds.append((-1.0, 1.0) if mode == "v2g" else (0.0, 1.0))
        else:
            bounds.append((-1.0, 1.0))
    return tuple(bounds)


# ---------------------------------------------------------------------------
# configuration types


@dataclass(frozen=True)
class OccupantCoefficients:
    """Thermostat-override behaviour: p(override) = logistic(a + b * T_in)."""

    a: float
    b: float
    direction: str
    magnitude_small: float
    magnitude_large: float
    p_large: float
    months: tuple[int, ...] | None = None


@dataclass(frozen=True)
class DerSpecs:
    cooling_device: HeatPumpSpec | ElectricHeaterSpec | None = None
    heating_device: HeatPumpSpec | ElectricHeaterSpec | None = None
    dhw_device: HeatPumpSpec | ElectricHeaterSpec | None = None
    cooling_storage: ThermalStorageSpec | None = None
    heating_storage: ThermalStorageSpec | None = None
    dhw_storage: ThermalStorageSpec | None = None
    electrical_storage: BatterySpec | None = None
    electrical_storage_initial_soc: float = 0.0
    pv: PVSpec | None = None
    ev_chargers: tuple[EVChargerSpec, ...] = ()


@dataclass(frozen=True)
class BuildingConfig:
    name: str
    series_file: str
    active_observations: tuple[str, ...]
    active_actions: tuple[str, ...]
    comfort_band: float = 2.0
    der: DerSpecs = field(default_factory=DerSpecs)
    lstm_file: str | None = None
    occupant_models: tuple[OccupantCoefficients, ...] = ()
    outage: OutageModel | None = None
    pv_inverter_file: str | None = None
    pv_inverter_column: str = PV_INVERTER_COLUMN
    ev_schedule_files: tuple[str, ...] = ()


@dataclass(frozen=True)
class DistrictConfig:
    seconds_per_time_step: float
    episode_time_steps: int
    central_agent: bool
    reward_function: str
    reward_params: RewardParams
    random_seed: int
    hour_convention: str
    weather_file: str
    pricing_file: str | None
    carbon_file: str | None
    buildings: tuple[BuildingConfig, ...]


@dataclass(frozen=True)
class Violation:
    file: str
    column: str
    row: int | None
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def extend(self, items: list[Violation]) -> None:
        self.violations.extend(items)

    def __bool__(self) -> bool:
        return bool(self.violations)

    def summary(self, limit: int = 5) -> str:
        lines = [
            f"{v.file}:{v.column}" + (f":row {v.row}" if v.row is not None else "") + f" {v.message}"
            for v in self.violations[:limit]
        ]
        extra = len(self.violations) - limit
        if extra > 0:
            lines.append(f"... and {extra} more")
        return "\n".join(lines)


@dataclass
class BuildingData:
    """One building's config plus every bound series it needs at runtime."""

    config: BuildingConfig
    series: pd.DataFrame
    ev_schedules: tuple[pd.DataFrame, ...] = ()
    pv_inverter: np.ndarray | None = None
    lstm: lstm_mod.LstmModel | None = None


@dataclass
class District:
    schema_path: Path
    config: DistrictConfig
    buildings: list[BuildingData]
    weather: pd.DataFrame
    pricing: pd.DataFrame | None
    carbon: pd.DataFrame | None
    report: ValidationReport

    @property
    def n_time_steps(self) -> int:
        return self.config.episode_time_steps


# ---------------------------------------------------------------------------
# low-level helpers


def _read_csv(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise MissingFile(str(path))
    return pd.read_csv(path)

def _require_columns(df: pd.DataFrame, required: tuple[str, ...], file: str) -> None:
    for name in required:
        if name not in df.columns:
            raise ColumnMissing(f"{file}: missing column {name}")


def _require_length(n_expected: int, df: pd.DataFrame, file: str) -> None:
    if len(df) != n_expected:
        raise LengthMismatch(f"{file}: expected {n_expected} rows, got {len(df)}")


def _reject_unknown_keys(payload: dict, known: tuple[str, ...], context: str) -> None:
    unknown = sorted(set(payload) - set(known))
    if unknown:
        raise DomainViolation(f"{context}: unknown keys {unknown} (known: {sorted(known)})")


def _numeric(df: pd.DataFrame, column: str) -> np.ndarray:
    return pd.to_numeric(df[column], errors="coerce").to_numpy(dtype=float)


def _column_violations(
    values: np.ndarray,
    file: str,
    column: str,
    low: float,
    high: float,
    integral: bool,
) -> list[Violation]:
    bad = ~np.isfinite(values) | (values < low) | (values > high)
    if integral:
        bad |= np.isfinite(values) & (values != np.trunc(values))
    rows = np.flatnonzero(bad)
    out = [
        Violation(file, column, int(r), f"value {values[r]!r} outside [{low}, {high}]")
        for r in rows[:_MAX_VIOLATIONS_PER_COLUMN]
    ]
    if len(rows) > _MAX_VIOLATIONS_PER_COLUMN:
        out.append(
            Violation(file, column, None, f"{len(rows)} invalid values in total")
        )
    return out


# ---------------------------------------------------------------------------
# per-series validators (report-producing, never raising)


def validate_building_series(
    df: pd.DataFrame, file: str, hour_convention: str = "one_based"
) -> list[Violation]:
    out: list[Violation] = []
    for column, (low, high, integral) in _BUILDING_BOUNDS.items():
        out.extend(_column_violations(_numeric(df, column), file, column, low, high, integral))

    low, high = (1, 24) if hour_convention == "one_based" else (0, 23)
    out.extend(_column_violations(_numeric(df, "hour"), file, "hour", low, high, True))

    modes = df["hvac_mode"].astype(str).str.lower()
    for row in np.flatnonzero(~modes.isin(HVAC_MODES))[:_MAX_VIOLATIONS_PER_COLUMN]:
        out.append(
            Violation(file, "hvac_mode", int(row), f"value {df['hvac_mode'].iloc[row]!r} not in {HVAC_MODES}")
        )

    if "power_outage" in df.columns:
        out.extend(_column_violations(_numeric(df, "power_outage"), file, "power_outage", 0, 1, True))
    return out


def validate_weather(df: pd.DataFrame, file: str) -> list[Violation]:
    out: list[Violation] = []
    for column, (low, high, integral) in _WEATHER_BOUNDS.items():
        out.extend(_column_violations(_numeric(df, column), file, column, low, high, integral))
    return out


def validate_pricing(df: pd.DataFrame, file: str) -> list[Violation]:
    out: list[Violation] = []
    for column in PRICING_COLUMNS:
        out.extend(_column_violations(_numeric(df, column), file, column, 0.0, math.inf, False))
    return out


def validate_carbon(df: pd.DataFrame, file: str) -> list[Violation]:
    return _column_violations(_numeric(df, "carbon_intensity"), file, "carbon_intensity", 0.0, math.inf, False)


def validate_ev_schedule(df: pd.DataFrame, file: str) -> list[Violation]:
    out: list[Violation] = []
    states = df["charger_state"].astype(str).str.lower()
    for row in np.flatnonzero(~states.isin(CHARGER_STATES))[:_MAX_VIOLATIONS_PER_COLUMN]:
        out.append(
            Violation(file, "charger_state", int(row), f"value {df['charger_state'].iloc[row]!r} not in {CHARGER_STATES}")
        )

    # NaN is legal in the estimate columns (no vehicle in sight); values,
    # when present, must be in domain.
    for column, low, high, integral in (
        ("estimated_arrival_soc", 0.0, 1.0, False),
        ("required_departure_soc", 0.0, 1.0, False),
        ("estimated_arrival_time", 0.0, math.inf, True),
        ("estimated_departure_time", 0.0, math.inf, True),
    ):
        values = _numeric(df, column)
        present = ~df[column].isna().to_numpy()
        bad = present & (~np.isfinite(values) | (values < low) | (values > high))
        if integral:
            bad |= present & np.isfinite(values) & (values != np.trunc(values))
        for row in np.flatnonzero(bad)[:_MAX_VIOLATIONS_PER_COLUMN]:
            out.append(Violation(file, column, int(row), f"value {df[column].iloc[row]!r} outside [{low}, {high}]"))

    # each plug-in event must depart after it arrived
    connected = states.to_numpy() == "connected"
    starts = np.flatnonzero(connected & ~np.roll(connected, 1))
    if connected.size and connected[0]:
        starts = np.union1d(starts, [0])
    departures = _numeric(df, "estimated_departure_time")
    arrival_socs = _numeric(df, "estimated_arrival_soc")
    for start in starts:
        if np.isfinite(departures[start]) and departures[start] <= start:
            out.append(
                Violation(
                    file, "estimated_departure_time", int(start),
                    f"departure step {departures[start]} not after arrival step {start}",
                )
            )
        if not np.isfinite(arrival_socs[start]):
            out.append(
                Violation(file, "estimated_arrival_soc", int(start), "missing at plug-in")
            )
    return out


# ---------------------------------------------------------------------------
# spec parsing


def _parse_curve(value, context: str):
    if value is None:
        return None
    points = tuple((float(x), float(y)) for x, y in value)
    if len(points) < 2:
        raise DomainViolation(f"{context}: curve needs at least 2 points")
    xs = [p[0] for p in points]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise DomainViolation(f"{context}: curve x values must be strictly increasing")
    return points


def _check(condition: bool, context: str, message: str) -> None:
    if not condition:
        raise DomainViolation(f"{context}: {message}")


def _parse_thermal_device(payload: dict, context: str) -> HeatPumpSpec | ElectricHeaterSpec:
    kind = payload.get("type", "heat_pump")
    if kind == "heat_pump":
        _reject_unknown_keys(
            payload,
            ("type", "nominal_power", "technical_efficiency",
             "supply_temperature_cooling", "supply_temperature_heating", "cop_max"),
            context,
        )
        spec = HeatPumpSpec(
            nominal_power=float(payload["nominal_power"]),
            technical_efficiency=float(payload.get("technical_efficiency", 1.0)),
            supply_temperature_cooling=float(payload.get("supply_temperature_cooling", 8.0)),
            supply_temperature_heating=float(payload.get("supply_temperature_heating", 45.0)),
            cop_max=float(payload.get("cop_max", 20.0)),
        )
        _check(spec.nominal_power > 0, context, "nominal_power must be > 0")
        _check(0 < spec.technical_efficiency <= 1, context, "technical_efficiency must be in (0, 1]")
        _check(spec.cop_max > 1, context, "cop_max must be > 1")
        return spec
    if kind == "electric_heater":
        _reject_unknown_keys(payload, ("type", "nominal_power", "technical_efficiency"), context)
        spec = ElectricHeaterSpec(
            nominal_power=float(payload["nominal_power"]),
            technical_efficiency=float(payload.get("technical_efficiency", 0.9)),
        )
        _check(spec.nominal_power > 0, context, "nominal_power must be > 0")
        _check(0 < spec.technical_efficiency <= 1, context, "technical_efficiency must be in (0, 1]")
        return spec
    raise DomainViolation(f"{context}: unknown device type {kind!r}")


def _parse_thermal_storage(payload: dict, context: str) -> ThermalStorageSpec:
    _reject_unknown_keys(payload, ("capacity", "technical_efficiency", "loss_coefficient"), context)
    spec = ThermalStorageSpec(
        capacity=float(payload["capacity"]),
        technical_efficiency=float(payload.get("technical_efficiency", 0.9)),
        loss_coefficient=float(payload.get("loss_coefficient", 0.006)),
    )
    _check(spec.capacity > 0, context, "capacity must be > 0")
    _check(0 < spec.technical_efficiency <= 1, context, "technical_efficiency must be in (0, 1]")
    _check(0 <= spec.loss_coefficient < 1, context, "loss_coefficient must be in [0, 1)")
    return spec


def _parse_battery(payload: dict, context: str, extra_keys: tuple[str, ...] = ()) -> BatterySpec:
    _reject_unknown_keys(
        payload,
        ("capacity", "nominal_power", "technical_efficiency", "loss_coefficient",
         "capacity_loss_coefficient", "depth_of_discharge",
         "power_efficiency_curve", "capacity_power_curve") + extra_keys,
        context,
    )
    spec = BatterySpec(
        capacity=float(payload["capacity"]),
        nominal_power=float(payload["nominal_power"]),
        technical_efficiency=float(payload.get("technical_efficiency", 0.9)),
        loss_coefficient=float(payload.get("loss_coefficient", 0.0)),
        capacity_loss_coefficient=float(payload.get("capacity_loss_coefficient", 1e-5)),
        depth_of_discharge=float(payload.get("depth_of_discharge", 1.0)),
        power_efficiency_curve=_parse_curve(payload.get("power_efficiency_curve"), context),
        capacity_power_curve=_parse_curve(payload.get("capacity_power_curve"), context),
    )
    _check(spec.capacity > 0, context, "capacity must be > 0")
    _check(spec.nominal_power > 0, context, "nominal_power must be > 0")
    _check(0 < spec.technical_efficiency <= 1, context, "technical_efficiency must be in (0, 1]")
    _check(0 <= spec.loss_coefficient < 1, context, "loss_coefficient must be in [0, 1)")
    _check(spec.capacity_loss_coefficient >= 0, context, "capacity_loss_coefficient must be >= 0")
    _check(0 < spec.depth_of_discharge <= 1, context, "depth_of_discharge must be in (0, 1]")
    return spec


def _parse_der(payload: dict, context: str) -> tuple[DerSpecs, str | None, str, list, tuple[str, ...]]:
    """Returns (specs, pv_file, pv_column, inline_pv_series, ev_schedule_files)."""
    _reject_unknown_keys(
        payload,
        ("cooling_device", "heating_device", "dhw_device",
         "cooling_storage", "heating_storage", "dhw_storage",
         "electrical_storage", "pv", "ev_chargers"),
        context,
    )
    kwargs: dict = {}
    for slot in ("cooling_device", "heating_device", "dhw_device"):
        block = payload.get(slot)
        if block is not None:
            spec = _parse_thermal_device(block, f"{context}.{slot}")
            if slot == "cooling_device" and isinstance(spec, ElectricHeaterSpec):
                raise DomainViolation(f"{context}.{slot}: an electric heater cannot cool")
            kwargs[slot] = spec
    for slot in ("cooling_storage", "heating_storage", "dhw_storage"):
        block = payload.get(slot)
        if block is not None:
            kwargs[slot] = _parse_thermal_storage(block, f"{context}.{slot}")

    battery_block = payload.get("electrical_storage")
    if battery_block is not None:
        kwargs["electrical_storage"] = _parse_battery(
            battery_block, f"{context}.electrical_storage", extra_keys=("initial_soc",)
        )
        initial_soc = float(battery_block.get("initial_soc", 0.0))
        _check(0 <= initial_soc <= 1, f"{context}.electrical_storage", "initial_soc must be in [0, 1]")
        kwargs["electrical_storage_initial_soc"] = initial_soc

    pv_file: str | None = None
    pv_column = PV_INVERTER_COLUMN
    inline_pv: list = []
    pv_block = payload.get("pv")
    if pv_block is not None:
        _reject_unknown_keys(
            pv_block, ("nominal_power", "inverter_series", "inverter_file", "inverter_column"),
            f"{context}.pv",
        )
        kwargs["pv"] = PVSpec(nominal_power=float(pv_block["nominal_power"]))
        _check(kwargs["pv"].nominal_power > 0, f"{context}.pv", "nominal_power must be > 0")
        series = pv_block.get("inverter_series")
        pv_file = pv_block.get("inverter_file")
        pv_column = pv_block.get("inverter_column", PV_INVERTER_COLUMN)
        if (series is None) == (pv_file is None):
            raise DomainViolation(
                f"{context}.pv: exactly one of inverter_series or inverter_file is required"
            )
        if series is not None:
            inline_pv = [float(v) for v in series]

    chargers: list[EVChargerSpec] = []
    schedule_files: list[str] = []
    for i, block in enumerate(payload.get("ev_chargers", ())):
        charger_context = f"{context}.ev_chargers[{i}]"
        _reject_unknown_keys(
            block,
            ("charger_id", "mode", "nominal_power_charging", "nominal_power_discharging",
             "technical_efficiency", "schedule", "battery"),
            charger_context,
        )
        if "schedule" not in block:
            raise DomainViolation(f"{charger_context}: schedule file is required")
        spec = EVChargerSpec(
            charger_id=str(block.get("charger_id", f"charger_{i}")),
            battery=_parse_battery(block["battery"], f"{charger_context}.battery"),
            nominal_power_charging=float(block["nominal_power_charging"]),
            nominal_power_discharging=float(block["nominal_power_discharging"]),
            technical_efficiency=float(block.get("technical_efficiency", 1.0)),
            mode=str(block.get("mode", "v2g")),
        )
        _check(spec.nominal_power_charging > 0, charger_context, "nominal_power_charging must be > 0")
        _check(spec.nominal_power_discharging > 0, charger_context, "nominal_power_discharging must be > 0")
        _check(0 < spec.technical_efficiency <= 1, charger_context, "technical_efficiency must be in (0, 1]")
        _check(spec.mode in ("v2g", "g2v", "no_control"), charger_context, f"unknown mode {spec.mode!r}")
        chargers.append(spec)
        schedule_files.append(str(block["schedule"]))
    ids = [c.charger_id for c in chargers]
    _check(len(set(ids)) == len(ids), context, f"duplicate charger_id in {ids}")
    kwargs["ev_chargers"] = tuple(chargers)

    return DerSpecs(**kwargs), pv_file, pv_column, inline_pv, tuple(schedule_files)


def _parse_occupant_models(payload, context: str) -> tuple[OccupantCoefficients, ...]:
    if payload is None:
        return ()
    blocks = payload if isinstance(payload, list) else [payload]
    models = []
    for i, block in enumerate(blocks):
        entry_context = f"{context}[{i}]"
        _reject_unknown_keys(
            block,
            ("a", "b", "direction", "magnitude_small", "magnitude_large", "p_large", "months"),
            entry_context,
        )
        months = block.get("months")
        if months is not None:
            months = tuple(int(m) for m in months)
            _check(len(months) > 0, entry_context, "months must be non-empty when given")
            _check(all(1 <= m <= 12 for m in months), entry_context, "months must be in 1..12")
        model = OccupantCoefficients(
            a=float(block["a"]),
            b=float(block["b"]),
            direction=str(block["direction"]),
            magnitude_small=float(block["magnitude_small"]),
            magnitude_large=float(block["magnitude_large"]),
            p_large=float(block["p_large"]),
            months=months,
        )
        _check(model.direction in ("increase", "decrease"), entry_context, f"unknown direction {model.direction!r}")
        _check(model.magnitude_small > 0, entry_context, "magnitude_small must be > 0")
        _check(model.magnitude_large > 0, entry_context, "magnitude_large must be > 0")
        _check(0 <= model.p_large <= 1, entry_context, "p_large must be in [0, 1]")
        models.append(model)

    covered: set[int] = set()
    catch_alls = 0
    for model in models:
        if model.months is None:
            catch_alls += 1
        else:
            overlap = covered & set(model.months)
            _check(not overlap, context, f"months {sorted(overlap)} covered twice")
            covered |= set(model.months)
    _check(catch_alls <= 1, context, "at most one entry may omit months")
    return tuple(models)


def _parse_outage_model(payload, context: str) -> OutageModel | None:
    if payload is None:
        return None
    _reject_unknown_keys(payload, ("saifi", "caidi", "seed"), context)
    seed = payload.get("seed")
    try:
        return OutageModel(
            saifi=float(payload["saifi"]),
            caidi=float(payload["caidi"]),
            seed=None if seed is None else int(seed),
        )
    except DomainViolation as exc:
        raise DomainViolation(f"{context}: {exc}") from None


def _validate_active_names(config: BuildingConfig, pricing_present: bool, carbon_present: bool) -> None:
    context = f"building {config.name}"
    catalog = observation_catalog(len(config.der.ev_chargers))
    seen: set[str] = set()
    for name in config.active_observations:
        _check(name in catalog, context, f"unknown observation {name!r}")
        _check(name not in seen, context, f"duplicate observation {name!r}")
        seen.add(name)
        if name in PRICING_COLUMNS:
            _check(pricing_present, context, f"observation {name!r} needs a district pricing file")
        if name in CARBON_COLUMNS:
            _check(carbon_present, context, f"observation {name!r} needs a district carbon file")

    legal_actions = action_catalog(config.der)
    seen = set()
    for name in config.active_actions:
        _check(
            name in legal_actions, context,
            f"action {name!r} has no matching device (legal: {list(legal_actions)})",
        )
        _check(name not in seen, context, f"duplicate action {name!r}")
        seen.add(name)
        if name in DEVICE_ACTIONS:
            _check(
                config.lstm_file is not None, context,
                f"action {name!r} requires a thermal dynamics model (lstm_model)",
            )


# ---------------------------------------------------------------------------
# loading


def load_district(schema_path: str | Path, lenient: bool = False) -> District:
    """Load and validate a district description.

    Value-domain problems are collected into the returned report; unless
    ``lenient`` is set, any violation aborts with DomainViolation.
    Structural problems always raise regardless of ``lenient``.
    """
    schema_path = Path(schema_path)
    if not schema_path.is_file():
        raise MissingFile(str(schema_path))
    try:
        payload = json.loads(schema_path.read_text())
    except json.JSONDecodeError as exc:
        raise DomainViolation(f"{schema_path}: not valid JSON ({exc})") from None

    _reject_unknown_keys(
        payload,
        ("seconds_per_time_step", "episode_time_steps", "central_agent", "random_seed",
         "reward_function", "reward_params", "hour_convention",
         "weather", "pricing", "carbon_intensity", "buildings"),
        str(schema_path),
    )

    sps = float(payload.get("seconds_per_time_step", 3600.0))
    _check(sps > 0, str(schema_path), "seconds_per_time_step must be > 0")
    _check(86400.0 % sps == 0, str(schema_path), "seconds_per_time_step must divide a day")
    hour_convention = payload.get("hour_convention", "one_based")
    _check(
        hour_convention in ("one_based", "zero_based"),
        str(schema_path), f"unknown hour_convention {hour_convention!r}",
    )
    reward_function = payload.get("reward_function", "electricity_consumption")
    _check(
        reward_function in reward_names(),
        str(schema_path), f"unknown reward_function {reward_function!r} (known: {reward_names()})",
    )
    try:
        reward_params = RewardParams(**payload.get("reward_params", {}))
    except TypeError as exc:
        raise DomainViolation(f"{schema_path}: bad reward_params ({exc})") from None

    if "weather" not in payload:
        raise DomainViolation(f"{schema_path}: weather file is required")
    base = schema_path.parent
    report = ValidationReport()

    weather = _read_csv(base / payload["weather"])
    _require_columns(weather, WEATHER_COLUMNS, payload["weather"])
    n_steps = len(weather)
    _check(n_steps >= 1, str(schema_path), "weather file has no rows")
    report.extend(validate_weather(weather, payload["weather"]))

    pricing = None
    if "pricing" in payload:
        pricing = _read_csv(base / payload["pricing"])
        _require_columns(pricing, PRICING_COLUMNS, payload["pricing"])
        _require_length(n_steps, pricing, payload["pricing"])
        report.extend(validate_pricing(pricing, payload["pricing"]))

    carbon = None
    if "carbon_intensity" in payload:
        carbon = _read_csv(base / payload["carbon_intensity"])
        _require_columns(carbon, CARBON_COLUMNS, payload["carbon_intensity"])
        _require_length(n_steps, carbon, payload["carbon_intensity"])
        report.extend(validate_carbon(carbon, payload["carbon_intensity"]))

    buildings_payload = payload.get("buildings", {})
    _check(len(buildings_payload) >= 1, str(schema_path), "at least one building is required")

    episode_time_steps = int(payload.get("episode_time_steps", n_steps))
    _check(episode_time_steps >= 1, str(schema_path), "episode_time_steps must be >= 1")
    if episode_time_steps > n_steps:
        raise LengthMismatch(
            f"{schema_path}: episode_time_steps {episode_time_steps} exceeds the {n_steps} data rows"
        )

    buildings: list[BuildingData] = []
    for name, block in buildings_payload.items():
        buildings.append(
            _load_building(name, block, base, n_steps, hour_convention, pricing is not None,
                           carbon is not None, report)
        )

    _check_calendar_consistency(buildings, report)

    config = DistrictConfig(
        seconds_per_time_step=sps,
        episode_time_steps=episode_time_steps,
        central_agent=bool(payload.get("central_agent", False)),
        reward_function=reward_function,
        reward_params=reward_params,
        random_seed=int(payload.get("random_seed", 0)),
        hour_convention=hour_convention,
        weather_file=payload["weather"],
        pricing_file=payload.get("pricing"),
        carbon_file=payload.get("carbon_intensity"),
        buildings=tuple(b.config for b in buildings),
    )

    if report and not lenient:
        raise DomainViolation(
            f"{len(report.violations)} validation violations:\n{report.summary()}"
        )
    return District(
        schema_path=schema_path,
        config=config,
        buildings=buildings,
        weather=weather,
        pricing=pricing,
        carbon=carbon,
        report=report,
    )


def _load_building(
    name: str,
    block: dict,
    base: Path,
    n_steps: int,
    hour_convention: str,
    pricing_present: bool,
    carbon_present: bool,
    report: ValidationReport,
) -> BuildingData:
    context = f"building {name}"
    _reject_unknown_keys(
        block,
        ("series", "comfort_band", "active_observations", "active_actions",
         "der", "lstm_model", "occupant_model", "outage_model"),
        context,
    )
    if "series" not in block:
        raise DomainViolation(f"{context}: series file is required")
    series_file = str(block["series"])
    series = _read_csv(base / series_file)
    _require_columns(series, BUILDING_REQUIRED_COLUMNS, series_file)
    _require_length(n_steps, series, series_file)
    report.extend(validate_building_series(series, series_file, hour_convention))
    series = _normalize_series(series, hour_convention)

    der, pv_file, pv_column, inline_pv, schedule_files = _parse_der(
        block.get("der", {}), context
    )

    for demand_column, device_slot in (
        ("cooling_demand", "cooling_device"),
        ("heating_demand", "heating_device"),
        ("dhw_demand", "dhw_device"),
    ):
        values = pd.to_numeric(series[demand_column], errors="coerce")
        if (values > 0).any() and getattr(der, device_slot) is None:
            raise DomainViolation(
                f"{context}: {demand_column} is non-zero but no {device_slot} is configured"
            )

    for storage_slot, device_slot in (
        ("cooling_storage", "cooling_device"),
        ("heating_storage", "heating_device"),
        ("dhw_storage", "dhw_device"),
    ):
        if getattr(der, storage_slot) is not None and getattr(der, device_slot) is None:
            raise DomainViolation(
                f"{context}: {storage_slot} cannot charge without a {device_slot}"
            )

    outage = _parse_outage_model(block.get("outage_model"), f"{context}.outage_model")
    if outage is not None and "power_outage" in series.columns:
        raise DomainViolation(
            f"{context}: both a power_outage column and an outage_model were given; pick one"
        )

    pv_inverter = None
    if der.pv is not None:
        if inline_pv:
            pv_inverter = np.asarray(inline_pv, dtype=float)
            if len(pv_inverter) != n_steps:
                raise LengthMismatch(
                    f"{context}.pv: inverter_series expected {n_steps} values, got {len(pv_inverter)}"
                )
        else:
            frame = _read_csv(base / pv_file)
            _require_columns(frame, (pv_column,), pv_file)
            _require_length(n_steps, frame, pv_file)
            pv_inverter = pd.to_numeric(frame[pv_column], errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(pv_inverter) | (pv_inverter < 0))
        for row in bad[:_MAX_VIOLATIONS_PER_COLUMN]:
            report.extend([
                Violation(pv_file or f"{context}.pv", pv_column, int(row),
                          f"value {pv_inverter[row]!r} outside [0, inf]")
            ])

    schedules = []
    for i, schedule_file in enumerate(schedule_files):
        frame = _read_csv(base / schedule_file)
        _require_columns(frame, EV_SCHEDULE_COLUMNS, schedule_file)
        _require_length(n_steps, frame, schedule_file)
        report.extend(validate_ev_schedule(frame, schedule_file))
        frame = frame.copy()
        frame["charger_state"] = frame["charger_state"].astype(str).str.lower()
        schedules.append(frame)

    lstm_file = block.get("lstm_model")
    lstm_model = None
    if lstm_file is not None:
        model_path = base / lstm_file
        if not model_path.is_file():
            raise MissingFile(str(model_path))
        lstm_model = lstm_mod.load_lstm_model(model_path)

    comfort_band = float(block.get("comfort_band", 2.0))
    _check(comfort_band >= 0, context, "comfort_band must be >= 0")

    config = BuildingConfig(
        name=name,
        series_file=series_file,
        active_observations=tuple(block.get("active_observations", ())),
        active_actions=tuple(block.get("active_actions", ())),
        comfort_band=comfort_band,
        der=der,
        lstm_file=lstm_file,
        occupant_models=_parse_occupant_models(block.get("occupant_model"), f"{context}.occupant_model"),
        outage=outage,
        pv_inverter_file=pv_file,
        pv_inverter_column=pv_column,
        ev_schedule_files=schedule_files,
    )
    _validate_active_names(config, pricing_present, carbon_present)
    return BuildingData(
        config=config,
        series=series,
        ev_schedules=tuple(schedules),
        pv_inverter=pv_inverter,
        lstm=lstm_model,
    )


def _normalize_series(series: pd.DataFrame, hour_convention: str) -> pd.DataFrame:
    """Internal form: hour 0..23, hvac_mode lower case."""
    series = series.copy()
    hours = pd.to_numeric(series["hour"], errors="coerce")
    if hour_convention == "one_based":
        hours = hours - 1
    series["hour"] = hours.clip(lower=0, upper=23).fillna(0).astype(int)
    series["hvac_mode"] = series["hvac_mode"].astype(str).str.lower()
    return series


def _check_calendar_consistency(buildings: list[BuildingData], report: ValidationReport) -> None:
    if len(buildings) < 2:
        return
    reference = buildings[0]
    for other in buildings[1:]:
        for column in CALENDAR_COLUMNS:
            if not reference.series[column].equals(other.series[column]):
                report.extend([
                    Violation(
                        other.config.series_file, column, None,
                        f"calendar differs from {reference.config.series_file}",
                    )
                ])


# ---------------------------------------------------------------------------
# serialization and identity


def _spec_to_dict(spec) -> dict:
    out = {}
    for f in fields(spec):
        value = getattr(spec, f.name)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = [list(p) if isinstance(p, tuple) else p for p in value]
        out[f.name] = value
    return out


def _thermal_device_to_dict(spec) -> dict:
    out = _spec_to_dict(spec)
    out["type"] = "heat_pump" if isinstance(spec, HeatPumpSpec) else "electric_heater"
    return out


def _building_schema_block(data: BuildingData, filenames: dict[str, str]) -> dict:
    config = data.config
    der_block: dict = {}
    for slot in ("cooling_device", "heating_device", "dhw_device"):
        spec = getattr(config.der, slot)
        if spec is not None:
            der_block[slot] = _thermal_device_to_dict(spec)
    for slot in ("cooling_storage", "heating_storage", "dhw_storage"):
        spec = getattr(config.der, slot)
        if spec is not None:
            der_block[slot] = _spec_to_dict(spec)
    if config.der.electrical_storage is not None:
        battery = _spec_to_dict(config.der.electrical_storage)
        battery["initial_soc"] = config.der.electrical_storage_initial_soc
        der_block["electrical_storage"] = battery
    if config.der.pv is not None:
        der_block["pv"] = {
            "nominal_power": config.der.pv.nominal_power,
            "inverter_file": filenames["pv"],
        }
    if config.der.ev_chargers:
        der_block["ev_chargers"] = [
            {
                "charger_id": charger.charger_id,
                "mode": charger.mode,
                "nominal_power_charging": charger.nominal_power_charging,
                "nominal_power_discharging": charger.nominal_power_discharging,
                "technical_efficiency": charger.technical_efficiency,
                "schedule": filenames[f"ev_{i}"],
                "battery": _spec_to_dict(charger.battery),
            }
            for i, charger in enumerate(config.der.ev_chargers)
        ]

    block: dict = {
        "series": filenames["series"],
        "comfort_band": config.comfort_band,
        "active_observations": list(config.active_observations),
        "active_actions": list(config.active_actions),
    }
    if der_block:
        block["der"] = der_block
    if config.lstm_file is not None:
        block["lstm_model"] = filenames["lstm"]
    if config.occupant_models:
        block["occupant_model"] = [
            {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(m).items() if v is not None}
            for m in config.occupant_models
        ]
    if config.outage is not None:
        outage = {"saifi": config.outage.saifi, "caidi": config.outage.caidi}
        if config.outage.seed is not None:
            outage["seed"] = config.outage.seed
        block["outage_model"] = outage
    return block


def serialize_district(district: District, out_dir: str | Path) -> Path:
    """Write the loaded district back to disk; returns the new schema path.

    Series are written in their internal normalized form, so the emitted
    schema declares hour_convention zero_based. Reloading the result is
    semantically equal to reloading the original (same fingerprint).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = district.config

    schema: dict = {
        "seconds_per_time_step": config.seconds_per_time_step,
        "episode_time_steps": config.episode_time_steps,
        "central_agent": config.central_agent,
        "random_seed": config.random_seed,
        "reward_function": config.reward_function,
        "reward_params": asdict(config.reward_params),
        "hour_convention": "zero_based",
        "weather": "weather.csv",
        "buildings": {},
    }
    district.weather.to_csv(out / "weather.csv", index=False)
    if district.pricing is not None:
        schema["pricing"] = "pricing.csv"
        district.pricing.to_csv(out / "pricing.csv", index=False)
    if district.carbon is not None:
        schema["carbon_intensity"] = "carbon_intensity.csv"
        district.carbon.to_csv(out / "carbon_intensity.csv", index=False)

    for data in district.buildings:
        name = data.config.name
        filenames = {"series": f"{name}.csv"}
        data.series.to_csv(out / filenames["series"], index=False)
        if data.pv_inverter is not None:
            filenames["pv"] = f"{name}_pv_inverter.csv"
            pd.DataFrame({data.config.pv_inverter_column: data.pv_inverter}).to_csv(
                out / filenames["pv"], index=False
            )
        for i, schedule in enumerate(data.ev_schedules):
            filenames[f"ev_{i}"] = f"{name}_ev_{i}.csv"
            schedule.to_csv(out / filenames[f"ev_{i}"], index=False)
        if data.lstm is not None:
            filenames["lstm"] = f"{name}_lstm.json"
            (out / filenames["lstm"]).write_text(
                json.dumps(lstm_mod.lstm_model_to_dict(data.lstm), indent=1)
            )
        schema["buildings"][name] = _building_schema_block(data, filenames)

    target = out / "schema.json"
    target.write_text(json.dumps(schema, indent=1))
    return target


def district_fingerprint(district: District) -> str:
    """Content hash of everything that affects simulation.

    File names and the on-disk hour convention are excluded, so a
    district and its re-serialized copy hash identically.
    """
    def frame_csv(frame) -> str | None:
        return None if frame is None else frame.to_csv(index=False)

    payload = {
        "seconds_per_time_step": district.config.seconds_per_time_step,
        "episode_time_steps": district.config.episode_time_steps,
        "central_agent": district.config.central_agent,
        "reward_function": district.config.reward_function,
        "reward_params": asdict(district.config.reward_params),
        "random_seed": district.config.random_seed,
        "weather": frame_csv(district.weather),
        "pricing": frame_csv(district.pricing),
        "carbon": frame_csv(district.carbon),
        "buildings": [
            {
                "name": data.config.name,
                "comfort_band": data.config.comfort_band,
                "active_observations": list(data.config.active_observations),
                "active_actions": list(data.config.active_actions),
                "der": asdict(data.config.der),
                "occupant_models": [asdict(m) for m in data.config.occupant_models],
                "outage": None if data.config.outage is None else asdict(data.config.outage),
                "series": frame_csv(data.series),
                "ev_schedules": [frame_csv(s) for s in data.ev_schedules],
                "pv_inverter": None if data.pv_inverter is None else data.pv_inverter.tolist(),
                "lstm": None if data.lstm is None else lstm_mod.lstm_model_to_dict(data.lstm),
            }
            for data in district.buildings
        ],
    }
    canonical = json.dumps(payload, sort_keys=True, default=list)
    return hashlib.sha256(canonical.encode()).hexdigest()
