"""Shared builders for synthetic district fixtures.

Tests get a mutable Bundle (schema dict + named DataFrames) they can
corrupt or extend before writing it to a temp directory, so every
loading and validation path can be exercised from one deterministic
base district.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

DATA_DIR = Path(__file__).parent / "data"
LSTM_FIXTURE = DATA_DIR / "lstm_fixture_model.json"


@dataclass
class Bundle:
    schema: dict
    frames: dict[str, pd.DataFrame] = field(default_factory=dict)
    extra_files: dict[str, str] = field(default_factory=dict)


def make_weather(n: int) -> pd.DataFrame:
    steps = np.arange(n)
    hour_of_day = steps % 24
    base_temp = 18.0 + 6.0 * np.sin(np.pi * hour_of_day / 12.0)
    direct = np.clip(800.0 * np.sin(np.pi * (hour_of_day - 6) / 12.0), 0.0, None)
    diffuse = 0.3 * direct
    humidity = 55.0 + 10.0 * np.cos(np.pi * hour_of_day / 12.0)
    frame = {}
    for suffix, shift in (("", 0), ("_predicted_6h", 6), ("_predicted_12h", 12), ("_predicted_24h", 24)):
        frame["outdoor_dry_bulb_temperature" + suffix] = np.roll(base_temp, -shift)
        frame["outdoor_relative_humidity" + suffix] = np.roll(humidity, -shift)
        frame["diffuse_solar_irradiance" + suffix] = np.roll(diffuse, -shift)
        frame["direct_solar_irradiance" + suffix] = np.roll(direct, -shift)
    return pd.DataFrame(frame).round(6)


def make_pricing(n: int) -> pd.DataFrame:
    steps = np.arange(n)
    price = 0.2 + 0.1 * ((steps % 24) >= 17)
    frame = {}
    for suffix, shift in (("", 0), ("_predicted_6h", 6), ("_predicted_12h", 12), ("_predicted_24h", 24)):
        frame["electricity_pricing" + suffix] = np.roll(price, -shift)
    return pd.DataFrame(frame)


def make_carbon(n: int) -> pd.DataFrame:
    steps = np.arange(n)
    return pd.DataFrame({"carbon_intensity": 0.3 + 0.05 * np.sin(np.pi * steps / 12.0)}).round(6)


def make_building_series(n: int, cooling: float = 1.0, dhw: float = 0.3) -> pd.DataFrame:
    steps = np.arange(n)
    hour_of_day = steps % 24
    day = steps // 24
    return pd.DataFrame(
        {
            "month": np.ones(n, dtype=int),
            "hour": hour_of_day + 1,
            "day_type": (day % 7) + 1,
            "daylight_savings_status": np.zeros(n, dtype=int),
            "indoor_dry_bulb_temperature": np.round(22.0 + np.sin(np.pi * steps / 6.0), 6),
            "indoor_dry_bulb_temperature_set_point": np.full(n, 24.0),
            "indoor_relative_humidity": np.full(n, 45.0),
            "occupant_count": np.where(hour_of_day >= 8, 2, 0),
            "cooling_demand": np.round(cooling * (1.0 + 0.1 * hour_of_day), 6),
            "heating_demand": np.zeros(n),
            "dhw_demand": np.full(n, dhw),
            "non_shiftable_load": np.full(n, 0.5),
            "hvac_mode": ["cooling"] * n,
        }
    )


def make_ev_schedule(n: int) -> pd.DataFrame:
    """Away 0-7, incoming at 8, connected 9-16, away again after."""
    state = np.array(["away"] * n, dtype=object)
    arrival_time = np.full(n, np.nan)
    departure_time = np.full(n, np.nan)
    arrival_soc = np.full(n, np.nan)
    departure_soc = np.full(n, np.nan)
    for day_start in range(0, n, 24):
        incoming = day_start + 8
        connect, leave = day_start + 9, day_start + 17
        if incoming < n:
            state[incoming] = "incoming"
            arrival_time[incoming] = min(connect, n - 1)
            arrival_soc[incoming] = 0.4
            departure_soc[incoming] = 0.8
        for t in range(connect, min(leave, n)):
            state[t] = "connected"
            departure_time[t] = leave
            departure_soc[t] = 0.8
            arrival_soc[t] = 0.4
    return pd.DataFrame(
        {
            "charger_state": state,
            "estimated_arrival_time": arrival_time,
            "estimated_departure_time": departure_time,
            "estimated_arrival_soc": arrival_soc,
            "required_departure_soc": departure_soc,
        }
    )


def make_pv_inverter(n: int) -> pd.DataFrame:
    steps = np.arange(n)
    output = np.clip(0.8 * np.sin(np.pi * ((steps % 24) - 6) / 12.0), 0.0, None)
    return pd.DataFrame({"inverter_ac_power_per_kw": np.round(output, 6)})


BUILDING_1_OBSERVATIONS = [
    "month", "hour", "day_type",
    "outdoor_dry_bulb_temperature", "direct_solar_irradiance",
    "electricity_pricing", "carbon_intensity",
    "cooling_demand", "dhw_demand", "non_shiftable_load",
    "net_electricity_consumption", "indoor_dry_bulb_temperature",
]

BUILDING_2_OBSERVATIONS = [
    "month", "hour", "day_type",
    "outdoor_dry_bulb_temperature", "outdoor_dry_bulb_temperature_predicted_6h",
    "direct_solar_irradiance", "diffuse_solar_irradiance",
    "electricity_pricing", "carbon_intensity",
    "cooling_demand", "dhw_demand", "non_shiftable_load",
    "cooling_electricity_consumption", "net_electricity_consumption",
    "cooling_storage_soc", "electrical_storage_soc", "solar_generation",
    "cooling_device_efficiency", "hvac_mode", "occupant_count",
    "indoor_dry_bulb_temperature", "indoor_dry_bulb_temperature_set_point",
    "indoor_dry_bulb_temperature_delta", "power_outage",
    "electric_vehicle_charger_state_0", "electric_vehicle_soc_0",
    "electric_vehicle_estimated_arrival_soc_0", "electric_vehicle_required_departure_soc_0",
]

BUILDING_2_ACTIONS = [
    "cooling_storage", "electrical_storage", "cooling_device", "electric_vehicle_storage_0"
]


def make_default_bundle(n: int = 24, with_lstm: bool = True) -> Bundle:
    building_2_der = {
        "cooling_device": {
            "type": "heat_pump", "nominal_power": 8.0,
            "technical_efficiency": 0.9, "cop_max": 6.0,
        },
        "dhw_device": {"type": "electric_heater", "nominal_power": 4.0, "technical_efficiency": 0.9},
        "cooling_storage": {"capacity": 6.0, "technical_efficiency": 0.81, "loss_coefficient": 0.006},
        "electrical_storage": {
            "capacity": 5.0, "nominal_power": 4.0, "technical_efficiency": 0.81,
            "capacity_loss_coefficient": 1e-5, "initial_soc": 0.5,
        },
        "pv": {"nominal_power": 3.0, "inverter_file": "building_2_pv.csv"},
        "ev_chargers": [
            {
                "charger_id": "charger_a", "mode": "v2g",
                "nominal_power_charging": 7.0, "nominal_power_discharging": 7.0,
                "technical_efficiency": 0.9, "schedule": "building_2_ev_0.csv",
                "battery": {"capacity": 20.0, "nominal_power": 7.0, "technical_efficiency": 0.81},
            }
        ],
    }
    building_2 = {
        "series": "building_2.csv",
        "comfort_band": 2.0,
        "active_observations": list(BUILDING_2_OBSERVATIONS),
        "active_actions": list(BUILDING_2_ACTIONS),
        "der": building_2_der,
    }
    if with_lstm:
        building_2["lstm_model"] = "building_2_lstm.json"
    else:
        building_2["active_actions"] = [a for a in BUILDING_2_ACTIONS if a != "cooling_device"]

    schema = {
        "seconds_per_time_step": 3600,
        "episode_time_steps": n,
        "central_agent": False,
        "random_seed": 7,
        "reward_function": "electricity_consumption",
        "weather": "weather.csv",
        "pricing": "pricing.csv",
        "carbon_intensity": "carbon_intensity.csv",
        "buildings": {
            "building_1": {
                "series": "building_1.csv",
                "comfort_band": 2.0,
                "active_observations": list(BUILDING_1_OBSERVATIONS),
                "active_actions": [],
                "der": {
                    "cooling_device": {
                        "type": "heat_pump", "nominal_power": 10.0,
                        "technical_efficiency": 1.0, "cop_max": 4.0,
                    },
                    "dhw_device": {
                        "type": "electric_heater", "nominal_power": 4.0,
                        "technical_efficiency": 0.9,
                    },
                },
            },
            "building_2": building_2,
        },
    }
    frames = {
        "weather.csv": make_weather(n),
        "pricing.csv": make_pricing(n),
        "carbon_intensity.csv": make_carbon(n),
        "building_1.csv": make_building_series(n, cooling=1.0),
        "building_2.csv": make_building_series(n, cooling=2.0),
        "building_2_pv.csv": make_pv_inverter(n),
        "building_2_ev_0.csv": make_ev_schedule(n),
    }
    bundle = Bundle(schema=schema, frames=frames)
    if with_lstm:
        bundle.extra_files["building_2_lstm.json"] = LSTM_FIXTURE.read_text()
    return bundle


def write_bundle(bundle: Bundle, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for name, frame in bundle.frames.items():
        frame.to_csv(directory / name, index=False)
    for name, text in bundle.extra_files.items():
        (directory / name).write_text(text)
    schema_path = directory / "schema.json"
    schema_path.write_text(json.dumps(bundle.schema, indent=1))
    return schema_path


@pytest.fixture
def default_bundle() -> Bundle:
    return make_default_bundle()


@pytest.fixture
def district_schema(tmp_path, default_bundle) -> Path:
    return write_bundle(default_bundle, tmp_path / "district")
