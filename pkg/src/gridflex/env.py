"""Episodic simulation environment over a loaded district.

One ``step`` call dispatches every building for one time step, sums the
building meters into a district net, and scores the transition with the
configured reward function. Episodes have a fixed length; ``terminated``
turns true on the final step and further calls raise ``EpisodeFinished``.

Observations returned by ``reset``/``step`` are assembled per building in
``active_observations`` order. Names backed by the dataset (calendar,
weather, pricing, demands in ideal mode, EV schedules) read the current
row; names that describe metered quantities (the ``*_consumption`` family)
replay the previous step's record and are zero right after reset.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from gridflex import __version__, der
from gridflex.building import Building, BuildingState, StepRecord
from gridflex.dataset import (
    CARBON_COLUMNS,
    District,
    HVAC_MODE_ENCODING,
    PRICING_COLUMNS,
    WEATHER_COLUMNS,
    action_bounds,
)
from gridflex.der import HeatPumpSpec
from gridflex.errors import (
    ActionArityMismatch,
    ConfigInvalid,
    EpisodeFinished,
    UnknownObservation,
)
from gridflex.kpis import BuildingTrace, EpisodeTrace
from gridflex.outage import generate_outage_signal
from gridflex.rewards import RewardContext, district_reward, get_reward

_MODE_NAMES = {code: name for name, code in HVAC_MODE_ENCODING.items()}

# RNG sub-stream channels hung off the episode seed, one pair per building
_OCCUPANT_CHANNEL = 0
_OUTAGE_CHANNEL = 1

# reader closure: (state, last_record, row, outage flag) -> observation value
_Reader = Callable[[BuildingState, "StepRecord | None", int, bool], float]


def _stream(seed: int, building_index: int, channel: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, building_index, channel]))


# ---------------------------------------------------------------------------
# observation assembly


def _resolve_observation(
    name: str,
    building: Building,
    weather: pd.DataFrame,
    pricing: pd.DataFrame | None,
    carbon: pd.DataFrame | None,
) -> _Reader:
    """Bind one observation name to a reader closure.

    Resolution happens once per episode setup so the per-step cost is a
    plain function call; unknown names fail here, not mid-episode.
    """
    der_specs = building.config.der
    series = building.data.series

    def from_array(values: np.ndarray) -> _Reader:
        array = np.asarray(values, dtype=float)

        def read(state: BuildingState, record: StepRecord | None, row: int, outage: bool) -> float:
            return float(array[row])

        return read

    def from_record(field: str) -> _Reader:
        def read(state: BuildingState, record: StepRecord | None, row: int, outage: bool) -> float:
            return float(getattr(record, field)) if record is not None else 0.0

        return read

    if name in ("month", "day_type", "hour"):
        return from_array(getattr(building, name))
    if name == "daylight_savings_status":
        return from_array(series["daylight_savings_status"].to_numpy(dtype=float))
    if name in WEATHER_COLUMNS:
        return from_array(weather[name].to_numpy(dtype=float))
    if name in PRICING_COLUMNS:
        if pricing is None:
            raise UnknownObservation(f"{name}: district has no pricing data")
        return from_array(pricing[name].to_numpy(dtype=float))
    if name in CARBON_COLUMNS:
        if carbon is None:
            raise UnknownObservation(f"{name}: district has no carbon intensity data")
        return from_array(carbon[name].to_numpy(dtype=float))

    if name == "indoor_relative_humidity":
        return from_array(building.humidity)
    if name == "occupant_count":
        return from_array(building.occupant_count)
    if name == "hvac_mode":
        return from_array(building.hvac_mode)

    if name in ("cooling_demand", "heating_demand"):
        service = name.split("_")[0]
        # with the device under agent control the dataset column is moot;
        # report what the HVAC actually delivered on the previous step
        if f"{service}_device" in building.config.active_actions:
            return from_record(f"{service}_served")
        return from_array(getattr(building, name))
    if name == "dhw_demand":
        return from_array(building.dhw_demand)
    if name == "non_shiftable_load":
        return from_array(building.non_shiftable_load)

    if name == "indoor_dry_bulb_temperature":
        return lambda state, record, row, outage: state.indoor_temperature
    if name == "indoor_dry_bulb_temperature_set_point":
        return lambda state, record, row, outage: state.effective_setpoint
    if name == "indoor_dry_bulb_temperature_delta":
        return lambda state, record, row, outage: state.indoor_temperature - state.effective_setpoint
    if name == "indoor_dry_bulb_temperature_set_point_override_delta":
        return lambda state, record, row, outage: state.override_delta

    if name == "cooling_electricity_consumption":
        return from_record("cooling_electricity")
    if name == "heating_electricity_consumption":
        return from_record("heating_electricity")
    if name == "dhw_electricity_consumption":
        return from_record("dhw_electricity")
    if name == "electrical_storage_electricity_consumption":
        return from_record("battery_electricity")
    if name == "net_electricity_consumption":
        return from_record("net_electricity")

    if name in ("cooling_storage_soc", "heating_storage_soc", "dhw_storage_soc"):
        attr = name.removesuffix("_soc")
        tank_spec = getattr(der_specs, attr)
        if tank_spec is None:
            return lambda state, record, row, outage: 0.0

        def read_tes(state: BuildingState, record: StepRecord | None, row: int, outage: bool) -> float:
            tank = getattr(state, attr)
            return der.tes_soc(tank_spec, tank) if tank is not None else 0.0

        return read_tes

    if name == "electrical_storage_soc":
        battery_spec = der_specs.electrical_storage
        if battery_spec is None:
            return lambda state, record, row, outage: 0.0
        return lambda state, record, row, outage: der.battery_soc(battery_spec, state.battery)

    if name == "solar_generation":
        if der_specs.pv is None or building.pv_inverter is None:
            return lambda state, record, row, outage: 0.0
        pv_spec = der_specs.pv
        inverter = building.pv_inverter
        sps = building.seconds_per_time_step
        return lambda state, record, row, outage: -der.pv_energy(pv_spec, float(inverter[row]), sps)

    if name in ("cooling_device_efficiency", "heating_device_efficiency", "dhw_device_efficiency"):
        service = name.split("_")[0]
        device = getattr(der_specs, f"{service}_device")
        if device is None:
            return lambda state, record, row, outage: 0.0
        if isinstance(device, HeatPumpSpec):
            mode = "cooling" if service == "cooling" else "heating"
            t_out = building.outdoor_temperature

            def read_cop(state: BuildingState, record: StepRecord | None, row: int, outage: bool) -> float:
                return der.cop(device, float(t_out[row]), mode)

            return read_cop
        efficiency = float(device.technical_efficiency)
        return lambda state, record, row, outage: efficiency

    if name == "power_outage":
        return lambda state, record, row, outage: float(outage)

    if name.startswith("electric_vehicle_"):
        stem, _, tail = name.rpartition("_")
        try:
            index = int(tail)
        except ValueError:
            raise UnknownObservation(name) from None
        if not 0 <= index < len(der_specs.ev_chargers):
            raise UnknownObservation(
                f"{name}: building has {len(der_specs.ev_chargers)} charger(s)"
            )
        if stem == "electric_vehicle_charger_state":
            return from_array(building.ev_state_codes[index])
        if stem == "electric_vehicle_soc":
            pack_spec = der_specs.ev_chargers[index].battery

            def read_soc(state: BuildingState, record: StepRecord | None, row: int, outage: bool) -> float:
                # resolve arrivals so a freshly-connected pack is visible
                # on the row whose action will control it
                pack = building.resolve_ev_connections(state, row)[index]
                return der.battery_soc(pack_spec, pack) if pack is not None else 0.0

            return read_soc
        # schedule columns; NaN marks "no vehicle expected" and reads as 0
        schedule_arrays = {
            "electric_vehicle_estimated_arrival_soc": building.ev_arrival_soc,
            "electric_vehicle_required_departure_soc": building.ev_departure_soc,
            "electric_vehicle_estimated_arrival_time": building.ev_arrival_time,
            "electric_vehicle_estimated_departure_time": building.ev_departure_time,
        }
        if stem in schedule_arrays:
            return from_array(np.nan_to_num(schedule_arrays[stem][index], nan=0.0))

    raise UnknownObservation(name)


def assemble_observation(
    names: Sequence[str],
    building: Building,
    state: BuildingState,
    record: StepRecord | None,
    row: int,
    outage: bool,
    weather: pd.DataFrame,
    pricing: pd.DataFrame | None = None,
    carbon: pd.DataFrame | None = None,
) -> np.ndarray:
    """Observation vector for one building, ordered as ``names``.

    ``record`` is the building's previous StepRecord (None right after
    reset); ``row`` is the series row the values describe; ``outage`` is
    the outage flag in force at that row.
    """
    readers = [_resolve_observation(name, building, weather, pricing, carbon) for name in names]
    return np.array([read(state, record, row, outage) for read in readers], dtype=float)


# ---------------------------------------------------------------------------
# environment


class GridflexEnv:
    """Fixed-length episode engine for a district of buildings.

    Actions arrive as one flat vector when the district runs a central
    agent, or as one vector per building otherwise. Values outside the
    declared bounds are clipped, never rejected; NaN on a device action
    passes through as the thermostat-following sentinel. ``info`` flags
    any clipping that occurred.

    Instances are single-threaded and must not be shared mid-episode.
    """

    def __init__(self, district: District):
        if district.report:
            raise ConfigInvalid(
                "district failed validation; fix the dataset first:\n"
                + district.report.summary()
            )
        self.district = district
        self.config = district.config
        self.n_time_steps = self.config.episode_time_steps
        sps = self.config.seconds_per_time_step
        self.buildings = [
            Building(data, district.weather, sps) for data in district.buildings
        ]
        for building in self.buildings:
            if building.n_rows < self.n_time_steps:
                raise ConfigInvalid(
                    f"{building.config.name}: {building.n_rows} rows cannot cover "
                    f"a {self.n_time_steps}-step episode"
                )
        try:
            self._reward_fn = get_reward(self.config.reward_function)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None

        self.action_names: list[tuple[str, ...]] = [
            tuple(b.config.active_actions) for b in self.buildings
        ]
        self.observation_names: list[tuple[str, ...]] = [
            tuple(b.config.active_observations) for b in self.buildings
        ]
        bounds = [action_bounds(b.config) for b in self.buildings]
        self.action_lows = [np.array([low for low, _ in bb]) for bb in bounds]
        self.action_highs = [np.array([high for _, high in bb]) for bb in bounds]
        self._arity = [len(names) for names in self.action_names]
        self._total_actions = sum(self._arity)
        self._readers: list[list[_Reader]] = [
            [
                _resolve_observation(
                    name, building, district.weather, district.pricing, district.carbon
                )
                for name in building.config.active_observations
            ]
            for building in self.buildings
        ]

        self._step_count: int | None = None
        self._terminated = False

    # ------------------------------------------------------------------
    # episode lifecycle

    def reset(self, seed: int | None = None) -> np.ndarray | list[np.ndarray]:
        """Start a fresh episode and return the initial observations.

        ``seed`` defaults to the schema's random_seed. Every stochastic
        model gets its own stream derived from (seed, building index,
        channel), so adding a building never shifts another one's draws.
        """
        if seed is None:
            seed = self.config.random_seed
        seed = int(seed)
        if seed < 0:
            raise ConfigInvalid(f"random seed must be >= 0, got {seed}")
        self._seed = seed
        self._occupant_rngs = [
            _stream(seed, index, _OCCUPANT_CHANNEL) for index in range(len(self.buildings))
        ]
        self._outage_signals = [
            self._outage_signal(building, index)
            for index, building in enumerate(self.buildings)
        ]
        self._states = [building.initial_state() for building in self.buildings]
        self._records: list[StepRecord | None] = [None] * len(self.buildings)
        self._step_count = 0
        self._terminated = False
        self._trace: list[list[StepRecord]] = [[] for _ in self.buildings]
        self._action_log: list[list[tuple[float, ...]]] = [[] for _ in self.buildings]
        self._reward_log: list[list[float]] = [[] for _ in self.buildings]
        self._district_net_log: list[float] = []
        self._obs_log: list[list[np.ndarray]] = [[] for _ in self.buildings]
        return self._observations()

    def step(
        self, actions: Sequence
    ) -> tuple[np.ndarray | list[np.ndarray], list[float], bool, dict]:
        """Advance the district one time step.

        Returns (observations, rewards, terminated, info). Rewards hold
        one entry per building, or a single district entry under a
        central agent; info always carries the per-building rewards,
        StepRecords, the district net and any clipped action names.
        """
        if self._step_count is None:
            raise EpisodeFinished("environment has not been reset; call reset() first")
        if self._terminated:
            raise EpisodeFinished(
                f"episode of {self.n_time_steps} steps already finished; call reset()"
            )
        vectors = self._split_actions(actions)
        row = self._step_count
        clipped: list[tuple[str, str]] = []
        records: list[StepRecord] = []
        for i, building in enumerate(self.buildings):
            raw = vectors[i]
            clamped = np.clip(raw, self.action_lows[i], self.action_highs[i])
            for j, action_name in enumerate(building.config.active_actions):
                # NaN compares unequal to itself; skip the sentinel
                if raw[j] == raw[j] and clamped[j] != raw[j]:
                    clipped.append((building.config.name, action_name))
            acts = dict(zip(building.config.active_actions, (float(v) for v in clamped)))
            outage = bool(self._outage_signals[i][row])
            state, record = building.step(
                self._states[i], acts, outage, self._occupant_rngs[i]
            )
            self._states[i] = state
            self._records[i] = record
            records.append(record)
            self._trace[i].append(record)
            self._action_log[i].append(tuple(float(v) for v in clamped))
        district_net = sum(record.net_electricity for record in records)
        building_rewards = self._building_rewards(records, district_net)
        for i, value in enumerate(building_rewards):
            self._reward_log[i].append(value)
        self._district_net_log.append(district_net)
        if self.config.central_agent:
            rewards = [district_reward(building_rewards)]
        else:
            rewards = list(building_rewards)
        self._step_count += 1
        self._terminated = self._step_count >= self.n_time_steps
        observations = self._observations()
        info = {
            "step": self._step_count,
            "records": tuple(records),
            "district_net_electricity": district_net,
            "building_rewards": tuple(building_rewards),
            "clipped_actions": tuple(clipped),
        }
        return observations, rewards, self._terminated, info

    # ------------------------------------------------------------------
    # internals

    def _outage_signal(self, building: Building, index: int) -> np.ndarray:
        n = self.n_time_steps
        model = building.config.outage
        if model is not None:
            # a model-level seed pins the outage scenario across resets;
            # otherwise the signal follows the episode seed
            if model.seed is not None:
                rng = np.random.default_rng(model.seed)
            else:
                rng = _stream(self._seed, index, _OUTAGE_CHANNEL)
            return generate_outage_signal(
                model, n, self.config.seconds_per_time_step, rng
            )
        if building.power_outage_column is not None:
            return building.power_outage_column[:n].copy()
        return np.zeros(n, dtype=bool)

    def _split_actions(self, actions: Sequence) -> list[np.ndarray]:
        if self.config.central_agent:
            try:
                flat = np.asarray(actions, dtype=float)
            except (TypeError, ValueError):
                raise ActionArityMismatch(
                    f"central agent expects one flat vector of "
                    f"{self._total_actions} action(s)"
                ) from None
            if flat.ndim != 1 or flat.size != self._total_actions:
                raise ActionArityMismatch(
                    f"central agent expects one flat vector of {self._total_actions} "
                    f"action(s), got shape {flat.shape}"
                )
            out = []
            start = 0
            for arity in self._arity:
                out.append(flat[start : start + arity])
                start += arity
            return out
        if len(actions) != len(self.buildings):
            raise ActionArityMismatch(
                f"expected one action vector per building "
                f"({len(self.buildings)}), got {len(actions)}"
            )
        out = []
        for i, vector in enumerate(actions):
            try:
                array = np.asarray(vector, dtype=float)
            except (TypeError, ValueError):
                raise ActionArityMismatch(
                    f"{self.buildings[i].config.name}: expected "
                    f"{self._arity[i]} action(s)"
                ) from None
            if array.ndim != 1 or array.size != self._arity[i]:
                raise ActionArityMismatch(
                    f"{self.buildings[i].config.name}: expected {self._arity[i]} "
                    f"action(s), got shape {array.shape}"
                )
            out.append(array)
        return out

    def _building_rewards(
        self, records: list[StepRecord], district_net: float
    ) -> list[float]:
        params = self.config.reward_params
        values = []
        for i, building in enumerate(self.buildings):
            record = records[i]
            context = RewardContext(
                net_electricity=record.net_electricity,
                district_net=district_net,
                indoor_temperature=record.indoor_temperature,
                setpoint=record.setpoint,
                comfort_band=record.comfort_band,
                hvac_mode=_MODE_NAMES[int(building.hvac_mode[record.row])],
                ess_socs=self._ess_socs(building, self._states[i]),
            )
            values.append(self._reward_fn(context, params))
        return values

    @staticmethod
    def _ess_socs(building: Building, state: BuildingState) -> tuple[float, ...]:
        # stationary storage only, in declaration order; EV packs come and go
        der_specs = building.config.der
        socs = []
        for attr in ("cooling_storage", "heating_storage", "dhw_storage"):
            spec = getattr(der_specs, attr)
            tank = getattr(state, attr)
            if spec is not None and tank is not None:
                socs.append(der.tes_soc(spec, tank))
        if der_specs.electrical_storage is not None and state.battery is not None:
            socs.append(der.battery_soc(der_specs.electrical_storage, state.battery))
        return tuple(socs)

    def _observations(self) -> np.ndarray | list[np.ndarray]:
        row = min(self._step_count, self.n_time_steps - 1)
        per_building = []
        for i in range(len(self.buildings)):
            outage = bool(self._outage_signals[i][row])
            vector = np.array(
                [
                    read(self._states[i], self._records[i], row, outage)
                    for read in self._readers[i]
                ],
                dtype=float,
            )
            self._obs_log[i].append(vector)
            per_building.append(vector)
        if self.config.central_agent:
            return np.concatenate(per_building) if per_building else np.array([])
        return per_building

    # ------------------------------------------------------------------
    # trace access

    def episode_trace(self) -> EpisodeTrace:
        """Completed portion of the current episode as a KPI-ready trace."""
        if self._step_count is None:
            raise EpisodeFinished("environment has not been reset; nothing to export")
        return EpisodeTrace(
            buildings=tuple(
                BuildingTrace(
                    name=building.config.name, records=tuple(self._trace[i])
                )
                for i, building in enumerate(self.buildings)
            )
        )


def export_trace(env: GridflexEnv, out_dir: str | Path) -> Path:
    """Write the episode run so far to ``out_dir`` and return it.

    Emits one ``<building>.csv`` per building (StepRecord columns plus the
    submitted actions and per-step reward), ``<building>_observations.csv``
    with the vectors the agent saw, ``district.csv`` with the district net
    series (plus pricing and carbon rates when loaded), and
    ``run_summary.json``.
    """
    if env._step_count is None:
        raise EpisodeFinished("environment has not been reset; nothing to export")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, building in enumerate(env.buildings):
        name = building.config.name
        frame = pd.DataFrame([dataclasses.asdict(r) for r in env._trace[i]])
        if not frame.empty:
            frame["outage"] = frame["outage"].astype(int)
            for j, action_name in enumerate(building.config.active_actions):
                frame[f"action_{action_name}"] = [a[j] for a in env._action_log[i]]
            frame["reward"] = env._reward_log[i]
        frame.to_csv(out / f"{name}.csv", index=False)
        observations = pd.DataFrame(
            env._obs_log[i], columns=list(building.config.active_observations)
        )
        observations.to_csv(out / f"{name}_observations.csv", index=False)

    steps = len(env._district_net_log)
    district = {"row": list(range(steps)), "net_electricity": env._district_net_log}
    if env.district.pricing is not None:
        district["electricity_pricing"] = (
            env.district.pricing["electricity_pricing"].to_numpy(dtype=float)[:steps]
        )
    if env.district.carbon is not None:
        district["carbon_intensity"] = (
            env.district.carbon["carbon_intensity"].to_numpy(dtype=float)[:steps]
        )
    pd.DataFrame(district).to_csv(out / "district.csv", index=False)

    summary = {
        "engine_version": __version__,
        "schema_path": str(env.district.schema_path),
        "seed": env._seed,
        "central_agent": env.config.central_agent,
        "reward_function": env.config.reward_function,
        "seconds_per_time_step": env.config.seconds_per_time_step,
        "episode_time_steps": env.n_time_steps,
        "steps_completed": steps,
        "buildings": [b.config.name for b in env.buildings],
        "reward_totals": {
            b.config.name: float(sum(env._reward_log[i]))
            for i, b in enumerate(env.buildings)
        },
        "district_net_total": float(sum(env._district_net_log)),
    }
    with open(out / "run_summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2)
        handle.write("\n")
    return out
