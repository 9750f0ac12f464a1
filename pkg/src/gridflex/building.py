"""Single-building dispatch: devices, storages, chargers, PV, thermal state.

A :class:`Building` binds one building's configuration and series to a
pure step function. Each dispatched row produces a :class:`StepRecord`
holding every electricity term of the building's net consumption plus
the thermal served/expected bookkeeping the resilience metrics need.

Timing convention: dispatching row ``r`` consumes row ``r``'s demands and
weather and yields the indoor temperature reached at the start of row
``r + 1``. The dataset's indoor temperature column holds start-of-row
temperatures, so buildings with a thermal model replay the first
``lookback`` rows and run the model closed-loop afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from gridflex import der, lstm
from gridflex.dataset import (
    CHARGER_STATE_ENCODING,
    DEVICE_ACTIONS,
    HVAC_MODE_ENCODING,
    BuildingData,
    OccupantCoefficients,
)
from gridflex.der import BatteryState, ThermalStorageState
from gridflex.errors import DomainViolation, UnknownAction

_CONNECTED = CHARGER_STATE_ENCODING["connected"]


@dataclass(frozen=True)
class StepRecord:
    """Everything one dispatched row contributes to KPIs and rewards."""

    row: int
    outage: bool
    cooling_electricity: float
    heating_electricity: float
    dhw_electricity: float
    non_shiftable_load_electricity: float
    battery_electricity: float
    ev_charger_electricity: float
    pv_electricity: float
    net_electricity: float
    cooling_expected: float
    heating_expected: float
    dhw_expected: float
    cooling_served: float
    heating_served: float
    dhw_served: float
    non_shiftable_load_expected: float
    ev_charger_expected: float
    ev_charger_served: float
    indoor_temperature: float
    setpoint: float
    comfort_band: float


@dataclass(frozen=True)
class BuildingState:
    """Immutable snapshot between step calls; ``row`` is the next row to dispatch."""

    row: int
    cooling_storage: ThermalStorageState | None
    heating_storage: ThermalStorageState | None
    dhw_storage: ThermalStorageState | None
    battery: BatteryState | None
    ev_batteries: tuple[BatteryState | None, ...]
    indoor_temperature: float
    effective_setpoint: float
    override_delta: float
    temperature_history: tuple[float, ...]
    zone_load_history: tuple[float, ...]
    last_record: StepRecord | None = None


@dataclass(frozen=True)
class _ThermalOutcome:
    electricity: float
    storage: ThermalStorageState | None
    served: float
    expected: float
    zone_load: float


def sample_setpoint_override(
    t_in: float, coeffs: OccupantCoefficients, occupied: bool, rng: np.random.Generator
) -> float:
    """Signed setpoint delta an occupant applies this step, 0 for none."""
    if not occupied:
        return 0.0
    p = 1.0 / (1.0 + math.exp(-(coeffs.a + coeffs.b * t_in)))
    if rng.random() >= p:
        return 0.0
    magnitude = coeffs.magnitude_large if rng.random() < coeffs.p_large else coeffs.magnitude_small
    return magnitude if coeffs.direction == "increase" else -magnitude


def select_occupant_model(
    models: tuple[OccupantCoefficients, ...], month: int
) -> OccupantCoefficients | None:
    fallback = None
    for model in models:
        if model.months is None:
            fallback = model
        elif month in model.months:
            return model
    return fallback


class Building:
    """Dispatch engine for one building; owns no mutable state."""

    def __init__(self, data: BuildingData, weather: pd.DataFrame, seconds_per_time_step: float):
        self.config = data.config
        self.data = data
        self.seconds_per_time_step = seconds_per_time_step
        self.dt = seconds_per_time_step / 3600.0

        series = data.series
        self.n_rows = len(series)
        self.cooling_demand = series["cooling_demand"].to_numpy(dtype=float)
        self.heating_demand = series["heating_demand"].to_numpy(dtype=float)
        self.dhw_demand = series["dhw_demand"].to_numpy(dtype=float)
        self.non_shiftable_load = series["non_shiftable_load"].to_numpy(dtype=float)
        self.occupant_count = series["occupant_count"].to_numpy(dtype=float)
        self.scheduled_setpoint = series["indoor_dry_bulb_temperature_set_point"].to_numpy(dtype=float)
        self.dataset_temperature = series["indoor_dry_bulb_temperature"].to_numpy(dtype=float)
        self.hvac_mode = np.array(
            [HVAC_MODE_ENCODING.get(m, 0) for m in series["hvac_mode"]], dtype=int
        )
        self.month = series["month"].to_numpy(dtype=int)
        self.day_type = series["day_type"].to_numpy(dtype=int)
        self.hour = series["hour"].to_numpy(dtype=int)
        self.humidity = series["indoor_relative_humidity"].to_numpy(dtype=float)
        self.power_outage_column = (
            series["power_outage"].to_numpy(dtype=float).astype(bool)
            if "power_outage" in series.columns
            else None
        )

        self.outdoor_temperature = weather["outdoor_dry_bulb_temperature"].to_numpy(dtype=float)
        self.direct_irradiance = weather["direct_solar_irradiance"].to_numpy(dtype=float)
        self.diffuse_irradiance = weather["diffuse_solar_irradiance"].to_numpy(dtype=float)

        self.pv_inverter = data.pv_inverter

        self.ev_state_codes: list[np.ndarray] = []
        self.ev_arrival_soc: list[np.ndarray] = []
        self.ev_departure_soc: list[np.ndarray] = []
        self.ev_arrival_time: list[np.ndarray] = []
        self.ev_departure_time: list[np.ndarray] = []
        for schedule in data.ev_schedules:
            self.ev_state_codes.append(
                np.array([CHARGER_STATE_ENCODING.get(s, 0) for s in schedule["charger_state"]], dtype=int)
            )
            self.ev_arrival_soc.append(schedule["estimated_arrival_soc"].to_numpy(dtype=float))
            self.ev_departure_soc.append(schedule["required_departure_soc"].to_numpy(dtype=float))
            self.ev_arrival_time.append(schedule["estimated_arrival_time"].to_numpy(dtype=float))
            self.ev_departure_time.append(schedule["estimated_departure_time"].to_numpy(dtype=float))

        self.lookback = data.lstm.lookback if data.lstm is not None else 0
        self._controlled = {
            "cooling": "cooling_device" in self.config.active_actions,
            "heating": "heating_device" in self.config.active_actions,
        }

    # ------------------------------------------------------------------
    # state construction

    def initial_state(self) -> BuildingState:
        der_specs = self.config.der
        battery = None
        if der_specs.electrical_storage is not None:
            battery = der.initial_battery_state(
                der_specs.electrical_storage, der_specs.electrical_storage_initial_soc
            )
        ev_batteries = tuple(None for _ in der_specs.ev_chargers)
        return BuildingState(
            row=0,
            cooling_storage=ThermalStorageState() if der_specs.cooling_storage else None,
            heating_storage=ThermalStorageState() if der_specs.heating_storage else None,
            dhw_storage=ThermalStorageState() if der_specs.dhw_storage else None,
            battery=battery,
            ev_batteries=ev_batteries,
            indoor_temperature=float(self.dataset_temperature[0]),
            effective_setpoint=float(self.scheduled_setpoint[0]),
            override_delta=0.0,
            temperature_history=(float(self.dataset_temperature[0]),),
            zone_load_history=(),
        )

    # ------------------------------------------------------------------
    # dispatch

    def step(
        self,
        state: BuildingState,
        actions: dict[str, float],
        outage: bool,
        rng: np.random.Generator,
    ) -> tuple[BuildingState, StepRecord]:
        row = state.row
        self._check_actions(actions)
        t_out = float(self.outdoor_temperature[row])
        der_specs = self.config.der

        # occupant override: cleared by a schedule change, held otherwise,
        # and only re-sampled while no override is active
        scheduled = float(self.scheduled_setpoint[row])
        override = state.override_delta
        if row > 0 and scheduled != float(self.scheduled_setpoint[row - 1]):
            override = 0.0
        if override == 0.0 and self.config.occupant_models:
            model = select_occupant_model(self.config.occupant_models, int(self.month[row]))
            if model is not None:
                override = sample_setpoint_override(
                    state.indoor_temperature, model, self.occupant_count[row] > 0, rng
                )
        setpoint = scheduled + override

        mode = int(self.hvac_mode[row])
        cooling_active = mode == HVAC_MODE_ENCODING["cooling"]
        heating_active = mode == HVAC_MODE_ENCODING["heating"]

        ev_batteries = self.resolve_ev_connections(state, row)

        def plan(scale: float, allow_charge: bool):
            # re-dispatching always starts from the pre-step storage states
            return (
                self._dispatch_service(
                    "cooling", state.cooling_storage, actions, row, t_out,
                    cooling_active, scale, allow_charge,
                ),
                self._dispatch_service(
                    "heating", state.heating_storage, actions, row, t_out,
                    heating_active, scale, allow_charge,
                ),
                self._dispatch_service(
                    "dhw", state.dhw_storage, actions, row, t_out, True, scale, allow_charge,
                ),
            )

        nsl_expected = float(self.non_shiftable_load[row])
        pv_available = 0.0
        if der_specs.pv is not None:
            pv_available = -der.pv_energy(
                der_specs.pv, float(self.pv_inverter[row]), self.seconds_per_time_step
            )

        battery_action = float(actions.get("electrical_storage", 0.0))
        planned_battery = None
        if state.battery is not None:
            planned_battery = der.bess_step(
                der_specs.electrical_storage, state.battery, battery_action,
                self.seconds_per_time_step,
            )

        planned_ev = []
        for i, charger in enumerate(der_specs.ev_chargers):
            if ev_batteries[i] is None:
                planned_ev.append((None, 0.0))
                continue
            if charger.mode == "no_control":
                action = 1.0
            else:
                action = float(actions.get(f"electric_vehicle_storage_{i}", 0.0))
            planned_ev.append(
                der.ev_charger_step(charger, ev_batteries[i], action, self.seconds_per_time_step)
            )
        ev_expected = sum(max(0.0, e) for _, e in planned_ev)

        if not outage:
            cooling, heating, dhw = plan(1.0, True)
            new_battery, battery_electricity = (
                planned_battery if planned_battery is not None else (None, 0.0)
            )
            new_ev = tuple(s for s, _ in planned_ev)
            ev_electricity = sum(e for _, e in planned_ev)
            ev_served = ev_expected
            nsl_served = nsl_expected
            pv_electricity = -pv_available
        else:
            (cooling, heating, dhw, new_battery, battery_electricity,
             new_ev, ev_electricity, nsl_served, pv_electricity) = self._dispatch_outage(
                plan, state, ev_batteries, planned_battery, planned_ev,
                nsl_expected, pv_available,
            )
            ev_served = 0.0

        if outage:
            # islanded: the meter reads zero, the island terms balance to
            # within float rounding
            net = 0.0
        else:
            net = (
                cooling.electricity + heating.electricity + dhw.electricity
                + nsl_served + battery_electricity + ev_electricity + pv_electricity
            )

        zone_load = cooling.zone_load if cooling_active else (heating.zone_load if heating_active else 0.0)
        new_temperature = self._advance_temperature(state, row, zone_load)

        record = StepRecord(
            row=row,
            outage=outage,
            cooling_electricity=cooling.electricity,
            heating_electricity=heating.electricity,
            dhw_electricity=dhw.electricity,
            non_shiftable_load_electricity=nsl_served,
            battery_electricity=battery_electricity,
            ev_charger_electricity=ev_electricity,
            pv_electricity=pv_electricity,
            net_electricity=net,
            cooling_expected=cooling.expected,
            heating_expected=heating.expected,
            dhw_expected=dhw.expected,
            cooling_served=cooling.served,
            heating_served=heating.served,
            dhw_served=dhw.served,
            non_shiftable_load_expected=nsl_expected,
            ev_charger_expected=ev_expected,
            ev_charger_served=ev_served,
            indoor_temperature=new_temperature,
            setpoint=setpoint,
            comfort_band=self.config.comfort_band,
        )

        next_row = min(row + 1, self.n_rows - 1)
        next_scheduled = float(self.scheduled_setpoint[next_row])
        new_state = BuildingState(
            row=row + 1,
            cooling_storage=cooling.storage,
            heating_storage=heating.storage,
            dhw_storage=dhw.storage,
            battery=new_battery,
            ev_batteries=new_ev,
            indoor_temperature=new_temperature,
            effective_setpoint=next_scheduled + (override if next_scheduled == scheduled else 0.0),
            override_delta=override,
            temperature_history=(state.temperature_history + (new_temperature,))[-max(self.lookback, 1):],
            zone_load_history=(state.zone_load_history + (zone_load,))[-max(self.lookback, 1):],
            last_record=record,
        )
        return new_state, record

    # ------------------------------------------------------------------
    # helpers

    def _check_actions(self, actions: dict[str, float]) -> None:
        for name, value in actions.items():
            if name not in self.config.active_actions:
                raise UnknownAction(
                    f"building {self.config.name}: {name!r} not in {list(self.config.active_actions)}"
                )
            if math.isnan(value) and name not in DEVICE_ACTIONS:
                raise DomainViolation(f"building {self.config.name}: action {name} is NaN")

    def resolve_ev_connections(
        self, state: BuildingState, row: int
    ) -> tuple[BatteryState | None, ...]:
        """Vehicle packs as dispatch at ``row`` will see them.

        Arrivals spawn a fresh battery at the estimated arrival SoC;
        observation assembly calls this too so the agent sees the pack
        it is about to control.
        """
        resolved = []
        for i, charger in enumerate(self.config.der.ev_chargers):
            connected = self.ev_state_codes[i][row] == _CONNECTED
            if not connected:
                resolved.append(None)
                continue
            was_connected = row > 0 and self.ev_state_codes[i][row - 1] == _CONNECTED
            if was_connected and state.ev_batteries[i] is not None:
                resolved.append(state.ev_batteries[i])
            else:
                soc = self.ev_arrival_soc[i][row]
                resolved.append(
                    der.initial_battery_state(charger.battery, 0.0 if math.isnan(soc) else float(soc))
                )
        return tuple(resolved)

    def _dispatch_service(
        self,
        service: str,
        storage_state: ThermalStorageState | None,
        actions: dict[str, float],
        row: int,
        t_out: float,
        active: bool,
        scale: float,
        allow_charge: bool,
    ) -> _ThermalOutcome:
        der_specs = self.config.der
        device = getattr(der_specs, f"{service}_device")
        storage = getattr(der_specs, f"{service}_storage")
        storage_action = float(actions.get(f"{service}_storage", 0.0))
        mode = "cooling" if service == "cooling" else "heating"
        demand = float(getattr(self, f"{service}_demand")[row])

        if not active or device is None:
            # inactive service: device off, storage only decays
            new_storage = storage_state
            if storage is not None and storage_state is not None:
                new_storage, _ = der.tes_step(storage, storage_state, 0.0)
            return _ThermalOutcome(0.0, new_storage, 0.0, 0.0, 0.0)

        device_action = actions.get(f"{service}_device", math.nan)
        controlled = service in self._controlled and self._controlled[service]
        if controlled and not math.isnan(device_action):
            return self._dispatch_controlled(
                device, storage, storage_state, storage_action, float(device_action),
                t_out, mode, scale, allow_charge,
            )
        return self._dispatch_ideal(
            device, storage, storage_state, storage_action, demand,
            t_out, mode, scale, allow_charge,
        )

    def _dispatch_ideal(
        self, device, storage, storage_state, storage_action, demand,
        t_out, mode, scale, allow_charge,
    ) -> _ThermalOutcome:
        discharge = 0.0
        new_storage = storage_state
        if storage is not None and storage_action < 0:
            # discharge covers the load before the device runs, capped at demand
            effective = -min(-storage_action, demand / storage.capacity)
            new_storage, balance = der.tes_step(storage, storage_state, effective)
            discharge = -balance
        remaining = max(0.0, demand - discharge)
        base_electricity = (
            der.device_electricity(device, remaining, t_out, mode) if remaining > 0 else 0.0
        )
        charge_electricity, new_storage = self._charge_storage(
            device, storage, storage_state if storage_action >= 0 else new_storage,
            storage_action, base_electricity, t_out, mode, allow_charge,
        )
        return _ThermalOutcome(
            electricity=scale * base_electricity + charge_electricity,
            storage=new_storage,
            served=discharge + scale * remaining,
            expected=demand,
            zone_load=discharge + scale * remaining,
        )

    def _dispatch_controlled(
        self, device, storage, storage_state, storage_action, device_action,
        t_out, mode, scale, allow_charge,
    ) -> _ThermalOutcome:
        base_electricity = device_action * device.nominal_power * self.dt
        output = der.device_output(device, scale * base_electricity, t_out, mode)
        discharge = 0.0
        new_storage = storage_state
        if storage is not None and storage_action < 0:
            # no demand ceiling here: whatever discharges goes into the zone
            new_storage, balance = der.tes_step(storage, storage_state, storage_action)
            discharge = -balance
        charge_electricity, new_storage = self._charge_storage(
            device, storage, storage_state if storage_action >= 0 else new_storage,
            storage_action, base_electricity, t_out, mode, allow_charge,
        )
        zone = output + discharge
        return _ThermalOutcome(
            electricity=scale * base_electricity + charge_electricity,
            storage=new_storage,
            served=zone,
            expected=der.device_output(device, base_electricity, t_out, mode) + discharge,
            zone_load=zone,
        )

    def _charge_storage(
        self, device, storage, storage_state, storage_action,
        base_electricity, t_out, mode, allow_charge,
    ) -> tuple[float, ThermalStorageState | None]:
        if storage is None or storage_state is None:
            return 0.0, storage_state
        if storage_action <= 0:
            if storage_action == 0:
                storage_state, _ = der.tes_step(storage, storage_state, 0.0)
            return 0.0, storage_state
        if not allow_charge:
            storage_state, _ = der.tes_step(storage, storage_state, 0.0)
            return 0.0, storage_state
        # charging may only use nominal power left over after the load
        budget_electricity = max(0.0, device.nominal_power * self.dt - base_electricity)
        budget_thermal = der.device_output(device, budget_electricity, t_out, mode)
        effective = min(storage_action, budget_thermal / storage.capacity)
        new_storage, balance = der.tes_step(storage, storage_state, effective)
        return der.device_electricity(device, balance, t_out, mode), new_storage

    def _dispatch_outage(
        self, plan, state, ev_batteries, planned_battery, planned_ev,
        nsl_expected, pv_available,
    ):
        der_specs = self.config.der
        cooling, heating, dhw = plan(1.0, False)
        thermal = cooling.electricity + heating.electricity + dhw.electricity

        battery_supply = 0.0
        if planned_battery is not None and planned_battery[1] < 0:
            battery_supply = -planned_battery[1]
        ev_supplies = [max(0.0, -e) for _, e in planned_ev]
        supply = pv_available + battery_supply + sum(ev_supplies)

        if supply >= thermal + nsl_expected:
            factor = 1.0
            nsl_served = nsl_expected
        elif supply >= nsl_expected:
            factor = (supply - nsl_expected) / thermal if thermal > 0 else 1.0
            nsl_served = nsl_expected
        else:
            factor = 0.0
            nsl_served = supply

        if factor < 1.0:
            expected = (cooling.expected, heating.expected, dhw.expected)
            cooling, heating, dhw = plan(factor, False)
            cooling = replace(cooling, expected=expected[0])
            heating = replace(heating, expected=expected[1])
            dhw = replace(dhw, expected=expected[2])

        total = cooling.electricity + heating.electricity + dhw.electricity + nsl_served
        pv_used = min(pv_available, total)
        needed = total - pv_used
        battery_used = min(battery_supply, needed)
        needed -= battery_used

        if state.battery is not None:
            if battery_used > 0:
                new_battery, battery_electricity = der.bess_step_energy(
                    der_specs.electrical_storage, state.battery, -battery_used,
                    self.seconds_per_time_step,
                )
            else:
                new_battery, battery_electricity = der.bess_step(
                    der_specs.electrical_storage, state.battery, 0.0, self.seconds_per_time_step
                )
        else:
            new_battery, battery_electricity = None, 0.0

        new_ev = []
        ev_electricity = 0.0
        for i, charger in enumerate(der_specs.ev_chargers):
            battery_state = ev_batteries[i]
            if battery_state is None:
                new_ev.append(None)
                continue
            use = min(ev_supplies[i], needed)
            needed -= use
            if use > 0:
                # meter-side draw of `use`: battery grid-side energy is
                # charger-efficiency times that
                battery_new, balance = der.bess_step_energy(
                    charger.battery, battery_state, -use * charger.technical_efficiency,
                    self.seconds_per_time_step,
                )
                new_ev.append(battery_new)
                ev_electricity += balance / charger.technical_efficiency
            else:
                battery_new, _ = der.bess_step_energy(
                    charger.battery, battery_state, 0.0, self.seconds_per_time_step
                )
                new_ev.append(battery_new)

        pv_electricity = -pv_used
        return (
            cooling, heating, dhw, new_battery, battery_electricity,
            tuple(new_ev), ev_electricity, nsl_served, pv_electricity,
        )

    # ------------------------------------------------------------------
    # thermal state

    def _advance_temperature(self, state: BuildingState, row: int, zone_load: float) -> float:
        if self.data.lstm is None or row < self.lookback - 1:
            return float(self.dataset_temperature[min(row + 1, self.n_rows - 1)])
        loads = (state.zone_load_history + (zone_load,))[-self.lookback:]
        temps = state.temperature_history[-self.lookback:]
        window = np.empty((self.lookback, lstm.N_FEATURES))
        start = row - self.lookback + 1
        for j in range(self.lookback):
            idx = start + j
            window[j] = (
                temps[j],
                self.outdoor_temperature[idx],
                loads[j],
                self.direct_irradiance[idx],
                self.diffuse_irradiance[idx],
                self.occupant_count[idx],
                self.month[idx],
                self.day_type[idx],
                self.hour[idx],
            )
        return lstm.predict_temperature(self.data.lstm, window)
