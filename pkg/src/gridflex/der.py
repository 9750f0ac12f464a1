"""Distributed energy resource models.

All step functions are pure: they take an immutable spec plus the current
device state and return ``(new_state, electricity_kwh)`` without mutating
their inputs. Electricity is signed from the building meter's point of
view: consumption is positive, generation/discharge is negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from gridflex.errors import ActionOutOfRangeForMode, NegativeIdealLoad

Curve = tuple[tuple[float, float], ...]

COOLING = "cooling"
HEATING = "heating"


@dataclass(frozen=True)
class HeatPumpSpec:
    """Electric heat pump sized by nominal electric input power (kW)."""

    nominal_power: float
    technical_efficiency: float = 1.0
    supply_temperature_cooling: float = 8.0
    supply_temperature_heating: float = 45.0
    cop_max: float = 20.0


@dataclass(frozen=True)
class ElectricHeaterSpec:
    """Resistance heater; output is technical efficiency * electricity."""

    nominal_power: float
    technical_efficiency: float = 0.9


@dataclass(frozen=True)
class ThermalStorageSpec:
    """Sensible thermal tank charged/discharged as a fraction of capacity."""

    capacity: float
    technical_efficiency: float = 0.9
    loss_coefficient: float = 0.006

    @property
    def round_trip_efficiency(self) -> float:
        return math.sqrt(self.technical_efficiency)


@dataclass
class ThermalStorageState:
    stored_energy: float = 0.0


@dataclass(frozen=True)
class BatterySpec:
    """Electro-chemical storage with degradation and power curves.

    ``capacity`` is the initial (undegraded) capacity C0 in kWh; state of
    charge is always expressed relative to C0. ``capacity_power_curve``
    maps state of charge to the fraction of ``nominal_power`` available;
    ``power_efficiency_curve`` maps the requested power as a fraction of
    ``nominal_power`` to the technical efficiency. Either curve may be
    omitted, in which case the limit is flat (1.0) or the efficiency is
    the constant ``technical_efficiency``.
    """

    capacity: float
    nominal_power: float
    technical_efficiency: float = 0.9
    loss_coefficient: float = 0.0
    capacity_loss_coefficient: float = 1e-5
    depth_of_discharge: float = 1.0
    power_efficiency_curve: Curve | None = None
    capacity_power_curve: Curve | None = None


@dataclass
class BatteryState:
    stored_energy: float = 0.0
    capacity: float = 0.0


@dataclass(frozen=True)
class EVChargerSpec:
    """Charging point for one electric vehicle.

    ``mode`` is one of ``v2g`` (bidirectional), ``g2v`` (charge only,
    controllable) or ``no_control`` (charges at full power whenever a
    vehicle is connected). ``technical_efficiency`` is the charger-side
    conversion loss between the meter and the vehicle battery terminal;
    the battery applies its own round-trip efficiency on top.
    """

    charger_id: str
    battery: BatterySpec
    nominal_power_charging: float
    nominal_power_discharging: float
    technical_efficiency: float = 1.0
    mode: str = "v2g"


@dataclass(frozen=True)
class PVSpec:
    """Photovoltaic array sized by nominal AC power (kW)."""

    nominal_power: float


def interp_curve(curve: Curve, x: float) -> float:
    """Piecewise-linear interpolation with clamping at both ends."""
    if x <= curve[0][0]:
        return curve[0][1]
    if x >= curve[-1][0]:
        return curve[-1][1]
    for (x0, y0), (x1, y1) in zip(curve, curve[1:]):
        if x0 <= x <= x1:
            if x1 == x0:
                return y1
            return y0 + (x - x0) * (y1 - y0) / (x1 - x0)
    return curve[-1][1]


def cop(spec: HeatPumpSpec, outdoor_temperature: float, mode: str) -> float:
    """Ideal-cycle coefficient of performance at the given outdoor temperature.

    Cooling uses (T_supply + 273.15) / (T_outdoor - T_supply), heating uses
    (T_supply + 273.15) / (T_supply - T_outdoor); both are clamped to
    ``spec.cop_max`` when the temperature lift is non-positive or the ratio
    exceeds the cap.
    """
    if mode == COOLING:
        supply = spec.supply_temperature_cooling
        lift = outdoor_temperature - supply
    elif mode == HEATING:
        supply = spec.supply_temperature_heating
        lift = supply - outdoor_temperature
    else:
        raise ValueError(f"unknown heat pump mode: {mode!r}")
    if lift <= 0:
        return spec.cop_max
    value = (supply + 273.15) / lift
    if not math.isfinite(value) or value <= 0 or value > spec.cop_max:
        return spec.cop_max
    return value


def device_cop(spec: HeatPumpSpec | ElectricHeaterSpec, outdoor_temperature: float, mode: str) -> float:
    """COP of a thermal device; electric heaters are COP 1 in every mode."""
    if isinstance(spec, HeatPumpSpec):
        return cop(spec, outdoor_temperature, mode)
    return 1.0


def device_output(
    spec: HeatPumpSpec | ElectricHeaterSpec,
    electricity: float,
    outdoor_temperature: float,
    mode: str,
) -> float:
    """Thermal output (kWh) produced from ``electricity`` kWh of input."""
    return spec.technical_efficiency * device_cop(spec, outdoor_temperature, mode) * electricity


def device_electricity(
    spec: HeatPumpSpec | ElectricHeaterSpec,
    thermal_output: float,
    outdoor_temperature: float,
    mode: str,
) -> float:
    """Electricity (kWh) required to produce ``thermal_output`` kWh."""
    if thermal_output < 0:
        raise NegativeIdealLoad(f"ideal load must be >= 0, got {thermal_output}")
    return thermal_output / (spec.technical_efficiency * device_cop(spec, outdoor_temperature, mode))


def tes_step(
    spec: ThermalStorageSpec,
    state: ThermalStorageState,
    action: float,
) -> tuple[ThermalStorageState, float]:
    """Advance a thermal store by one step.

    ``action`` is the commanded energy as a fraction of capacity, positive
    to charge. The returned balance is the thermal energy exchanged on the
    device side of the store (positive when charging): the store itself
    gains ``balance * eta_rt`` when charging and loses ``|balance| / eta_rt``
    when discharging. Standing losses decay the stored energy every step
    regardless of the action.
    """
    eta = spec.round_trip_efficiency
    carried = state.stored_energy * (1.0 - spec.loss_coefficient)
    if action > 0:
        new_energy = min(spec.capacity, carried + action * spec.capacity * eta)
        balance = (new_energy - carried) / eta
    elif action < 0:
        new_energy = max(0.0, carried + action * spec.capacity / eta)
        balance = (new_energy - carried) * eta
    else:
        new_energy = carried
        balance = 0.0
    return ThermalStorageState(stored_energy=new_energy), balance


def tes_soc(spec: ThermalStorageSpec, state: ThermalStorageState) -> float:
    return state.stored_energy / spec.capacity


def battery_soc(spec: BatterySpec, state: BatteryState) -> float:
    return state.stored_energy / spec.capacity


def initial_battery_state(spec: BatterySpec, initial_soc: float = 0.0) -> BatteryState:
    return BatteryState(stored_energy=initial_soc * spec.capacity, capacity=spec.capacity)


def battery_max_power(spec: BatterySpec, state: BatteryState) -> float:
    """Maximum charge/discharge power (kW) at the current state of charge."""
    if spec.capacity_power_curve is None:
        return spec.nominal_power
    return spec.nominal_power * interp_curve(spec.capacity_power_curve, battery_soc(spec, state))


def battery_technical_efficiency(spec: BatterySpec, requested_power: float) -> float:
    """Technical efficiency at the requested (absolute) power in kW."""
    if spec.power_efficiency_curve is None:
        return spec.technical_efficiency
    if spec.nominal_power <= 0:
        return spec.technical_efficiency
    ratio = abs(requested_power) / spec.nominal_power
    return interp_curve(spec.power_efficiency_curve, ratio)


def bess_step(
    spec: BatterySpec,
    state: BatteryState,
    action: float,
    seconds_per_time_step: float = 3600.0,
) -> tuple[BatteryState, float]:
    """Advance a battery by one step.

    ``action`` commands a grid-side energy of ``action * spec.capacity``
    kWh (positive to charge), limited by the state-of-charge dependent
    maximum power, the remaining capacity, and the depth-of-discharge
    floor ``C0 * (1 - DoD)``. Returns the new state and the signed
    grid-side electricity. Cycling degrades the usable capacity by
    ``phi * C0 * |electricity| / (2 * capacity)``.
    """
    return bess_step_energy(spec, state, action * spec.capacity, seconds_per_time_step)


def bess_step_energy(
    spec: BatterySpec,
    state: BatteryState,
    energy: float,
    seconds_per_time_step: float = 3600.0,
) -> tuple[BatteryState, float]:
    """Like :func:`bess_step` but commanded directly in grid-side kWh."""
    dt = seconds_per_time_step / 3600.0
    carried = state.stored_energy * (1.0 - spec.loss_coefficient)
    if state.capacity <= 0:
        return BatteryState(stored_energy=carried, capacity=state.capacity), 0.0

    requested_power = abs(energy) / dt if dt > 0 else 0.0
    eta = math.sqrt(battery_technical_efficiency(spec, requested_power))
    limit = battery_max_power(spec, state) * dt

    if energy > 0:
        headroom = max(0.0, state.capacity - carried)
        stored_gain = min(min(energy, limit) * eta, headroom)
        new_energy = carried + stored_gain
        balance = stored_gain / eta
    elif energy < 0:
        floor = spec.capacity * (1.0 - spec.depth_of_discharge)
        available = max(0.0, carried - floor)
        stored_drop = min(min(-energy, limit) / eta, available)
        new_energy = carried - stored_drop
        balance = -stored_drop * eta
    else:
        new_energy = carried
        balance = 0.0

    capacity = state.capacity
    if balance != 0.0 and spec.capacity_loss_coefficient > 0:
        capacity = capacity - spec.capacity_loss_coefficient * spec.capacity * abs(balance) / (2.0 * capacity)
    return BatteryState(stored_energy=new_energy, capacity=capacity), balance


def ev_charger_step(
    spec: EVChargerSpec,
    battery_state: BatteryState | None,
    action: float,
    seconds_per_time_step: float = 3600.0,
) -> tuple[BatteryState | None, float]:
    """Exchange energy between the meter and a connected vehicle battery.

    ``action`` in [-1, 1] scales the nominal charging power (action >= 0)
    or discharging power (action < 0). The charger efficiency applies
    between the meter and the battery terminal in both directions, so the
    reported electricity times the efficiency always equals the battery's
    grid-side energy balance. Returns the new battery state and the signed
    meter-side electricity. With no vehicle connected (state None) the
    charger idles regardless of the action.
    """
    if battery_state is None:
        return None, 0.0
    if action < 0 and spec.mode != "v2g":
        raise ActionOutOfRangeForMode(
            f"charger {spec.charger_id} mode {spec.mode} cannot discharge (action {action})"
        )
    dt = seconds_per_time_step / 3600.0
    if action >= 0:
        requested = action * spec.nominal_power_charging * dt
    else:
        requested = action * spec.nominal_power_discharging * dt
    new_state, balance = bess_step_energy(
        spec.battery, battery_state, spec.technical_efficiency * requested, seconds_per_time_step
    )
    return new_state, balance / spec.technical_efficiency


def pv_energy(spec: PVSpec, inverter_output: float, seconds_per_time_step: float = 3600.0) -> float:
    """Generated electricity (negative kWh) for one step.

    ``inverter_output`` is the pre-simulated AC output per kW of installed
    capacity (kW/kW) for the step.
    """
    dt = seconds_per_time_step / 3600.0
    return -spec.nominal_power * inverter_output * dt
