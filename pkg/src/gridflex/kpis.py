"""Post-episode performance metrics.

Comfort, energy, cost, emissions and resilience metrics computed from an
episode trace. The profile metrics (peaks, ramping, load factor) exist at
two scopes: each building is scored on its own net-consumption profile,
the district on the per-step sum across buildings. Daily metrics drop a
trailing partial day and flag that they did.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

from gridflex.building import StepRecord
from gridflex.errors import EmptyTrace, LengthMismatch, ZeroActual


@dataclass(frozen=True)
class BuildingTrace:
    name: str
    records: tuple[StepRecord, ...]


@dataclass(frozen=True)
class EpisodeTrace:
    buildings: tuple[BuildingTrace, ...]

    @property
    def n_time_steps(self) -> int:
        return len(self.buildings[0].records) if self.buildings else 0


@dataclass(frozen=True)
class BuildingKpis:
    name: str
    discomfort_proportion: float
    cold_discomfort_proportion: float
    hot_discomfort_proportion: float
    minimum_cold_discomfort: float
    maximum_cold_discomfort: float
    average_cold_discomfort: float
    minimum_hot_discomfort: float
    maximum_hot_discomfort: float
    average_hot_discomfort: float
    total_electricity_consumption: float
    total_net_electricity_consumption: float
    total_cost: float | None
    total_emissions: float | None
    average_daily_peak: float
    all_time_peak: float
    total_ramping: float
    one_minus_load_factor: float
    one_minus_thermal_resilience: float
    unserved_energy: float


@dataclass(frozen=True)
class DistrictKpis:
    average_daily_peak: float
    all_time_peak: float
    total_ramping: float
    one_minus_load_factor: float


@dataclass(frozen=True)
class KpiReport:
    buildings: tuple[BuildingKpis, ...]
    district: DistrictKpis
    building_average: dict[str, float | None]
    hours_per_day: int
    partial_day_dropped: bool


# ---------------------------------------------------------------------------
# profile metrics


def _require_profile(net: Sequence[float]) -> list[float]:
    values = list(net)
    if not values:
        raise EmptyTrace("net consumption profile is empty")
    return values


def _complete_days(net: Sequence[float], hours_per_day: int) -> tuple[int, list[float]]:
    values = _require_profile(net)
    days = len(values) // hours_per_day
    return days, values[: days * hours_per_day]


def total_electricity_consumption(net: Sequence[float]) -> float:
    """Grid import only: exports are clipped to zero before summing."""
    return sum(max(e, 0.0) for e in _require_profile(net))


def all_time_peak(net: Sequence[float]) -> float:
    return max(_require_profile(net))


def total_ramping(net: Sequence[float]) -> float:
    """Sum of positive step-to-step increases."""
    values = _require_profile(net)
    return sum(max(0.0, b - a) for a, b in zip(values, values[1:]))


def average_daily_peak(net: Sequence[float], hours_per_day: int = 24) -> float:
    days, trimmed = _complete_days(net, hours_per_day)
    if days == 0:
        return 0.0
    peaks = sum(
        max(trimmed[d * hours_per_day : (d + 1) * hours_per_day]) for d in range(days)
    )
    return hours_per_day / len(trimmed) * peaks


def one_minus_load_factor(net: Sequence[float], hours_per_day: int = 24) -> float:
    days, trimmed = _complete_days(net, hours_per_day)
    if days == 0:
        return 0.0
    total = 0.0
    for d in range(days):
        day = trimmed[d * hours_per_day : (d + 1) * hours_per_day]
        peak = max(day)
        # a flat all-zero day is a perfect load factor, not a 0/0
        if peak != 0.0:
            total += 1.0 - (sum(day) / hours_per_day) / peak
    return hours_per_day / len(trimmed) * total


def _profile_kpis(net: Sequence[float], hours_per_day: int) -> dict[str, float]:
    return {
        "average_daily_peak": average_daily_peak(net, hours_per_day),
        "all_time_peak": all_time_peak(net),
        "total_ramping": total_ramping(net),
        "one_minus_load_factor": one_minus_load_factor(net, hours_per_day),
    }


# ---------------------------------------------------------------------------
# resilience


def unserved_energy(
    records: Sequence[StepRecord], outage: Sequence[bool] | None = None
) -> float:
    """Energy the building needed but did not receive during outage steps.

    Expected loads cover the thermal demands, the base load and planned
    vehicle charging; actual covers what the devices and stores delivered.
    ``outage`` optionally overrides the per-record flags.
    """
    flags = [r.outage for r in records] if outage is None else list(outage)
    if len(flags) != len(records):
        raise LengthMismatch(
            f"outage signal has {len(flags)} steps, trace has {len(records)}"
        )
    total = 0.0
    for record, flagged in zip(records, flags):
        if not flagged:
            continue
        expected = (
            record.cooling_expected + record.heating_expected + record.dhw_expected
            + record.non_shiftable_load_expected + record.ev_charger_expected
        )
        actual = (
            record.cooling_served + record.heating_served + record.dhw_served
            + record.non_shiftable_load_electricity + record.ev_charger_served
        )
        total += expected - actual
    return total


# ---------------------------------------------------------------------------
# model metrics


def _paired(actual: Sequence[float], predicted: Sequence[float]) -> tuple[list[float], list[float]]:
    a, p = list(actual), list(predicted)
    if len(a) != len(p):
        raise LengthMismatch(f"actual has {len(a)} samples, predicted has {len(p)}")
    if not a:
        raise EmptyTrace("model metrics need at least one sample")
    return a, p


def rmse(actual: Sequence[float], predicted: Sequence[float]) -> float:
    a, p = _paired(actual, predicted)
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, p)) / len(a))


def mape(actual: Sequence[float], predicted: Sequence[float]) -> float:
    a, p = _paired(actual, predicted)
    for i, x in enumerate(a):
        if x == 0.0:
            raise ZeroActual(f"actual value at index {i} is zero")
    return sum(abs((x - y) / x) for x, y in zip(a, p)) / len(a)


# ---------------------------------------------------------------------------
# report assembly


def _building_kpis(
    data: BuildingTrace,
    pricing: Sequence[float] | None,
    carbon: Sequence[float] | None,
    comfort_band: float | None,
    hours_per_day: int,
) -> BuildingKpis:
    records = data.records
    n = len(records)
    deltas = [r.indoor_temperature - r.setpoint for r in records]
    bands = (
        [comfort_band] * n if comfort_band is not None else [r.comfort_band for r in records]
    )
    net = [r.net_electricity for r in records]
    cold_deltas = [abs(min(0.0, d)) for d in deltas]
    hot_deltas = [max(0.0, d) for d in deltas]

    outage_deltas = [
        (d, b) for (d, b), r in zip(zip(deltas, bands), records) if r.outage
    ]
    if outage_deltas:
        resilience = sum(1 for d, b in outage_deltas if abs(d) > b) / len(outage_deltas)
    else:
        resilience = 0.0

    return BuildingKpis(
        name=data.name,
        discomfort_proportion=sum(1 for d, b in zip(deltas, bands) if abs(d) > b) / n,
        cold_discomfort_proportion=sum(1 for d, b in zip(deltas, bands) if d < -b) / n,
        hot_discomfort_proportion=sum(1 for d, b in zip(deltas, bands) if d > b) / n,
        minimum_cold_discomfort=min(cold_deltas),
        maximum_cold_discomfort=max(cold_deltas),
        average_cold_discomfort=sum(cold_deltas) / n,
        minimum_hot_discomfort=min(hot_deltas),
        maximum_hot_discomfort=max(hot_deltas),
        average_hot_discomfort=sum(hot_deltas) / n,
        total_electricity_consumption=total_electricity_consumption(net),
        total_net_electricity_consumption=sum(net),
        total_cost=(
            None if pricing is None
            else sum(max(e, 0.0) * r for e, r in zip(net, pricing))
        ),
        total_emissions=(
            None if carbon is None
            else sum(max(e, 0.0) * g for e, g in zip(net, carbon))
        ),
        one_minus_thermal_resilience=resilience,
        unserved_energy=unserved_energy(records),
        **_profile_kpis(net, hours_per_day),
    )


def compute_kpis(
    trace: EpisodeTrace,
    pricing: Sequence[float] | None = None,
    carbon: Sequence[float] | None = None,
    comfort_band: float | None = None,
    hours_per_day: int = 24,
) -> KpiReport:
    """Score an episode at building and district level.

    ``pricing`` and ``carbon`` are the per-step rate series; without them
    the cost and emissions entries stay unset. ``comfort_band`` overrides
    the per-record band when given.
    """
    if not trace.buildings or trace.n_time_steps == 0:
        raise EmptyTrace("episode trace has no dispatched steps")
    n = trace.n_time_steps
    for data in trace.buildings:
        if len(data.records) != n:
            raise LengthMismatch(
                f"building {data.name} has {len(data.records)} records, expected {n}"
            )
    for name, series in (("pricing", pricing), ("carbon", carbon)):
        if series is not None and len(series) != n:
            raise LengthMismatch(f"{name} has {len(series)} steps, trace has {n}")

    buildings = tuple(
        _building_kpis(data, pricing, carbon, comfort_band, hours_per_day)
        for data in trace.buildings
    )
    district_net = [
        sum(data.records[t].net_electricity for data in trace.buildings)
        for t in range(n)
    ]

    averages: dict[str, float | None] = {}
    for spec in fields(BuildingKpis):
        if spec.name == "name":
            continue
        values = [getattr(b, spec.name) for b in buildings]
        averages[spec.name] = (
            None if any(v is None for v in values) else sum(values) / len(values)
        )

    return KpiReport(
        buildings=buildings,
        district=DistrictKpis(**_profile_kpis(district_net, hours_per_day)),
        building_average=averages,
        hours_per_day=hours_per_day,
        partial_day_dropped=n % hours_per_day != 0,
    )


def report_to_dict(report: KpiReport) -> dict:
    """Plain-data view of the report for JSON or CSV export."""
    return {
        "buildings": [asdict(b) for b in report.buildings],
        "district": asdict(report.district),
        "building_average": dict(report.building_average),
        "hours_per_day": report.hours_per_day,
        "partial_day_dropped": report.partial_day_dropped,
    }
