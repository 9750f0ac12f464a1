"""Stochastic power-outage signals derived from reliability indices.

Outage incidence is parameterized by SAIFI (expected sustained
interruptions per customer-year) and CAIDI (mean interruption duration
in minutes). Each simulated day draws one Bernoulli event with
probability SAIFI / 365; an event starts at a uniformly random hour of
the day and lasts an exponentially distributed number of minutes with
mean CAIDI. Overlapping events merge in the binary signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MINUTES_PER_DAY = 1440.0


@dataclass(frozen=True)
class OutageModel:
    saifi: float
    caidi: float
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.saifi < 0:
            raise ValueError("saifi must be >= 0")
        if self.caidi <= 0:
            raise ValueError("caidi must be > 0")

    @property
    def daily_probability(self) -> float:
        return min(1.0, self.saifi / 365.0)


@dataclass(frozen=True)
class OutageEvent:
    day: int
    start_step: int
    duration_minutes: float


def _steps_per_day(seconds_per_time_step: float) -> int:
    steps = 86400.0 / seconds_per_time_step
    if abs(steps - round(steps)) > 1e-9 or steps < 1:
        raise ValueError("seconds_per_time_step must divide a day evenly")
    return int(round(steps))


def sample_events(
    model: OutageModel,
    days: int,
    seconds_per_time_step: float = 3600.0,
    rng: np.random.Generator | None = None,
) -> list[OutageEvent]:
    """Draw at most one outage event per day.

    Returns events with their raw sampled duration in minutes; rounding
    to whole steps happens in :func:`events_to_signal` so that duration
    statistics can be measured without the rounding bias.
    """
    if rng is None:
        rng = np.random.default_rng(model.seed)
    steps_per_day = _steps_per_day(seconds_per_time_step)
    p = model.daily_probability
    events: list[OutageEvent] = []
    for day in range(days):
        if rng.random() >= p:
            continue
        start_hour = int(rng.integers(0, 24))
        duration = float(rng.exponential(model.caidi))
        start_step = day * steps_per_day + (start_hour * steps_per_day) // 24
        events.append(OutageEvent(day=day, start_step=start_step, duration_minutes=duration))
    return events


def events_to_signal(
    events: list[OutageEvent],
    horizon: int,
    seconds_per_time_step: float = 3600.0,
) -> np.ndarray:
    """Binary per-step signal; durations are rounded up to whole steps."""
    minutes_per_step = seconds_per_time_step / 60.0
    signal = np.zeros(horizon, dtype=np.uint8)
    for event in events:
        steps = math.ceil(event.duration_minutes / minutes_per_step)
        if steps <= 0 or event.start_step >= horizon:
            continue
        end = min(horizon, event.start_step + steps)
        signal[max(0, event.start_step):end] = 1
    return signal


def generate_outage_signal(
    model: OutageModel,
    horizon: int,
    seconds_per_time_step: float = 3600.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Sample a merged binary outage signal covering ``horizon`` steps."""
    steps_per_day = _steps_per_day(seconds_per_time_step)
    days = math.ceil(horizon / steps_per_day)
    events = sample_events(model, days, seconds_per_time_step, rng)
    return events_to_signal(events, horizon, seconds_per_time_step)


def available_supply(
    outage: bool,
    pv_electricity: float,
    cooling_electricity: float,
    heating_electricity: float,
    dhw_electricity: float,
    non_shiftable_electricity: float,
    storage_electricity: float,
    ev_electricity: float,
) -> float:
    """Power budget left for additional loads during a step.

    Infinite when the grid is up. During an outage the budget is the PV
    generation magnitude minus all consumptions, with storage terms signed
    (discharge adds to the budget, charge subtracts).
    """
    if not outage:
        return math.inf
    return -pv_electricity - (
        cooling_electricity
        + heating_electricity
        + dhw_electricity
        + non_shiftable_electricity
        + storage_electricity
        + ev_electricity
    )
