"""Reward functions for control agents.

Each reward is a pure function of a per-building :class:`RewardContext`.
Custom rewards can be registered by name and selected from the district
schema like the built-ins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from gridflex.errors import EmptyDistrict


@dataclass(frozen=True)
class RewardParams:
    """Tunable coefficients shared by the built-in reward functions.

    ``comfort_exponent_low`` penalizes deviations on the side the HVAC
    system is actively conditioning against, ``comfort_exponent_high`` the
    opposite side; the high exponent must not be smaller than the low one.
    ``overcool_multiplier`` scales the penalty for driving the temperature
    below the setpoint while cooling.
    """

    consumption_exponent: float = 1.0
    comfort_exponent_low: float = 1.0
    comfort_exponent_high: float = 2.0
    comfort_band: float = 2.0
    overcool_multiplier: float = 1.0

    def __post_init__(self) -> None:
        if self.consumption_exponent < 0:
            raise ValueError("consumption_exponent must be >= 0")
        if self.comfort_exponent_low < 0 or self.comfort_exponent_high < 0:
            raise ValueError("comfort exponents must be >= 0")
        if self.comfort_exponent_high < self.comfort_exponent_low:
            raise ValueError("comfort_exponent_high must be >= comfort_exponent_low")
        if self.comfort_band < 0:
            raise ValueError("comfort_band must be >= 0")
        if self.overcool_multiplier < 0:
            raise ValueError("overcool_multiplier must be >= 0")


@dataclass(frozen=True)
class RewardContext:
    """Everything a per-building reward may look at for one step."""

    net_electricity: float
    district_net: float = 0.0
    indoor_temperature: float | None = None
    setpoint: float | None = None
    comfort_band: float | None = None
    hvac_mode: str = "off"
    ess_socs: tuple[float, ...] = field(default_factory=tuple)


RewardFunction = Callable[[RewardContext, RewardParams], float]


def electricity_consumption_reward(context: RewardContext, params: RewardParams) -> float:
    """Negative consumption raised to the configured exponent; export is free."""
    net = context.net_electricity
    if net <= 0:
        return 0.0
    return -(net ** params.consumption_exponent)


def marl_reward(context: RewardContext, params: RewardParams) -> float:
    """Independent-learner shaping: exporting while the district imports pays."""
    net = context.net_electricity
    district = max(context.district_net, 0.0)
    sign = 1.0 if net < 0 else -1.0
    return 0.01 * net * net * district * sign


def solar_penalty_reward(context: RewardContext, params: RewardParams) -> float:
    """Penalize importing with full storage and exporting with empty storage."""
    net = context.net_electricity
    if net > 0:
        sign = 1.0
    elif net < 0:
        sign = -1.0
    else:
        sign = 0.0
    return sum(-((1.0 + sign * soc) * abs(net)) for soc in context.ess_socs)


def comfort_reward(context: RewardContext, params: RewardParams) -> float:
    """Piecewise temperature-deviation penalty, asymmetric by HVAC mode.

    Deviations the active mode should have prevented (too warm while
    cooling, too cold while heating) use the low exponent outside the
    band; deviations the mode itself caused use the high exponent.
    Inside the band only the actively-conditioned side is penalized,
    linearly. Any mode other than cooling/heating falls through to the
    high-exponent penalty.
    """
    if context.indoor_temperature is None or context.setpoint is None:
        return 0.0
    band = context.comfort_band if context.comfort_band is not None else params.comfort_band
    delta = context.indoor_temperature - context.setpoint
    magnitude = abs(delta)
    low = params.comfort_exponent_low
    high = params.comfort_exponent_high
    cooling = context.hvac_mode == "cooling"
    heating = context.hvac_mode == "heating"

    if delta < -band and cooling:
        return -(magnitude ** high) * params.overcool_multiplier
    if delta < -band and heating:
        return -(magnitude ** low)
    if -band <= delta < 0 and cooling:
        return -magnitude * params.overcool_multiplier
    if -band <= delta < 0 and heating:
        return 0.0
    if 0 <= delta <= band and cooling:
        return 0.0
    if 0 <= delta <= band and heating:
        return -magnitude
    if delta > band and cooling:
        return -(magnitude ** low)
    return -(magnitude ** high)


def district_reward(building_rewards: Sequence[float]) -> float:
    """Centralized-agent reward: the sum over buildings."""
    if len(building_rewards) == 0:
        raise EmptyDistrict("district reward needs at least one building")
    return float(sum(building_rewards))


_REGISTRY: dict[str, RewardFunction] = {
    "electricity_consumption": electricity_consumption_reward,
    "marl": marl_reward,
    "solar_penalty": solar_penalty_reward,
    "comfort": comfort_reward,
}


def register_reward(name: str, function: RewardFunction) -> None:
    """Make a custom reward selectable by name from the district schema."""
    _REGISTRY[name] = function


def get_reward(name: str) -> RewardFunction:
    try:
        return _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise ValueError(f"unknown reward function {name!r}; known: {known}") from None


def reward_names() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))
