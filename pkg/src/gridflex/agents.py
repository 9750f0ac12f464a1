"""Built-in controllers: baseline, random, hour-of-day rules, tabular Q-learning.

Every agent shares the same loop API: ``act(observations)`` yields actions
in the arity the environment expects (per building, or one flat vector
under a central agent), ``update(...)`` feeds the outcome back, and
``end_episode()`` closes out per-episode schedules. Only the Q-learning
agent actually learns; the rest ignore updates.
"""

from __future__ import annotations

import itertools
import json
import math
from pathlib import Path

import numpy as np

from gridflex.env import GridflexEnv
from gridflex.errors import DomainViolation

# observation dimensions with a known range; anything else needs an
# explicit range from the caller before it can be discretized
_DEFAULT_RANGES = {
    "hour": (0.0, 23.0),
    "month": (1.0, 12.0),
    "day_type": (1.0, 8.0),
    "cooling_storage_soc": (0.0, 1.0),
    "heating_storage_soc": (0.0, 1.0),
    "dhw_storage_soc": (0.0, 1.0),
    "electrical_storage_soc": (0.0, 1.0),
    "power_outage": (0.0, 1.0),
}

_DEFAULT_BINS = 12
_HOUR_BINS = 24


class Agent:
    """Shared controller API over one environment instance."""

    # False for agents whose learning state must survive across episodes;
    # stateless agents can be rebuilt per episode and run in any order
    stateless = True

    def __init__(self, env: GridflexEnv):
        self.env = env

    def act(self, observations) -> list[np.ndarray] | np.ndarray:
        raise NotImplementedError

    def update(self, rewards, observations, terminated: bool) -> None:
        """Consume the step outcome; non-learning agents ignore it."""

    def end_episode(self) -> None:
        """Close out per-episode schedules (exploration decay and the like)."""


def neutral_actions(action_names) -> np.ndarray:
    """Zeros for storages; NaN on device actions defers to the thermostat."""
    vector = np.zeros(len(action_names))
    for j, name in enumerate(action_names):
        if name.endswith("_device"):
            vector[j] = math.nan
    return vector


class BaselineAgent(Agent):
    """No control: storages idle, devices satisfy the ideal load."""

    def __init__(self, env: GridflexEnv):
        super().__init__(env)
        self._templates = [neutral_actions(names) for names in env.action_names]

    def act(self, observations):
        actions = [template.copy() for template in self._templates]
        if self.env.config.central_agent:
            return np.concatenate(actions) if actions else np.zeros(0)
        return actions


class RandomAgent(Agent):
    """Uniform draws over each action's legal interval."""

    def __init__(self, env: GridflexEnv, seed: int = 0):
        super().__init__(env)
        self.rng = np.random.default_rng(seed)

    def act(self, observations):
        actions = [
            self.rng.uniform(self.env.action_lows[i], self.env.action_highs[i])
            if self.env.action_names[i]
            else np.zeros(0)
            for i in range(len(self.env.buildings))
        ]
        if self.env.config.central_agent:
            return np.concatenate(actions) if actions else np.zeros(0)
        return actions


def load_hour_rules(path: str | Path) -> dict[str, dict[int, list[float]]]:
    """Read an hour-of-day rule table: {building: {hour: action vector}}."""
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, dict):
        raise DomainViolation("hour rules must be a JSON object keyed by building")
    rules: dict[str, dict[int, list[float]]] = {}
    for building, table in payload.items():
        if not isinstance(table, dict):
            raise DomainViolation(f"{building}: rules must map hour -> action vector")
        parsed = {}
        for key, vector in table.items():
            try:
                hour = int(key)
            except ValueError:
                raise DomainViolation(f"{building}: hour key {key!r} is not an integer") from None
            if not 0 <= hour <= 23:
                raise DomainViolation(f"{building}: hour {hour} outside 0..23")
            parsed[hour] = [float(v) for v in vector]
        rules[building] = parsed
    return rules


class HourRbcAgent(Agent):
    """Rule-based control keyed on the hour of day, per building.

    Hours missing from a building's table (and buildings missing from the
    rules entirely) fall back to all-zero actions. Templates are validated
    against the building's action bounds up front; NaN is legal only on
    device actions, where it is the thermostat sentinel.
    """

    def __init__(self, env: GridflexEnv, rules: dict[str, dict[int, list[float]]]):
        super().__init__(env)
        names = {b.config.name for b in env.buildings}
        for building in rules:
            if building not in names:
                raise DomainViolation(f"hour rules name unknown building {building!r}")
        self._rules: list[dict[int, np.ndarray]] = []
        for i, building in enumerate(env.buildings):
            table = rules.get(building.config.name, {})
            checked: dict[int, np.ndarray] = {}
            for hour, template in table.items():
                vector = np.asarray(template, dtype=float)
                if vector.shape != (len(env.action_names[i]),):
                    raise DomainViolation(
                        f"{building.config.name}: hour {hour} template has "
                        f"{vector.size} value(s), building takes {len(env.action_names[i])}"
                    )
                for j, value in enumerate(vector):
                    name = env.action_names[i][j]
                    if math.isnan(value):
                        if not name.endswith("_device"):
                            raise DomainViolation(
                                f"{building.config.name}: NaN only allowed on device actions, not {name}"
                            )
                        continue
                    if not env.action_lows[i][j] <= value <= env.action_highs[i][j]:
                        raise DomainViolation(
                            f"{building.config.name}: hour {hour} value {value} for {name} "
                            f"outside [{env.action_lows[i][j]}, {env.action_highs[i][j]}]"
                        )
                checked[hour] = vector
            self._rules.append(checked)
        # read the hour straight from the series; buildings share the clock
        self._hours = env.buildings[0].hour
        self._row = 0

    def act(self, observations):
        hour = int(self._hours[min(self._row, len(self._hours) - 1)])
        self._row += 1
        actions = [
            self._rules[i].get(hour, np.zeros(len(self.env.action_names[i]))).copy()
            for i in range(len(self.env.buildings))
        ]
        if self.env.config.central_agent:
            return np.concatenate(actions) if actions else np.zeros(0)
        return actions

    def end_episode(self) -> None:
        self._row = 0


# ---------------------------------------------------------------------------
# tabular Q-learning


class QTable:
    """Q-values over uniformly binned observations and an enumerated action set.

    The table is dense: one row per joint observation bin, one column per
    action. Out-of-range observations clamp to the edge bins. Greedy ties
    break toward the lowest action index so runs are reproducible.
    """

    def __init__(
        self,
        bins: tuple[int, ...],
        lows,
        highs,
        n_actions: int,
        alpha: float = 0.1,
        gamma: float = 0.99,
        epsilon: float = 1.0,
        epsilon_decay: float = 0.99,
        epsilon_floor: float = 0.01,
    ):
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if not (bins and all(b >= 1 for b in bins)):
            raise ValueError("need at least one bin per dimension")
        if n_actions < 1:
            raise ValueError("need at least one action")
        self.bins = tuple(int(b) for b in bins)
        self.lows = np.asarray(lows, dtype=float)
        self.highs = np.asarray(highs, dtype=float)
        if self.lows.shape != (len(self.bins),) or self.highs.shape != (len(self.bins),):
            raise ValueError("lows/highs must match the bin dimensions")
        self.n_actions = int(n_actions)
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.epsilon = float(epsilon)
        self.epsilon_decay = float(epsilon_decay)
        self.epsilon_floor = float(epsilon_floor)
        n_states = int(np.prod(self.bins))
        self.table = np.zeros((n_states, self.n_actions))

    def state_index(self, observation) -> int:
        """Flatten a continuous observation into its joint bin index."""
        observation = np.asarray(observation, dtype=float)
        index = 0
        for d, edges in enumerate(self.bins):
            span = self.highs[d] - self.lows[d]
            if span <= 0:
                bin_d = 0
            else:
                position = (observation[d] - self.lows[d]) / span
                bin_d = int(position * edges)
                bin_d = min(max(bin_d, 0), edges - 1)
            index = index * edges + bin_d
        return index

    def act(self, observation, rng: np.random.Generator) -> int:
        """Epsilon-greedy action for the observation's bin."""
        if rng.random() < self.epsilon:
            return int(rng.integers(self.n_actions))
        return int(np.argmax(self.table[self.state_index(observation)]))

    def update(self, observation, action: int, reward: float, next_observation) -> float:
        """One-step temporal-difference update; returns the new Q(s, a)."""
        s = self.state_index(observation)
        s_next = self.state_index(next_observation)
        target = reward + self.gamma * float(np.max(self.table[s_next]))
        self.table[s, action] += self.alpha * (target - self.table[s, action])
        return float(self.table[s, action])

    def decay_epsilon(self) -> None:
        self.epsilon = max(self.epsilon_floor, self.epsilon * self.epsilon_decay)


def _observation_ranges(names, overrides) -> tuple[np.ndarray, np.ndarray]:
    lows, highs = [], []
    for name in names:
        if name in overrides:
            low, high = overrides[name]
        elif name in _DEFAULT_RANGES:
            low, high = _DEFAULT_RANGES[name]
        else:
            raise DomainViolation(
                f"no value range known for observation {name!r}; pass one explicitly"
            )
        lows.append(float(low))
        highs.append(float(high))
    return np.array(lows), np.array(highs)


class QLearningAgent(Agent):
    """Per-building tabular Q-learning over a small observation subset.

    Each building gets its own table (one shared table under a central
    agent). Continuous actions are enumerated on a uniform grid with
    ``action_bins`` levels per dimension, so arity must stay small.
    """

    stateless = False

    def __init__(
        self,
        env: GridflexEnv,
        seed: int = 0,
        observation_subset: tuple[str, ...] = ("hour",),
        observation_ranges: dict | None = None,
        observation_bins: dict | None = None,
        action_bins: int = 3,
        alpha: float = 0.1,
        gamma: float = 0.99,
        epsilon: float = 1.0,
        epsilon_decay: float = 0.99,
        epsilon_floor: float = 0.01,
    ):
        super().__init__(env)
        if action_bins < 2:
            raise ValueError("action_bins must be >= 2")
        if isinstance(observation_subset, str):
            # comma form comes from CLI parameters
            observation_subset = tuple(
                s.strip() for s in observation_subset.split(",") if s.strip()
            )
        self.rng = np.random.default_rng(seed)
        bins_by_name = dict(observation_bins or {})
        ranges = dict(observation_ranges or {})

        if env.config.central_agent:
            flat_names: list[str] = []
            for names in env.observation_names:
                flat_names.extend(names)
            groups = [flat_names]
            action_groups = [
                [
                    (i, j)
                    for i, names in enumerate(env.action_names)
                    for j in range(len(names))
                ]
            ]
        else:
            groups = [list(names) for names in env.observation_names]
            action_groups = [
                [(i, j) for j in range(len(names))]
                for i, names in enumerate(env.action_names)
            ]

        self._obs_indices: list[list[int]] = []
        self._grids: list[list[np.ndarray]] = []
        self.tables: list[QTable] = []
        for g, names in enumerate(groups):
            indices = []
            for wanted in observation_subset:
                if wanted not in names:
                    raise DomainViolation(
                        f"observation {wanted!r} is not active; Q-learning cannot see it"
                    )
                indices.append(names.index(wanted))
            self._obs_indices.append(indices)
            lows, highs = _observation_ranges(observation_subset, ranges)
            bins = tuple(
                bins_by_name.get(n, _HOUR_BINS if n == "hour" else _DEFAULT_BINS)
                for n in observation_subset
            )
            slots = action_groups[g]
            levels = [
                np.linspace(
                    env.action_lows[i][j], env.action_highs[i][j], action_bins
                )
                for i, j in slots
            ]
            grid = [np.array(combo) for combo in itertools.product(*levels)]
            if not grid:
                grid = [np.zeros(0)]
            self._grids.append(grid)
            self.tables.append(
                QTable(
                    bins=bins,
                    lows=lows,
                    highs=highs,
                    n_actions=len(grid),
                    alpha=alpha,
                    gamma=gamma,
                    epsilon=epsilon,
                    epsilon_decay=epsilon_decay,
                    epsilon_floor=epsilon_floor,
                )
            )
        self._last_obs: list[np.ndarray] | None = None
        self._last_actions: list[int] | None = None

    def _views(self, observations) -> list[np.ndarray]:
        if self.env.config.central_agent:
            vectors = [np.asarray(observations, dtype=float)]
        else:
            vectors = [np.asarray(v, dtype=float) for v in observations]
        return [vec[self._obs_indices[g]] for g, vec in enumerate(vectors)]

    def act(self, observations):
        views = self._views(observations)
        choices = [table.act(view, self.rng) for table, view in zip(self.tables, views)]
        self._last_obs = views
        self._last_actions = choices
        if self.env.config.central_agent:
            return self._grids[0][choices[0]].copy()
        return [
            self._grids[i][choices[i]].copy()
            for i in range(len(self.env.buildings))
        ]

    def update(self, rewards, observations, terminated: bool) -> None:
        if self._last_obs is None or self._last_actions is None:
            return
        views = self._views(observations)
        for g, table in enumerate(self.tables):
            table.update(self._last_obs[g], self._last_actions[g], float(rewards[g]), views[g])
        if terminated:
            self._last_obs = None
            self._last_actions = None

    def end_episode(self) -> None:
        for table in self.tables:
            table.decay_epsilon()
        self._last_obs = None
        self._last_actions = None


# ---------------------------------------------------------------------------
# registry

_AGENTS = {
    "baseline": BaselineAgent,
    "random": RandomAgent,
    "hour_rbc": HourRbcAgent,
    "q_learning": QLearningAgent,
}


def agent_names() -> tuple[str, ...]:
    return tuple(sorted(_AGENTS))


def make_agent(name: str, env: GridflexEnv, seed: int = 0, **params) -> Agent:
    """Instantiate a built-in agent by name.

    ``hour_rbc`` takes ``rules_file`` (JSON path) or ``rules`` (parsed
    table); stochastic agents take the seed; the rest of ``params`` go to
    the constructor untouched.
    """
    try:
        cls = _AGENTS[name]
    except KeyError:
        known = ", ".join(agent_names())
        raise ValueError(f"unknown agent {name!r}; known: {known}") from None
    if cls is BaselineAgent:
        return BaselineAgent(env)
    if cls is RandomAgent:
        return RandomAgent(env, seed=seed)
    if cls is HourRbcAgent:
        if "rules" in params:
            rules = params.pop("rules")
        elif "rules_file" in params:
            rules = load_hour_rules(params.pop("rules_file"))
        else:
            raise ValueError("hour_rbc needs rules_file (JSON) or a parsed rules table")
        if params:
            raise ValueError(f"unknown hour_rbc parameter(s): {sorted(params)}")
        return HourRbcAgent(env, rules)
    return QLearningAgent(env, seed=seed, **params)
