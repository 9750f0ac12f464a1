"""Freeze engine traces for the Node client's parity suite.

Runs the bundled 24-step district through the core environment for ten
seeds, once with all-zero actions and once with uniform random in-bounds
actions, and writes every action sent plus the observation/reward streams
that came back to tests/fixtures/parity.json. The Node tests replay the
exact same actions through `gridflex serve` and demand the same streams.

Regenerate with: python3 scripts/make_parity_fixture.py
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from gridflex.dataset import load_district
from gridflex.env import GridflexEnv

SEEDS = list(range(10))
SCHEMA = Path(__file__).resolve().parents[2] / "tests" / "data" / "district_24step" / "schema.json"
OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "parity.json"


def _episode(env: GridflexEnv, seed: int, mode: str) -> dict:
    # independent stream per episode so fixtures never shift when SEEDS changes
    rng = np.random.default_rng(1000 + seed)
    observations = env.reset(seed=seed)
    record = {
        "seed": seed,
        "mode": mode,
        "initial_observations": [list(map(float, obs)) for obs in observations],
        "steps": [],
    }
    terminated = False
    while not terminated:
        if mode == "zero":
            actions = [np.zeros(len(low)) for low in env.action_lows]
        else:
            actions = [
                rng.uniform(low, high) if len(low) else np.array([])
                for low, high in zip(env.action_lows, env.action_highs)
            ]
        observations, rewards, terminated, _ = env.step(actions)
        record["steps"].append(
            {
                "actions": [list(map(float, a)) for a in actions],
                "observations": [list(map(float, obs)) for obs in observations],
                "rewards": [float(r) for r in rewards],
                "terminated": bool(terminated),
            }
        )
    return record


def main() -> None:
    env = GridflexEnv(load_district(SCHEMA))
    episodes = [
        _episode(env, seed, mode) for mode in ("zero", "random") for seed in SEEDS
    ]
    for episode in episodes:
        for step in episode["steps"]:
            for row in (*step["observations"], step["rewards"]):
                assert all(math.isfinite(v) for v in row)
    payload = {
        "schema": "tests/data/district_24step/schema.json",
        "generated_by": "python3 scripts/make_parity_fixture.py",
        "episodes": episodes,
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    # allow_nan=False so a non-finite value fails loudly instead of emitting bad JSON
    OUT.write_text(json.dumps(payload, allow_nan=False) + "\n")
    print(f"wrote {OUT} ({len(episodes)} episodes)")


if __name__ == "__main__":
    main()
