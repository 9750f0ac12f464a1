import json

import numpy as np
import pytest

from conftest import make_default_bundle, write_bundle
from gridflex import der
from gridflex.dataset import load_district
from gridflex.env import GridflexEnv, assemble_observation, export_trace
from gridflex.errors import (
    ActionArityMismatch,
    ConfigInvalid,
    EpisodeFinished,
    UnknownObservation,
)
from gridflex.kpis import compute_kpis
from gridflex.rewards import RewardContext, RewardParams, comfort_reward, marl_reward

# building_1 exposes no actions; building_2 idles with the device sentinel
IDLE = [np.zeros(0), np.array([0.0, 0.0, np.nan, 0.0])]


def build_env(tmp_path, mutate=None, n=24, with_lstm=True, name="district"):
    bundle = make_default_bundle(n=n, with_lstm=with_lstm)
    if mutate is not None:
        mutate(bundle)
    schema = write_bundle(bundle, tmp_path / name)
    return GridflexEnv(load_district(schema))


def obs_map(env, observations, building=1):
    vectors = [observations] if env.config.central_agent else observations
    if env.config.central_agent:
        flat = observations
        out, start = [], 0
        for names in env.observation_names:
            out.append(dict(zip(names, flat[start : start + len(names)])))
            start += len(names)
        return out[building]
    return dict(zip(env.observation_names[building], observations[building]))


def random_actions(env, rng):
    actions = []
    for i, names in enumerate(env.action_names):
        low, high = env.action_lows[i], env.action_highs[i]
        vector = rng.uniform(low, high) if len(names) else np.zeros(0)
        for j, name in enumerate(names):
            if name.endswith("_device") and rng.random() < 0.3:
                vector[j] = np.nan
        actions.append(vector)
    if env.config.central_agent:
        return np.concatenate(actions) if actions else np.zeros(0)
    return actions


class TestReset:
    def test_same_seed_identical_observations(self, tmp_path):
        env = build_env(tmp_path)
        first = env.reset(seed=11)
        second = env.reset(seed=11)
        for a, b in zip(first, second):
            assert np.array_equal(a, b)

    def test_observation_lengths_match_active_names(self, tmp_path):
        env = build_env(tmp_path)
        observations = env.reset()
        assert len(observations) == len(env.buildings)
        for vector, names in zip(observations, env.observation_names):
            assert vector.shape == (len(names),)

    def test_initial_observations_read_row_zero(self, tmp_path):
        env = build_env(tmp_path)
        values = obs_map(env, env.reset(), building=0)
        series = env.buildings[0].data.series
        assert values["net_electricity_consumption"] == 0.0
        assert values["cooling_demand"] == series["cooling_demand"].iloc[0]
        assert values["indoor_dry_bulb_temperature"] == series["indoor_dry_bulb_temperature"].iloc[0]
        assert values["month"] == 1.0
        assert values["hour"] == 0.0  # series stores 1..24, engine counts from 0

    def test_default_seed_comes_from_schema(self, tmp_path):
        env = build_env(tmp_path)
        implicit = env.reset()
        explicit = env.reset(seed=7)
        for a, b in zip(implicit, explicit):
            assert np.array_equal(a, b)

    def test_reset_restores_initial_state(self, tmp_path):
        env = build_env(tmp_path)
        env.reset(seed=3)
        first = [env.step([np.zeros(0), np.array([0.5, 0.4, 0.7, 0.2])]) for _ in range(5)]
        env.reset(seed=3)
        second = [env.step([np.zeros(0), np.array([0.5, 0.4, 0.7, 0.2])]) for _ in range(5)]
        for (obs_a, rew_a, _, info_a), (obs_b, rew_b, _, info_b) in zip(first, second):
            assert info_a["records"] == info_b["records"]
            assert rew_a == rew_b
            for a, b in zip(obs_a, obs_b):
                assert np.array_equal(a, b)

    def test_negative_seed_rejected(self, tmp_path):
        env = build_env(tmp_path)
        with pytest.raises(ConfigInvalid, match="seed"):
            env.reset(seed=-1)

    def test_step_before_reset_raises(self, tmp_path):
        env = build_env(tmp_path)
        with pytest.raises(EpisodeFinished, match="reset"):
            env.step(IDLE)

    def test_district_with_violations_rejected(self, tmp_path):
        bundle = make_default_bundle()
        bundle.frames["building_1.csv"].loc[0, "cooling_demand"] = -1.0
        schema = write_bundle(bundle, tmp_path / "district")
        district = load_district(schema, lenient=True)
        with pytest.raises(ConfigInvalid, match="validation"):
            GridflexEnv(district)


class TestOutageStreams:
    @staticmethod
    def with_model(bundle, seed=None):
        model = {"saifi": 365.0, "caidi": 120.0}
        if seed is not None:
            model["seed"] = seed
        bundle.schema["buildings"]["building_2"]["outage_model"] = model

    def test_signal_depends_on_reset_seed(self, tmp_path):
        env = build_env(tmp_path, mutate=self.with_model, n=48)
        env.reset(seed=0)
        first = env._outage_signals[1].copy()
        env.reset(seed=1)
        second = env._outage_signals[1].copy()
        assert first.shape == second.shape == (48,)
        assert not np.array_equal(first, second)

    def test_signal_reproducible_for_same_seed(self, tmp_path):
        env = build_env(tmp_path, mutate=self.with_model, n=48)
        env.reset(seed=0)
        first = env._outage_signals[1].copy()
        env.reset(seed=0)
        assert np.array_equal(first, env._outage_signals[1])

    def test_model_level_seed_pins_signal(self, tmp_path):
        env = build_env(tmp_path, mutate=lambda b: self.with_model(b, seed=123), n=48)
        env.reset(seed=0)
        first = env._outage_signals[1].copy()
        env.reset(seed=99)
        assert np.array_equal(first, env._outage_signals[1])

    def test_power_outage_column_drives_signal(self, tmp_path):
        flags = np.zeros(24, dtype=int)
        flags[5:8] = 1

        def with_column(bundle):
            bundle.frames["building_2.csv"]["power_outage"] = flags

        env = build_env(tmp_path, mutate=with_column)
        observations = env.reset()
        seen = [obs_map(env, observations)["power_outage"]]
        for k in range(23):
            observations, _, _, info = env.step(IDLE)
            seen.append(obs_map(env, observations)["power_outage"])
            record = info["records"][1]
            assert record.outage == bool(flags[k])
            if record.outage:
                assert record.net_electricity == 0.0
        # observation k mirrors the flag in force at row k
        assert seen[:-1] == [float(f) for f in flags[:23]]


class TestStepContract:
    def test_zero_actions_reproduce_dataset_loads(self, tmp_path):
        env = build_env(tmp_path, with_lstm=False)
        env.reset(seed=0)
        building = env.buildings[0]
        hp = building.config.der.cooling_device
        heater = building.config.der.dhw_device
        t_out = env.district.weather["outdoor_dry_bulb_temperature"].to_numpy(dtype=float)
        for t in range(6):
            _, rewards, _, info = env.step([np.zeros(0), np.zeros(3)])
            record = info["records"][0]
            expected = (
                building.cooling_demand[t] / der.cop(hp, t_out[t], "cooling")
                + building.dhw_demand[t] / heater.technical_efficiency
                + building.non_shiftable_load[t]
            )
            assert record.net_electricity == pytest.approx(expected, abs=1e-12)
            assert rewards[0] == -record.net_electricity

    def test_out_of_range_action_clipped_and_flagged(self, tmp_path):
        env = build_env(tmp_path)
        env.reset(seed=5)
        _, _, _, wild = env.step([np.zeros(0), np.array([1.7, 0.0, np.nan, 0.0])])
        env.reset(seed=5)
        _, _, _, tame = env.step([np.zeros(0), np.array([1.0, 0.0, np.nan, 0.0])])
        assert wild["records"] == tame["records"]
        assert ("building_2", "cooling_storage") in wild["clipped_actions"]
        assert tame["clipped_actions"] == ()

    def test_nan_device_sentinel_not_flagged(self, tmp_path):
        env = build_env(tmp_path)
        env.reset()
        _, _, _, info = env.step(IDLE)
        assert info["clipped_actions"] == ()

    def test_episode_terminates_on_final_step(self, tmp_path):
        env = build_env(tmp_path, n=24)
        env.reset()
        for _ in range(23):
            _, _, terminated, _ = env.step(IDLE)
            assert not terminated
        _, _, terminated, _ = env.step(IDLE)
        assert terminated
        with pytest.raises(EpisodeFinished, match="finished"):
            env.step(IDLE)

    def test_wrong_building_count_rejected(self, tmp_path):
        env = build_env(tmp_path)
        env.reset()
        with pytest.raises(ActionArityMismatch, match="per building"):
            env.step([np.array([0.0, 0.0, 0.0, 0.0])])

    def test_wrong_vector_arity_rejected(self, tmp_path):
        env = build_env(tmp_path)
        env.reset()
        with pytest.raises(ActionArityMismatch, match="building_1"):
            env.step([np.array([0.0]), np.array([0.0, 0.0, 0.0, 0.0])])

    def test_central_agent_takes_one_flat_vector(self, tmp_path):
        def central(bundle):
            bundle.schema["central_agent"] = True

        env = build_env(tmp_path, mutate=central)
        observations = env.reset()
        assert isinstance(observations, np.ndarray)
        assert observations.shape == (sum(len(n) for n in env.observation_names),)
        observations, rewards, _, _ = env.step(np.array([0.0, 0.0, np.nan, 0.0]))
        assert len(rewards) == 1
        with pytest.raises(ActionArityMismatch, match="flat vector"):
            env.step(np.zeros(5))
        with pytest.raises(ActionArityMismatch, match="flat vector"):
            env.step([np.zeros(0), np.zeros(4)])


class TestRewardAggregation:
    def test_central_reward_is_sum_of_building_rewards(self, tmp_path):
        multi = build_env(tmp_path, name="multi")
        central = build_env(
            tmp_path,
            mutate=lambda b: b.schema.__setitem__("central_agent", True),
            name="central",
        )
        multi_obs = multi.reset(seed=2)
        central_obs = central.reset(seed=2)
        assert np.array_equal(np.concatenate(multi_obs), central_obs)
        rng = np.random.default_rng(0)
        for _ in range(24):
            actions = random_actions(multi, rng)
            multi_obs, multi_rewards, _, m_info = multi.step(actions)
            central_obs, central_rewards, _, c_info = central.step(np.concatenate(actions))
            assert m_info["records"] == c_info["records"]
            assert central_rewards[0] == pytest.approx(sum(multi_rewards), abs=1e-12)
            assert c_info["building_rewards"] == tuple(multi_rewards)
            assert np.array_equal(np.concatenate(multi_obs), central_obs)

    def test_district_net_is_sum_of_building_nets(self, tmp_path):
        env = build_env(tmp_path)
        env.reset(seed=4)
        rng = np.random.default_rng(1)
        for _ in range(24):
            _, _, _, info = env.step(random_actions(env, rng))
            total = sum(r.net_electricity for r in info["records"])
            assert abs(info["district_net_electricity"] - total) <= 1e-9

    def test_marl_reward_sees_district_net(self, tmp_path):
        env = build_env(
            tmp_path, mutate=lambda b: b.schema.__setitem__("reward_function", "marl")
        )
        env.reset(seed=6)
        params = RewardParams()
        for _ in range(10):
            _, rewards, _, info = env.step(IDLE)
            for i, record in enumerate(info["records"]):
                context = RewardContext(
                    net_electricity=record.net_electricity,
                    district_net=info["district_net_electricity"],
                )
                assert rewards[i] == marl_reward(context, params)

    def test_comfort_reward_scores_post_step_temperature(self, tmp_path):
        env = build_env(
            tmp_path, mutate=lambda b: b.schema.__setitem__("reward_function", "comfort")
        )
        env.reset(seed=6)
        params = RewardParams()
        for _ in range(10):
            _, rewards, _, info = env.step(IDLE)
            for i, record in enumerate(info["records"]):
                context = RewardContext(
                    net_electricity=record.net_electricity,
                    indoor_temperature=record.indoor_temperature,
                    setpoint=record.setpoint,
                    comfort_band=record.comfort_band,
                    hvac_mode="cooling",
                )
                assert rewards[i] == comfort_reward(context, params)

    def test_solar_penalty_uses_stationary_storage_socs(self, tmp_path):
        env = build_env(
            tmp_path,
            mutate=lambda b: b.schema.__setitem__("reward_function", "solar_penalty"),
        )
        observations = env.reset(seed=6)
        for _ in range(12):
            observations, rewards, _, info = env.step(
                [np.zeros(0), np.array([0.5, 0.3, np.nan, 0.4])]
            )
            record = info["records"][1]
            values = obs_map(env, observations)
            socs = (values["cooling_storage_soc"], values["electrical_storage_soc"])
            net = record.net_electricity
            sign = 1.0 if net > 0 else -1.0 if net < 0 else 0.0
            expected = sum(-((1.0 + sign * soc) * abs(net)) for soc in socs)
            assert rewards[1] == pytest.approx(expected, abs=1e-12)


class TestObservationSemantics:
    SHARED = (
        "month",
        "hour",
        "day_type",
        "outdoor_dry_bulb_temperature",
        "direct_solar_irradiance",
        "electricity_pricing",
        "carbon_intensity",
    )

    def test_shared_observations_equal_across_buildings(self, tmp_path):
        env = build_env(tmp_path)
        observations = env.reset(seed=9)
        rng = np.random.default_rng(9)
        for _ in range(24):
            first = obs_map(env, observations, building=0)
            second = obs_map(env, observations, building=1)
            for name in self.SHARED:
                assert first[name] == second[name]
            observations, _, _, _ = env.step(random_actions(env, rng))

    def test_consumption_observations_replay_previous_record(self, tmp_path):
        env = build_env(tmp_path)
        env.reset(seed=1)
        for _ in range(6):
            observations, _, _, info = env.step(IDLE)
            record = info["records"][1]
            values = obs_map(env, observations)
            assert values["net_electricity_consumption"] == record.net_electricity
            assert values["cooling_electricity_consumption"] == record.cooling_electricity

    def test_controlled_cooling_demand_reports_served_load(self, tmp_path):
        env = build_env(tmp_path)
        observations = env.reset(seed=1)
        assert obs_map(env, observations)["cooling_demand"] == 0.0
        for _ in range(4):
            observations, _, _, info = env.step(
                [np.zeros(0), np.array([0.0, 0.0, 0.6, 0.0])]
            )
            served = info["records"][1].cooling_served
            assert obs_map(env, observations)["cooling_demand"] == served
            assert served > 0.0

    def test_temperature_delta_is_difference(self, tmp_path):
        env = build_env(tmp_path)
        observations = env.reset(seed=1)
        for _ in range(6):
            values = obs_map(env, observations)
            delta = values["indoor_dry_bulb_temperature"] - values["indoor_dry_bulb_temperature_set_point"]
            assert values["indoor_dry_bulb_temperature_delta"] == pytest.approx(delta, abs=1e-12)
            observations, _, _, _ = env.step(IDLE)

    def test_solar_generation_and_device_efficiency(self, tmp_path):
        env = build_env(tmp_path)
        observations = env.reset(seed=1)
        inverter = env.buildings[1].pv_inverter
        hp = env.buildings[1].config.der.cooling_device
        t_out = env.district.weather["outdoor_dry_bulb_temperature"].to_numpy(dtype=float)
        for row in range(6):
            values = obs_map(env, observations)
            assert values["solar_generation"] == pytest.approx(3.0 * inverter[row], abs=1e-12)
            assert values["cooling_device_efficiency"] == der.cop(hp, t_out[row], "cooling")
            observations, _, _, _ = env.step(IDLE)

    def test_ev_observations_follow_schedule(self, tmp_path):
        env = build_env(tmp_path)
        observations = env.reset(seed=1)
        codes, socs, arrivals = [], [], []
        for _ in range(12):
            values = obs_map(env, observations)
            codes.append(values["electric_vehicle_charger_state_0"])
            socs.append(values["electric_vehicle_soc_0"])
            arrivals.append(values["electric_vehicle_estimated_arrival_soc_0"])
            observations, _, _, _ = env.step(IDLE)
        # away 0-7, incoming at 8, connected from 9; NaN schedule slots read 0
        assert codes[:8] == [0.0] * 8
        assert codes[8] == 2.0
        assert codes[9:12] == [1.0] * 3
        assert socs[:9] == [0.0] * 9
        assert socs[9:12] == [0.4] * 3
        assert arrivals[:8] == [0.0] * 8
        assert arrivals[8] == 0.4

    def test_storage_soc_observation_tracks_charging(self, tmp_path):
        env = build_env(tmp_path)
        observations = env.reset(seed=1)
        assert obs_map(env, observations)["electrical_storage_soc"] == 0.5
        observations, _, _, _ = env.step([np.zeros(0), np.array([0.0, 0.5, np.nan, 0.0])])
        after = obs_map(env, observations)["electrical_storage_soc"]
        assert after > 0.5

    def test_unknown_observation_rejected(self, tmp_path):
        env = build_env(tmp_path)
        env.reset()
        building = env.buildings[1]
        with pytest.raises(UnknownObservation):
            assemble_observation(
                ["net_metering_credit"],
                building,
                env._states[1],
                None,
                0,
                False,
                env.district.weather,
                env.district.pricing,
                env.district.carbon,
            )
        with pytest.raises(UnknownObservation, match="charger"):
            assemble_observation(
                ["electric_vehicle_soc_3"],
                building,
                env._states[1],
                None,
                0,
                False,
                env.district.weather,
                env.district.pricing,
                env.district.carbon,
            )


class TestReplayAndTrace:
    @staticmethod
    def with_occupants(bundle):
        bundle.schema["buildings"]["building_2"]["occupant_model"] = {
            "a": -20.0,
            "b": 1.0,
            "direction": "increase",
            "magnitude_small": 1.0,
            "magnitude_large": 2.0,
            "p_large": 0.3,
        }

    def test_replaying_recorded_actions_is_bit_exact(self, tmp_path):
        env = build_env(tmp_path, mutate=self.with_occupants)
        rng = np.random.default_rng(42)
        first_obs = [env.reset(seed=13)]
        log, first_records = [], []
        for _ in range(24):
            actions = random_actions(env, rng)
            observations, _, _, info = env.step(actions)
            log.append(actions)
            first_obs.append(observations)
            first_records.append(info["records"])

        replay = build_env(tmp_path, mutate=self.with_occupants, name="replay")
        second_obs = [replay.reset(seed=13)]
        second_records = []
        for actions in log:
            observations, _, _, info = replay.step(actions)
            second_obs.append(observations)
            second_records.append(info["records"])

        assert first_records == second_records
        for step_a, step_b in zip(first_obs, second_obs):
            for a, b in zip(step_a, step_b):
                assert np.array_equal(a, b)

    def test_episode_trace_feeds_kpis(self, tmp_path):
        env = build_env(tmp_path)
        env.reset()
        for _ in range(24):
            env.step(IDLE)
        trace = env.episode_trace()
        assert trace.n_time_steps == 24
        pricing = env.district.pricing["electricity_pricing"].to_numpy(dtype=float)
        carbon = env.district.carbon["carbon_intensity"].to_numpy(dtype=float)
        report = compute_kpis(trace, pricing=pricing, carbon=carbon)
        assert report.buildings[0].total_cost is not None
        assert report.district.all_time_peak > 0.0

    def test_export_trace_writes_run_artifacts(self, tmp_path):
        env = build_env(tmp_path)
        env.reset(seed=8)
        total = 0.0
        for _ in range(24):
            _, _, _, info = env.step(IDLE)
            total += info["district_net_electricity"]
        out = export_trace(env, tmp_path / "trace")

        import pandas as pd

        building = pd.read_csv(out / "building_2.csv")
        assert len(building) == 24
        assert "action_cooling_storage" in building.columns
        assert "reward" in building.columns
        observations = pd.read_csv(out / "building_2_observations.csv")
        assert len(observations) == 25
        assert list(observations.columns) == list(env.observation_names[1])
        district = pd.read_csv(out / "district.csv")
        assert district["net_electricity"].sum() == pytest.approx(total, abs=1e-9)
        assert "electricity_pricing" in district.columns
        summary = json.loads((out / "run_summary.json").read_text())
        assert summary["steps_completed"] == 24
        assert summary["buildings"] == ["building_1", "building_2"]
        assert summary["district_net_total"] == pytest.approx(total, abs=1e-9)

    def test_export_before_reset_raises(self, tmp_path):
        env = build_env(tmp_path)
        with pytest.raises(EpisodeFinished):
            export_trace(env, tmp_path / "trace")
        with pytest.raises(EpisodeFinished):
            env.episode_trace()
