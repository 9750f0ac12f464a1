import json
import math
from pathlib import Path

import numpy as np
import pytest

from gridflex import lstm
from gridflex.errors import DomainViolation, WindowNotWarm

from lstm_reference import reference_forward

DATA = Path(__file__).parent / "data"


def zero_model_dict(lookback=4, hidden=3, dense_b=0.0, t_min=20.0, t_max=30.0):
    bounds = {name: {"min": 0.0, "max": 1.0} for name in lstm.FEATURE_ORDER}
    bounds["indoor_dry_bulb_temperature"] = {"min": t_min, "max": t_max}
    zeros_w = [[0.0] * lstm.N_FEATURES for _ in range(hidden)]
    zeros_u = [[0.0] * hidden for _ in range(hidden)]
    zeros_b = [0.0] * hidden
    return {
        "lookback": lookback,
        "hidden_size": hidden,
        "features": list(lstm.FEATURE_ORDER),
        "normalization": bounds,
        "weights": {
            "w_i": zeros_w, "w_f": zeros_w, "w_g": zeros_w, "w_o": zeros_w,
            "u_i": zeros_u, "u_f": zeros_u, "u_g": zeros_u, "u_o": zeros_u,
            "b_i": zeros_b, "b_f": zeros_b, "b_g": zeros_b, "b_o": zeros_b,
            "dense_w": [0.0] * hidden,
            "dense_b": dense_b,
        },
    }


def window_for(model: lstm.LstmModel, fill=0.5):
    w = np.full((model.lookback, lstm.N_FEATURES), fill)
    # keep every feature inside its normalization bounds
    return model.feature_min + w * (model.feature_max - model.feature_min)


class TestForwardPass:
    def test_zero_weights_return_the_denormalized_bias(self):
        model = lstm.lstm_model_from_dict(zero_model_dict(dense_b=0.25))
        prediction = lstm.predict_temperature(model, window_for(model))
        assert math.isclose(prediction, 22.5, rel_tol=1e-12)

    def test_fixture_model_matches_the_committed_golden_output(self):
        payload = json.loads((DATA / "lstm_fixture_model.json").read_text())
        window = json.loads((DATA / "lstm_fixture_window.json").read_text())
        golden = json.loads((DATA / "lstm_fixture_golden.json").read_text())["expected_temperature"]
        model = lstm.lstm_model_from_dict(payload)
        prediction = lstm.predict_temperature(model, np.array(window))
        assert math.isclose(prediction, golden, abs_tol=1e-9)

    def test_reference_implementation_agrees_on_the_fixture(self):
        payload = json.loads((DATA / "lstm_fixture_model.json").read_text())
        window = json.loads((DATA / "lstm_fixture_window.json").read_text())
        golden = json.loads((DATA / "lstm_fixture_golden.json").read_text())["expected_temperature"]
        assert math.isclose(reference_forward(payload, window), golden, abs_tol=1e-12)

    def test_repeated_calls_are_bitwise_identical(self):
        payload = json.loads((DATA / "lstm_fixture_model.json").read_text())
        window = np.array(json.loads((DATA / "lstm_fixture_window.json").read_text()))
        model = lstm.lstm_model_from_dict(payload)
        a = lstm.predict_temperature(model, window)
        b = lstm.predict_temperature(model, window)
        assert a == b

    def test_closed_loop_rollout_is_deterministic(self):
        payload = json.loads((DATA / "lstm_fixture_model.json").read_text())
        model = lstm.lstm_model_from_dict(payload)
        base = np.array(json.loads((DATA / "lstm_fixture_window.json").read_text()))

        def rollout():
            window = base.copy()
            trace = []
            for _ in range(10):
                t = lstm.predict_temperature(model, window)
                trace.append(t)
                window = np.roll(window, -1, axis=0)
                window[-1, 0] = t
            return trace

        assert rollout() == rollout()

    def test_wrong_window_shape_rejected(self):
        model = lstm.lstm_model_from_dict(zero_model_dict(lookback=4))
        with pytest.raises(WindowNotWarm):
            lstm.predict_temperature(model, np.zeros((3, lstm.N_FEATURES)))
        with pytest.raises(WindowNotWarm):
            lstm.predict_temperature(model, np.zeros((4, 5)))

    def test_dict_round_trip_preserves_the_forward_pass(self):
        model = lstm.load_lstm_model(DATA / "lstm_fixture_model.json")
        clone = lstm.lstm_model_from_dict(lstm.lstm_model_to_dict(model))
        window = np.array(json.loads((DATA / "lstm_fixture_window.json").read_text()))
        assert lstm.predict_temperature(clone, window) == lstm.predict_temperature(model, window)


class TestModelValidation:
    def test_load_round_trips_from_file(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps(zero_model_dict(dense_b=0.5)))
        model = lstm.load_lstm_model(path)
        assert model.lookback == 4
        assert model.hidden_size == 3

    def test_feature_order_is_enforced(self):
        payload = zero_model_dict()
        payload["features"] = list(reversed(payload["features"]))
        with pytest.raises(DomainViolation, match="features"):
            lstm.lstm_model_from_dict(payload)

    def test_missing_weight_rejected(self):
        payload = zero_model_dict()
        del payload["weights"]["u_f"]
        with pytest.raises(DomainViolation, match="u_f"):
            lstm.lstm_model_from_dict(payload)

    def test_wrong_weight_shape_rejected(self):
        payload = zero_model_dict(hidden=3)
        payload["weights"]["w_i"] = [[0.0] * lstm.N_FEATURES for _ in range(2)]
        with pytest.raises(DomainViolation, match="w_i"):
            lstm.lstm_model_from_dict(payload)

    def test_degenerate_normalization_rejected(self):
        payload = zero_model_dict()
        payload["normalization"]["hour"] = {"min": 5.0, "max": 5.0}
        with pytest.raises(DomainViolation, match="hour"):
            lstm.lstm_model_from_dict(payload)

    def test_missing_normalization_rejected(self):
        payload = zero_model_dict()
        del payload["normalization"]["month"]
        with pytest.raises(DomainViolation, match="month"):
            lstm.lstm_model_from_dict(payload)

    def test_non_positive_lookback_rejected(self):
        payload = zero_model_dict()
        payload["lookback"] = 0
        with pytest.raises(DomainViolation, match="lookback"):
            lstm.lstm_model_from_dict(payload)
