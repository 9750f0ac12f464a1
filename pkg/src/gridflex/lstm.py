"""Single-layer LSTM surrogate for zone thermal dynamics.

Models are shipped as flat JSON files (see ``docs/lstm_model_format.md``)
holding min-max normalization bounds, the four gate weight matrices, and
a scalar dense head. The forward pass consumes a ``(lookback, 9)`` window
of raw feature values ordered oldest to newest and returns the predicted
indoor dry-bulb temperature in plain degrees.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainViolation, WindowNotWarm

FEATURE_ORDER = (
    "indoor_dry_bulb_temperature",
    "outdoor_dry_bulb_temperature",
    "thermal_load",
    "direct_solar_irradiance",
    "diffuse_solar_irradiance",
    "occupant_count",
    "month",
    "day_type",
    "hour",
)

N_FEATURES = len(FEATURE_ORDER)

_GATE_KEYS = (
    "w_i", "w_f", "w_g", "w_o",
    "u_i", "u_f", "u_g", "u_o",
    "b_i", "b_f", "b_g", "b_o",
)


@dataclass(frozen=True)
class LstmModel:
    lookback: int
    hidden_size: int
    feature_min: np.ndarray
    feature_max: np.ndarray
    w_i: np.ndarray
    w_f: np.ndarray
    w_g: np.ndarray
    w_o: np.ndarray
    u_i: np.ndarray
    u_f: np.ndarray
    u_g: np.ndarray
    u_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_g: np.ndarray
    b_o: np.ndarray
    dense_w: np.ndarray
    dense_b: float


def lstm_model_from_dict(payload: dict) -> LstmModel:
    lookback = int(payload.get("lookback", 0))
    if lookback < 1:
        raise DomainViolation("lstm model: lookback must be >= 1")
    features = tuple(payload.get("features", ()))
    if features != FEATURE_ORDER:
        raise DomainViolation(
            f"lstm model: features must be exactly {list(FEATURE_ORDER)}, got {list(features)}"
        )
    hidden = int(payload.get("hidden_size", 0))
    if hidden < 1:
        raise DomainViolation("lstm model: hidden_size must be >= 1")

    normalization = payload.get("normalization", {})
    mins = np.empty(N_FEATURES)
    maxs = np.empty(N_FEATURES)
    for k, name in enumerate(FEATURE_ORDER):
        bounds = normalization.get(name)
        if bounds is None:
            raise DomainViolation(f"lstm model: missing normalization bounds for {name}")
        mins[k] = float(bounds["min"])
        maxs[k] = float(bounds["max"])
        if not maxs[k] > mins[k]:
            raise DomainViolation(f"lstm model: normalization max must exceed min for {name}")

    weights = payload.get("weights", {})
    arrays: dict[str, np.ndarray] = {}
    shapes = {
        "w": (hidden, N_FEATURES),
        "u": (hidden, hidden),
        "b": (hidden,),
    }
    for key in _GATE_KEYS:
        value = weights.get(key)
        if value is None:
            raise DomainViolation(f"lstm model: missing weight array {key}")
        arr = np.asarray(value, dtype=float)
        expected = shapes[key[0]]
        if arr.shape != expected:
            raise DomainViolation(f"lstm model: {key} must have shape {expected}, got {arr.shape}")
        arrays[key] = arr
    dense_w = np.asarray(weights.get("dense_w"), dtype=float)
    if dense_w.shape != (hidden,):
        raise DomainViolation(f"lstm model: dense_w must have shape ({hidden},)")
    dense_b = float(weights.get("dense_b", 0.0))

    return LstmModel(
        lookback=lookback,
        hidden_size=hidden,
        feature_min=mins,
        feature_max=maxs,
        dense_w=dense_w,
        dense_b=dense_b,
        **arrays,
    )


def load_lstm_model(path: str | Path) -> LstmModel:
    with open(path) as f:
        return lstm_model_from_dict(json.load(f))


def lstm_model_to_dict(model: LstmModel) -> dict:
    """Inverse of :func:`lstm_model_from_dict`, for round-trip serialization."""
    normalization = {
        name: {"min": float(model.feature_min[k]), "max": float(model.feature_max[k])}
        for k, name in enumerate(FEATURE_ORDER)
    }
    weights = {key: getattr(model, key).tolist() for key in _GATE_KEYS}
    weights["dense_w"] = model.dense_w.tolist()
    weights["dense_b"] = model.dense_b
    return {
        "lookback": model.lookback,
        "hidden_size": model.hidden_size,
        "features": list(FEATURE_ORDER),
        "normalization": normalization,
        "weights": weights,
    }


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def predict_temperature(model: LstmModel, window: np.ndarray) -> float:
    """Run the forward pass on a raw-feature window.

    ``window`` has shape ``(lookback, 9)`` in :data:`FEATURE_ORDER`,
    oldest step first. Inputs are min-max normalized with the model's
    stored bounds; the scalar output is denormalized with the indoor
    temperature bounds.
    """
    window = np.asarray(window, dtype=float)
    if window.shape != (model.lookback, N_FEATURES):
        raise WindowNotWarm(
            f"lstm window must have shape ({model.lookback}, {N_FEATURES}), got {window.shape}"
        )
    span = model.feature_max - model.feature_min
    x = (window - model.feature_min) / span

    h = np.zeros(model.hidden_size)
    c = np.zeros(model.hidden_size)
    for t in range(model.lookback):
        xt = x[t]
        i = _sigmoid(model.w_i @ xt + model.u_i @ h + model.b_i)
        f = _sigmoid(model.w_f @ xt + model.u_f @ h + model.b_f)
        g = np.tanh(model.w_g @ xt + model.u_g @ h + model.b_g)
        o = _sigmoid(model.w_o @ xt + model.u_o @ h + model.b_o)
        c = f * c + i * g
        h = o * np.tanh(c)

    y = float(model.dense_w @ h + model.dense_b)
    t_min = model.feature_min[0]
    t_max = model.feature_max[0]
    return y * (t_max - t_min) + t_min
