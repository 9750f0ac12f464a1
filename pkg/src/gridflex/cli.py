"""Operator command line: validate datasets, run episodes, report KPIs.

Exit codes: 0 success, 1 runtime failure mid-simulation, 2 usage or
configuration error. ``GRIDFLEX_LOG`` sets the log level (DEBUG, INFO,
WARNING, ...). Simulation runs write a manifest before the first episode
so any run can be reproduced bit-exactly with ``--from-manifest``.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd

from gridflex import __version__
from gridflex.agents import agent_names, make_agent
from gridflex.building import StepRecord
from gridflex.dataset import District, load_district
from gridflex.env import GridflexEnv, export_trace
from gridflex.errors import GridflexError
from gridflex.kpis import BuildingTrace, EpisodeTrace, compute_kpis, report_to_dict
from gridflex.outage import OutageModel, generate_outage_signal

log = logging.getLogger("gridflex.cli")


@click.group()
def main() -> None:
    """Simulation engine for grid-interactive building districts."""
    level = os.environ.get("GRIDFLEX_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


# ---------------------------------------------------------------------------
# helpers


def _echo_json(payload) -> None:
    click.echo(json.dumps(payload, indent=2, default=str))


def _parse_params(pairs) -> dict:
    """Parse repeated key=value agent parameters; values are JSON when valid."""
    params = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise click.UsageError(f"agent parameter {pair!r} is not key=value")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def _dataset_fingerprint(district: District) -> str:
    """SHA-256 over the schema file and every data file it references."""
    schema_path = district.schema_path
    root = schema_path.parent
    config = district.config
    names: list[str] = [config.weather_file]
    if config.pricing_file:
        names.append(config.pricing_file)
    if config.carbon_file:
        names.append(config.carbon_file)
    for building in config.buildings:
        names.append(building.series_file)
        if building.lstm_file:
            names.append(building.lstm_file)
        if building.pv_inverter_file:
            names.append(building.pv_inverter_file)
        names.extend(building.ev_schedule_files)
    digest = hashlib.sha256()
    digest.update(schema_path.read_bytes())
    for name in sorted(set(names)):
        digest.update(name.encode())
        digest.update((root / name).read_bytes())
    return digest.hexdigest()


def _derived_seed(run_seed: int, episode: int, channel: int) -> int:
    """Stable per-episode sub-seed; independent of episode execution order."""
    return int(np.random.SeedSequence([run_seed, episode, channel]).generate_state(1)[0])


def _run_episode(
    env: GridflexEnv, agent, env_seed: int, out_dir: Path
) -> dict:
    observations = env.reset(seed=env_seed)
    terminated = False
    while not terminated:
        actions = agent.act(observations)
        observations, rewards, terminated, _ = env.step(actions)
        agent.update(rewards, observations, terminated)
    agent.end_episode()
    export_trace(env, out_dir)
    report = compute_kpis(
        env.episode_trace(),
        pricing=_rate_column(env.district.pricing, "electricity_pricing", env.n_time_steps),
        carbon=_rate_column(env.district.carbon, "carbon_intensity", env.n_time_steps),
    )
    payload = report_to_dict(report)
    with open(out_dir / "kpi_report.json", "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    return payload


def _rate_column(frame: pd.DataFrame | None, column: str, n: int):
    if frame is None:
        return None
    return frame[column].to_numpy(dtype=float)[:n]


def _episode_worker(
    schema: str, agent_name: str, params: dict, run_seed: int, episode: int, out_dir: str
) -> str:
    """Self-contained episode run for process pools; returns the trace dir."""
    district = load_district(schema)
    env = GridflexEnv(district)
    agent = make_agent(
        agent_name, env, seed=_derived_seed(run_seed, episode, 1), **params
    )
    target = Path(out_dir) / f"episode_{episode:03d}"
    _run_episode(env, agent, _derived_seed(run_seed, episode, 0), target)
    return str(target)


# ---------------------------------------------------------------------------
# validate


@main.command()
@click.argument("schema", type=click.Path(path_type=Path))
def validate(schema: Path) -> None:
    """Check a district dataset and report every violation found."""
    try:
        district = load_district(schema, lenient=True)
    except GridflexError as exc:
        raise click.UsageError(str(exc)) from None
    if district.report:
        click.echo(district.report.summary(limit=20))
        raise SystemExit(2)
    click.echo(
        f"ok: {len(district.buildings)} building(s), "
        f"{district.n_time_steps} step(s) per episode"
    )


# ---------------------------------------------------------------------------
# simulate


@main.command()
@click.argument("schema", type=click.Path(path_type=Path), required=False)
@click.option("--agent", "agent_name", default="baseline", show_default=True,
              help=f"controller: {', '.join(agent_names())}")
@click.option("--seed", type=int, default=None, help="run seed (defaults to the schema seed)")
@click.option("--episodes", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="output directory (defaults to ./runs/<schema stem>)")
@click.option("--param", "params", multiple=True, metavar="KEY=VALUE",
              help="agent parameter, repeatable (values parsed as JSON when possible)")
@click.option("--parallel", type=int, default=1, show_default=True,
              help="episodes to run concurrently (stateless agents only)")
@click.option("--force", is_flag=True, help="overwrite a non-empty output directory")
@click.option("--from-manifest", "manifest_path", type=click.Path(path_type=Path),
              default=None, help="re-run a recorded manifest (other options ignored)")
def simulate(schema, agent_name, seed, episodes, out_dir, params, parallel, force,
             manifest_path) -> None:
    """Run episodes with a built-in agent and export traces + KPI reports."""
    if manifest_path is not None:
        recorded = json.loads(Path(manifest_path).read_text())
        schema = Path(recorded["schema"])
        agent_name = recorded["agent"]
        agent_params = recorded["agent_params"]
        seed = recorded["seed"]
        episodes = recorded["episodes"]
        parallel = recorded.get("parallel", 1)
        if out_dir is None:
            out_dir = Path(recorded["out_dir"])
    else:
        if schema is None:
            raise click.UsageError("provide a schema path or --from-manifest")
        agent_params = _parse_params(params)
    if episodes < 1:
        raise click.UsageError("--episodes must be >= 1")
    if parallel < 1:
        raise click.UsageError("--parallel must be >= 1")

    try:
        district = load_district(schema)
        env = GridflexEnv(district)
    except GridflexError as exc:
        raise click.UsageError(str(exc)) from None
    if seed is None:
        seed = district.config.random_seed
    if out_dir is None:
        out_dir = Path("runs") / Path(schema).stem

    try:
        agent = make_agent(
            agent_name, env, seed=_derived_seed(seed, 0, 1), **agent_params
        )
    except (GridflexError, ValueError, TypeError) as exc:
        raise click.UsageError(str(exc)) from None
    if parallel > 1 and not agent.stateless:
        raise click.UsageError(
            f"{agent_name} learns across episodes and cannot run with --parallel"
        )

    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise click.UsageError(f"{out_dir} is not empty; pass --force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "schema": str(Path(schema).resolve()),
        "agent": agent_name,
        "agent_params": agent_params,
        "seed": int(seed),
        "episodes": int(episodes),
        "parallel": int(parallel),
        "out_dir": str(out_dir),
        "engine_version": __version__,
        "dataset_fingerprint": _dataset_fingerprint(district),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")
    log.info("run start: %s agent=%s seed=%d episodes=%d", schema, agent_name, seed, episodes)

    try:
        if parallel > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=parallel) as pool:
                futures = [
                    pool.submit(
                        _episode_worker, str(schema), agent_name, agent_params,
                        seed, episode, str(out_dir),
                    )
                    for episode in range(episodes)
                ]
                for future in futures:
                    future.result()
            final = json.loads(
                (out_dir / f"episode_{episodes - 1:03d}" / "kpi_report.json").read_text()
            )
        else:
            final = None
            for episode in range(episodes):
                if episode > 0 and agent.stateless:
                    # fresh per-episode construction mirrors --parallel exactly
                    agent = make_agent(
                        agent_name, env, seed=_derived_seed(seed, episode, 1),
                        **agent_params,
                    )
                final = _run_episode(
                    env, agent, _derived_seed(seed, episode, 0),
                    out_dir / f"episode_{episode:03d}",
                )
    except GridflexError as exc:
        raise click.ClickException(str(exc)) from None

    with open(out_dir / "kpi_report.json", "w", encoding="utf-8") as handle:
        json.dump(final, handle, indent=2)
        handle.write("\n")
    click.echo(f"wrote {episodes} episode(s) to {out_dir}")


# ---------------------------------------------------------------------------
# kpi


def _load_trace(trace_dir: Path) -> tuple[EpisodeTrace, np.ndarray | None, np.ndarray | None]:
    summary_path = trace_dir / "run_summary.json"
    if not summary_path.is_file():
        raise click.UsageError(f"{trace_dir} has no run_summary.json; not a trace directory")
    summary = json.loads(summary_path.read_text())
    fields = dataclasses.fields(StepRecord)
    buildings = []
    for name in summary["buildings"]:
        # trace CSVs hold shortest-repr doubles; the default fast parser is
        # off by an ulp on some of them, which would shift every KPI
        frame = pd.read_csv(trace_dir / f"{name}.csv", float_precision="round_trip")
        records = tuple(
            StepRecord(**{
                f.name: (
                    int(row[f.name]) if f.name == "row"
                    else bool(row[f.name]) if f.name == "outage"
                    else float(row[f.name])
                )
                for f in fields
            })
            for row in frame.to_dict("records")
        )
        buildings.append(BuildingTrace(name=name, records=records))
    district = pd.read_csv(trace_dir / "district.csv", float_precision="round_trip")
    pricing = (
        district["electricity_pricing"].to_numpy(dtype=float)
        if "electricity_pricing" in district.columns else None
    )
    carbon = (
        district["carbon_intensity"].to_numpy(dtype=float)
        if "carbon_intensity" in district.columns else None
    )
    return EpisodeTrace(buildings=tuple(buildings)), pricing, carbon


def _ratio(run_value, base_value):
    if run_value is None or base_value is None or base_value == 0:
        return None
    return run_value / base_value


def _ratio_block(run: dict, base: dict) -> dict:
    return {
        key: _ratio(run[key], base[key])
        for key in run
        if key != "name" and key in base
    }


@main.command()
@click.argument("trace_dir", type=click.Path(path_type=Path))
@click.option("--baseline", "baseline_dir", type=click.Path(path_type=Path), default=None,
              help="baseline trace directory; adds run/baseline KPI ratios")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="write the report here instead of stdout")
def kpi(trace_dir: Path, baseline_dir, out_path) -> None:
    """Recompute the KPI report from an exported trace directory."""
    try:
        trace, pricing, carbon = _load_trace(Path(trace_dir))
        report = report_to_dict(compute_kpis(trace, pricing=pricing, carbon=carbon))
        if baseline_dir is not None:
            base_trace, base_pricing, base_carbon = _load_trace(Path(baseline_dir))
            base = report_to_dict(
                compute_kpis(base_trace, pricing=base_pricing, carbon=base_carbon)
            )
            report["baseline_ratio"] = {
                "district": _ratio_block(report["district"], base["district"]),
                "building_average": _ratio_block(
                    report["building_average"], base["building_average"]
                ),
                "buildings": {
                    run_b["name"]: _ratio_block(run_b, base_b)
                    for run_b, base_b in zip(report["buildings"], base["buildings"])
                    if run_b["name"] == base_b["name"]
                },
            }
    except GridflexError as exc:
        raise click.UsageError(str(exc)) from None
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report, indent=2) + "\n")
        click.echo(f"wrote {out_path}")
    else:
        _echo_json(report)


# ---------------------------------------------------------------------------
# outage-sample


@main.command(name="outage-sample")
@click.option("--saifi", type=float, required=True, help="average interruptions per year")
@click.option("--caidi", type=float, required=True, help="average interruption duration, minutes")
@click.option("--horizon", type=int, default=8760, show_default=True, help="steps to sample")
@click.option("--seconds-per-time-step", "sps", type=float, default=3600.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="also write the signal as CSV (step, outage)")
def outage_sample(saifi, caidi, horizon, sps, seed, out_path) -> None:
    """Sample an outage signal and print its summary statistics."""
    try:
        model = OutageModel(saifi=saifi, caidi=caidi)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    signal = generate_outage_signal(model, horizon, sps, np.random.default_rng(seed))
    flags = signal.astype(int)
    events = int(np.sum((flags[1:] == 1) & (flags[:-1] == 0)) + (flags[0] == 1))
    stats = {
        "horizon": int(horizon),
        "seconds_per_time_step": float(sps),
        "outage_steps": int(flags.sum()),
        "events": events,
        "mean_event_duration_steps": (float(flags.sum()) / events) if events else None,
        "outage_fraction": float(flags.mean()) if horizon else 0.0,
    }
    if out_path is not None:
        pd.DataFrame({"step": np.arange(horizon), "outage": flags}).to_csv(
            out_path, index=False
        )
        stats["out"] = str(out_path)
    _echo_json(stats)


# ---------------------------------------------------------------------------
# serve (line-oriented JSON bridge for foreign-language frontends)


def _to_jsonable(value):
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _actions_from_payload(payload):
    def scalar(v):
        return math.nan if v is None else float(v)

    if isinstance(payload, list) and all(isinstance(v, list) for v in payload):
        return [np.array([scalar(v) for v in vector]) for vector in payload]
    if isinstance(payload, list):
        return np.array([scalar(v) for v in payload])
    raise ValueError("actions must be an array or an array of arrays")


def _spaces_payload(env: GridflexEnv) -> dict:
    return {
        "engine_version": __version__,
        "central_agent": env.config.central_agent,
        "episode_time_steps": env.n_time_steps,
        "seconds_per_time_step": env.config.seconds_per_time_step,
        "buildings": [
            {
                "name": building.config.name,
                "observations": list(env.observation_names[i]),
                "actions": list(env.action_names[i]),
                "action_low": _to_jsonable(env.action_lows[i]),
                "action_high": _to_jsonable(env.action_highs[i]),
            }
            for i, building in enumerate(env.buildings)
        ],
    }


def _serve_dispatch(env: GridflexEnv, request: dict) -> dict:
    op = request.get("op")
    if op == "spaces":
        return {"ok": True, "result": _spaces_payload(env)}
    if op == "reset":
        observations = env.reset(seed=request.get("seed"))
        return {"ok": True, "result": {"observations": _to_jsonable(observations)}}
    if op == "step":
        actions = _actions_from_payload(request.get("actions"))
        observations, rewards, terminated, info = env.step(actions)
        return {
            "ok": True,
            "result": {
                "observations": _to_jsonable(observations),
                "rewards": _to_jsonable(rewards),
                "terminated": bool(terminated),
                "info": {
                    "step": info["step"],
                    "district_net_electricity": _to_jsonable(info["district_net_electricity"]),
                    "building_rewards": _to_jsonable(info["building_rewards"]),
                    "clipped_actions": _to_jsonable(info["clipped_actions"]),
                },
            },
        }
    raise ValueError(f"unknown op {op!r}")


@main.command()
@click.argument("schema", type=click.Path(path_type=Path))
def serve(schema: Path) -> None:
    """Speak a line-oriented JSON protocol over stdio.

    Requests: {"op": "spaces"}, {"op": "reset", "seed": N},
    {"op": "step", "actions": [...]}, {"op": "close"}. One JSON response
    per line; NaN travels as null in both directions. Engine errors keep
    their class name in the "error" field.
    """
    try:
        env = GridflexEnv(load_district(schema))
    except GridflexError as exc:
        raise click.UsageError(str(exc)) from None
    stdout = sys.stdout
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            response = {"ok": False, "error": "BadRequest", "message": str(exc)}
        else:
            if request.get("op") == "close":
                stdout.write(json.dumps({"ok": True, "result": None}) + "\n")
                stdout.flush()
                break
            try:
                response = _serve_dispatch(env, request)
            except GridflexError as exc:
                response = {
                    "ok": False, "error": type(exc).__name__, "message": str(exc)
                }
            except (ValueError, TypeError, KeyError) as exc:
                response = {"ok": False, "error": "BadRequest", "message": str(exc)}
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


if __name__ == "__main__":
    main()
