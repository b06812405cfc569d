"""Command-line interface: run live campaigns, simulate them, analyze records.

Exit codes: 0 success (including partial analyses), 1 runtime failure,
2 usage or validation error. The VARIABILITY_LOG environment variable sets
the log level (DEBUG, INFO, WARNING, ERROR).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from datetime import datetime
from importlib import resources
from pathlib import Path
from zoneinfo import ZoneInfo

import click

from . import __version__
from .clock import AcceleratedClock, RealClock, VirtualClock, to_epoch
from .records import (
    RecordError,
    RecordWriter,
    load_records,
    parse_timestamp,
)
from .report import build_report, write_bundle
from .scheduler import (
    CampaignConfig,
    CampaignError,
    CampaignSummary,
    FunctionSpec,
    run_campaign,
)
from .simulator import ScenarioError, SimulatorState, load_scenario, scenario_from_dict
from .stats import StatsError
from .targets import HttpTarget, SimTarget

log = logging.getLogger(__name__)

DEFAULT_SIM_START = datetime(2022, 12, 12, 0, 0, tzinfo=ZoneInfo("CET"))
DEFAULT_SCENARIO_RESOURCE = "scenarios/default-gcf.json"

_CONFIG_KEYS = {
    "functions",
    "mode",
    "duration_s",
    "measurement_interval_s",
    "cooldown_s",
    "burst_size",
    "burst_period_s",
    "start",
    "timezone",
    "billing_quantum_ms",
    "pair_gap_s",
}
_FUNCTION_KEYS = {"function_name", "workload", "memory_mb", "endpoint", "sim_key"}


def load_config(path: str | Path) -> CampaignConfig:
    """Parse and validate the campaign config JSON."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CampaignError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise CampaignError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise CampaignError(f"unknown config keys: {sorted(unknown)}")
    if "functions" not in raw or "duration_s" not in raw:
        raise CampaignError("config requires 'functions' and 'duration_s'")
    functions = []
    for i, entry in enumerate(raw["functions"]):
        if not isinstance(entry, dict):
            raise CampaignError(f"functions[{i}] must be an object")
        unknown = set(entry) - _FUNCTION_KEYS
        if unknown:
            raise CampaignError(f"functions[{i}] has unknown keys: {sorted(unknown)}")
        try:
            functions.append(
                FunctionSpec(
                    function_name=str(entry["function_name"]),
                    workload=str(entry["workload"]),
                    memory_mb=int(entry["memory_mb"]),
                    endpoint=entry.get("endpoint"),
                    sim_key=entry.get("sim_key"),
                )
            )
        except KeyError as exc:
            raise CampaignError(f"functions[{i}] is missing {exc}") from exc
    kwargs = {}
    for key in (
        "mode",
        "measurement_interval_s",
        "cooldown_s",
        "burst_size",
        "burst_period_s",
        "timezone",
        "billing_quantum_ms",
        "pair_gap_s",
    ):
        if key in raw:
            kwargs[key] = raw[key]
    if "start" in raw and raw["start"] is not None:
        try:
            kwargs["start"] = parse_timestamp(raw["start"])
        except (RecordError, ValueError, TypeError, AttributeError) as exc:
            raise CampaignError(f"invalid start time: {exc}") from exc
    return CampaignConfig(
        functions=tuple(functions), duration_s=float(raw["duration_s"]), **kwargs
    )


def _configure_logging() -> None:
    level_name = os.environ.get("VARIABILITY_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


def _echo_summary(summary: CampaignSummary) -> None:
    click.echo(
        f"calls made: {summary.calls_made}, errors: {summary.errors}, "
        f"wall time: {summary.wall_time_s:.1f}s"
    )


def _endpoints_for(config: CampaignConfig) -> dict[str, str]:
    copies = config.copies_needed if config.mode == "pair_loop" else 1
    endpoints = {}
    for spec in config.functions:
        for copy in range(copies):
            endpoints[spec.key_for_copy(copy)] = spec.endpoint_for_copy(copy)
    return endpoints


@click.group()
@click.version_option(version=__version__, prog_name="variability")
def main() -> None:
    """Measure, simulate, and analyze FaaS performance variability."""
    _configure_logging()


@main.command("run")
@click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Campaign config JSON.",
)
@click.option(
    "--records",
    "records_path",
    required=True,
    type=click.Path(dir_okay=False, writable=True),
    help="JSONL output path (appended).",
)
@click.option("--token", default=None, help="Bearer token sent to the endpoints.")
def cmd_run(config_path: str, records_path: str, token: str | None) -> None:
    """Execute a live campaign against HTTP endpoints in real time."""
    try:
        config = load_config(config_path)
        endpoints = _endpoints_for(config)
    except CampaignError as exc:
        raise click.UsageError(str(exc))
    target = HttpTarget(
        endpoints,
        billing_quantum_ms=config.billing_quantum_ms,
        bearer_token=token,
        run_id=Path(records_path).stem,
    )
    writer = RecordWriter(records_path)
    try:
        summary = run_campaign(
            config, target, RealClock(), writer, progress_every_s=30.0
        )
    except CampaignError as exc:
        raise click.ClickException(str(exc))
    _echo_summary(summary)


@main.command("simulate")
@click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Campaign config JSON.",
)
@click.option(
    "--scenario",
    "scenario_path",
    default=None,
    type=click.Path(exists=True, dir_okay=False),
    help="Scenario JSON; defaults to the built-in GCF-like scenario.",
)
@click.option(
    "--records",
    "records_path",
    required=True,
    type=click.Path(dir_okay=False, writable=True),
    help="JSONL output path (appended).",
)
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option(
    "--accel",
    type=float,
    default=0.0,
    show_default=True,
    help="0 runs on an instant virtual clock (deterministic); N > 0 runs "
    "threaded at N× real speed.",
)
def cmd_simulate(
    config_path: str,
    scenario_path: str | None,
    records_path: str,
    seed: int | None,
    accel: float,
) -> None:
    """Run a campaign against the simulator on a virtual clock."""
    try:
        config = load_config(config_path)
        if scenario_path is not None:
            scenario = load_scenario(scenario_path)
        else:
            resource = resources.files("variability").joinpath(DEFAULT_SCENARIO_RESOURCE)
            scenario = scenario_from_dict(json.loads(resource.read_text(encoding="utf-8")))
        if seed is not None:
            scenario = dataclasses.replace(scenario, seed=seed)
        if accel < 0:
            raise CampaignError("--accel must be non-negative")
    except (CampaignError, ScenarioError) as exc:
        raise click.UsageError(str(exc))
    start = config.start or DEFAULT_SIM_START
    state = SimulatorState(
        scenario,
        tz=ZoneInfo(config.timezone),
        billing_quantum_ms=config.billing_quantum_ms,
    )
    target = SimTarget(state)
    if accel > 0:
        clock = AcceleratedClock(accel, start_epoch=to_epoch(start))
    else:
        clock = VirtualClock(to_epoch(start))
    writer = RecordWriter(records_path)
    try:
        summary = run_campaign(config, target, clock, writer, start=start)
    except (CampaignError, ScenarioError) as exc:
        raise click.ClickException(str(exc))
    _echo_summary(summary)


@main.command("analyze")
@click.option(
    "--records",
    "records_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="JSONL records to analyze.",
)
@click.option("--tz", default="CET", show_default=True, help="Local timezone for bucketing.")
@click.option(
    "--out",
    "out_dir",
    required=True,
    type=click.Path(file_okay=False),
    help="Directory for the report bundle.",
)
@click.option(
    "--cooldown-s",
    type=float,
    default=1200.0,
    show_default=True,
    help="Pair gap above which the warm assumption is void.",
)
@click.option("--seed", type=int, default=None, help="Seed recorded in provenance.")
def cmd_analyze(
    records_path: str, tz: str, out_dir: str, cooldown_s: float, seed: int | None
) -> None:
    """Analyze recorded invocations and write the report bundle."""
    try:
        records = load_records(records_path)
    except (RecordError, OSError) as exc:
        raise click.ClickException(f"cannot load records: {exc}")
    if not records:
        raise click.ClickException("no records")
    digest = hashlib.sha256()
    digest.update(Path(records_path).read_bytes())
    digest.update(f"|tz={tz}|cooldown_s={cooldown_s}".encode())
    try:
        bundle = build_report(
            records,
            tz=tz,
            cooldown_s=cooldown_s,
            seed=seed,
            config_hash=digest.hexdigest(),
        )
    except StatsError as exc:
        raise click.ClickException(str(exc))
    write_bundle(bundle, out_dir)
    for warning in bundle.summary["warnings"]:
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"report written to {out_dir}")


if __name__ == "__main__":
    main()
