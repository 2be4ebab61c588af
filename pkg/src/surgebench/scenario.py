"""Scenario files: structured key-value text with [plant], [selector],
[controllers], [disturbance] and [faults] sections, parsed with configparser.
A bundled ``canonical.scenario`` encodes the reference 6-hour platform setup.
"""

from __future__ import annotations

import configparser
import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controllers import build_registry
from .plant import (
    ActuatorUncertainty,
    DisturbanceProfile,
    PlantState,
    canonical_profile,
)
from .selector import PlatformTrace, SelectorConfig, run_platform, validate_switching_config


class ScenarioError(ValueError):
    """Scenario file could not be parsed or validated."""


@dataclass(frozen=True)
class Scenario:
    duration: float
    selector: SelectorConfig
    controller_ids: tuple[int, ...]
    profile: DisturbanceProfile
    uncertainty: ActuatorUncertainty
    x0: PlantState
    q_out: float
    faults: tuple[tuple[float, float], ...] = ()
    out_dir: str | None = None


def _get(section: configparser.SectionProxy, key: str, cast, default=None):
    if key not in section:
        if default is not None:
            return default
        raise ScenarioError(f"[{section.name}] is missing required key {key!r}")
    raw = section[key]
    try:
        return cast(raw)
    except ValueError as exc:
        raise ScenarioError(f"[{section.name}] {key} = {raw!r}: {exc}") from exc


def _parse_faults(raw: str) -> tuple[tuple[float, float], ...]:
    intervals = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "-" not in chunk:
            raise ScenarioError(f"fault interval {chunk!r} is not of the form start-end")
        start, end = chunk.split("-", 1)
        t0, t1 = float(start), float(end)
        if t1 <= t0:
            raise ScenarioError(f"fault interval {chunk!r} must have end > start")
        intervals.append((t0, t1))
    return tuple(intervals)


def _parse_knots(raw: str) -> list[tuple[float, float]]:
    knots = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ScenarioError(f"disturbance knot {chunk!r} is not of the form time:value")
        t, value = chunk.split(":", 1)
        knots.append((float(t), float(value)))
    return knots


def _build_profile(section: configparser.SectionProxy, duration: float,
                   files: dict[str, str] | None, base_dir: Path | None,
                   seed_override: int | None) -> DisturbanceProfile:
    kind = section.get("profile", "").strip()
    if kind == "canonical":
        seed = seed_override if seed_override is not None \
            else _get(section, "seed", int, default=7)
        return canonical_profile(duration=duration, seed=seed)
    if "file" in section:
        name = section["file"].strip()
        if files and name in files:
            text = files[name]
        else:
            path = Path(name)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                raise ScenarioError(f"disturbance file {name!r} does not exist")
            text = path.read_text()
        return DisturbanceProfile.from_csv(text, duration)
    if "knots" in section:
        return DisturbanceProfile(tuple(_parse_knots(section["knots"])), duration)
    raise ScenarioError(
        "[disturbance] must give 'profile = canonical', a 'file = <csv>' "
        "reference, or inline 'knots = t:value, ...'")


def parse_scenario(text: str, files: dict[str, str] | None = None,
                   base_dir: Path | None = None,
                   seed_override: int | None = None) -> Scenario:
    """Parse and validate scenario text; raises ScenarioError on any defect."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"scenario parse error: {exc}") from exc
    for name in ("plant", "selector", "controllers", "disturbance"):
        if name not in parser:
            raise ScenarioError(f"scenario is missing the [{name}] section")

    plant_sec = parser["plant"]
    sel_sec = parser["selector"]
    x0 = PlantState(_get(plant_sec, "v0", float, default=10.0),
                    _get(plant_sec, "rho0", float, default=1.4))
    q_out = _get(plant_sec, "q_out", float, default=750.0)
    uncertainty = ActuatorUncertainty(
        qi_gain=_get(plant_sec, "qi_gain", float, default=1.0),
        qw_gain=_get(plant_sec, "qw_gain", float, default=1.0),
    )
    if uncertainty.qi_gain <= 0 or uncertainty.qw_gain <= 0:
        raise ScenarioError("actuator gain multipliers must be positive")

    duration = _get(sel_sec, "duration_hours", float)
    dt = _get(sel_sec, "dt", float, default=0.002)
    selector = SelectorConfig(
        dt=dt,
        horizon_hours=_get(sel_sec, "horizon_hours", float, default=0.5),
        bandwidth=_get(sel_sec, "bandwidth", float, default=100.0),
        index_kind=_get(sel_sec, "index", str, default="error").strip(),
        reference=np.array([
            _get(sel_sec, "ref_v", float, default=10.0),
            _get(sel_sec, "ref_rho", float, default=1.4),
        ]),
    )
    if duration <= 0:
        raise ScenarioError(f"duration_hours must be positive, got {duration}")
    if abs(duration / dt - round(duration / dt)) > 1e-9:
        raise ScenarioError(f"duration {duration} h is not a whole number of samples at dt {dt}")
    try:
        validate_switching_config(selector)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc

    raw_ids = _get(parser["controllers"], "enabled", str)
    try:
        ids = tuple(sorted({int(tok) for tok in raw_ids.split(",") if tok.strip()}))
    except ValueError as exc:
        raise ScenarioError(f"[controllers] enabled = {raw_ids!r}: {exc}") from exc
    if not ids:
        raise ScenarioError("[controllers] enabled must list at least one controller id")
    unknown = [i for i in ids if i not in (0, 1, 2, 3)]
    if unknown:
        raise ScenarioError(f"unknown controller ids {unknown}; known ids are 0..3")
    if 0 not in ids:
        raise ScenarioError("the local fallback controller (id 0) must be enabled")

    try:
        profile = _build_profile(parser["disturbance"], duration, files, base_dir, seed_override)
    except (ValueError, ScenarioError) as exc:
        raise ScenarioError(str(exc)) from exc

    faults = ()
    if "faults" in parser and "intervals" in parser["faults"]:
        faults = _parse_faults(parser["faults"]["intervals"])
        for t0, t1 in faults:
            if t0 < 0 or t1 > duration:
                raise ScenarioError(f"fault interval {t0}-{t1} outside the run window")

    out_dir = sel_sec.get("out_dir", "").strip() or None
    return Scenario(duration=duration, selector=selector, controller_ids=ids,
                    profile=profile, uncertainty=uncertainty, x0=x0,
                    q_out=q_out, faults=faults, out_dir=out_dir)


def load_scenario(path: str | Path, seed_override: int | None = None) -> Scenario:
    """Load a scenario from disk; bundled names resolve when no file exists."""
    given = Path(path)
    if given.exists():
        return parse_scenario(given.read_text(), base_dir=given.parent,
                              seed_override=seed_override)
    bundled = bundled_scenario_names()
    if given.name in bundled:
        text = importlib.resources.files("surgebench.data").joinpath(given.name).read_text()
        return parse_scenario(text, seed_override=seed_override)
    raise ScenarioError(
        f"scenario file {path} does not exist (bundled scenarios: {sorted(bundled)})")


def bundled_scenario_names() -> set[str]:
    root = importlib.resources.files("surgebench.data")
    return {entry.name for entry in root.iterdir() if entry.name.endswith(".scenario")}


def run_scenario(sc: Scenario) -> PlatformTrace:
    """Build the enabled controllers and run the full platform."""
    controllers = build_registry(sc.controller_ids, sc.selector.dt)
    return run_platform(
        controllers, sc.profile, sc.selector, sc.duration,
        uncertainty=sc.uncertainty, faults=list(sc.faults),
        x0=sc.x0, q_out=sc.q_out,
    )
