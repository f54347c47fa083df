"""Scenario files.

A scenario is a YAML mapping.  ``dimension`` and ``family`` are required;
every other key has a default.  Family parameters are only accepted for
their own family, and unknown keys are rejected so typos never fall back
silently to a default.
"""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path

import yaml

from .flow import FAMILIES, Scenario

SCHEMA = "riccilab-scenario/1"

_DEFAULTS = {f.name: f.default for f in fields(Scenario)}

# file key -> (Scenario field, help text)
COMMON_KEYS = {
    "dimension": ("n", "manifold dimension n >= 3 (required)"),
    "family": ("family", f"initial metric, one of {', '.join(FAMILIES)} (required)"),
    "grid_n": ("grid_n", "grid intervals on [0, 1]"),
    "cfl": ("cfl", "time-step safety factor in (0, 1)"),
    "stop_q_ratio": ("stop_q_ratio", "stop once sup|Rm| reaches this multiple of its initial value"),
    "max_steps": ("max_steps", "step budget"),
    "output_stride": ("output_stride", "steps between snapshots"),
    "lambda_list": ("lambdas", "exponents for the Q (T-t)^lambda tracker"),
    "gh_sample_k": ("gh_sample_k", "points per sampled ball in the GH comparisons"),
    "pairs": ("pairs", "point pairs [[x, angle], [x, angle]] for the distortion ledger"),
    "checkpoints": ("checkpoints", "times that must appear exactly among the snapshots"),
    "kappa_samples": ("kappa_samples", "snapshots given a volume-ratio estimate (0 = all)"),
    "ledger_stride": ("ledger_stride", "snapshots per distortion-ledger window"),
}
FAMILY_KEYS = {
    "round_sphere": {"radius": ("radius", "sphere radius")},
    "dumbbell": {
        "neck": ("neck", "orbit radius at the neck centre"),
        "bump": ("bump", "radius of the round caps"),
        "neck_center": ("neck_center", "x coordinate of the neck"),
        "neck_width": ("neck_width", "half-width in x of the neck bump"),
    },
}
REQUIRED = ("dimension", "family")


class ScenarioError(ValueError):
    """Invalid scenario file; ``key`` names the offending entry when there is one."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _convert(key: str, value):
    if key in ("lambda_list", "checkpoints"):
        if not isinstance(value, list):
            raise ScenarioError(f"{key!r} must be a list of numbers", key)
        return tuple(value)
    if key == "pairs":
        try:
            return tuple((tuple(a), tuple(b)) for a, b in value)
        except (TypeError, ValueError):
            raise ScenarioError("'pairs' must be a list of [[x, angle], [x, angle]]", key) from None
    if key == "family":
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{key!r} must be a number, got {value!r}", key)
    return value


def scenario_from_mapping(raw) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("a scenario file must hold a mapping of keys")
    raw = dict(raw)
    schema = raw.pop("schema", SCHEMA)
    if schema != SCHEMA:
        raise ScenarioError(f"unsupported value for 'schema': {schema!r}, expected {SCHEMA!r}", "schema")
    for key in REQUIRED:
        if key not in raw:
            raise ScenarioError(f"missing required key {key!r}", key)
    family = raw["family"]
    if family not in FAMILY_KEYS:
        raise ScenarioError(f"invalid value for 'family': {family!r}", "family")
    allowed = {**COMMON_KEYS, **FAMILY_KEYS[family]}
    kwargs = {}
    for key, value in raw.items():
        if key not in allowed:
            raise ScenarioError(f"unknown key {key!r} for family {family!r}", key)
        kwargs[allowed[key][0]] = _convert(key, value)
    try:
        return Scenario(**kwargs)
    except ValueError as exc:
        # Scenario names its field; report it under the file key
        msg = str(exc)
        for key, (name, _) in allowed.items():
            if f"{name!r}" in msg:
                raise ScenarioError(msg.replace(f"{name!r}", f"{key!r}"), key) from None
        raise ScenarioError(msg) from None


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario {path} is not valid YAML: {exc}") from None
    return scenario_from_mapping(raw)


def scenario_to_mapping(sc: Scenario) -> dict:
    """Resolved scenario in file keys (the inverse of :func:`scenario_from_mapping`)."""
    out = {"schema": SCHEMA}
    for key, (name, _) in {**COMMON_KEYS, **FAMILY_KEYS[sc.family]}.items():
        value = getattr(sc, name)
        if key == "pairs":
            value = [[list(a), list(b)] for a, b in value]
        elif isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


def describe_keys() -> str:
    """Key reference with defaults, for ``--help``."""
    lines = [f"scenario file (YAML, schema key 'schema: {SCHEMA}', optional):"]

    def add(table):
        for key, (name, text) in table.items():
            default = "" if key in REQUIRED else f" [default: {_DEFAULTS[name]!r}]"
            lines.append(f"  {key:<14}{text}{default}")

    add(COMMON_KEYS)
    for family, table in FAMILY_KEYS.items():
        lines.append(f" {family} parameters:")
        add(table)
    return "\n".join(lines)
