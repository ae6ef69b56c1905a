"""Run configuration: nodes, actors, one scenario block, seed, output.

Configs are TOML (JSON is accepted too) and must declare
``config_version = 1``. See README for the grammar.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .crypto import canonicalize, content_id
from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_VERSION = 1

ROLES = frozenset(
    {
        "HomeMNO",
        "VisitedMNO",
        "Subscriber",
        "IoTDevice",
        "NF_Consumer",
        "NF_Producer",
        "NRF",
        "IPX",
        "OTTService",
        "Government",
    }
)
FORMATS = ("structured", "table")
EXPECTATIONS = ("success", "expected_denial")
_TOP_LEVEL = {"config_version", "seed", "nodes", "actors", "scenario", "output"}


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    delay_ticks: int


@dataclass(frozen=True)
class ActorSpec:
    actor_id: str
    role: str
    node_id: str
    key_seed: bytes


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)
    expect: str | None = None


@dataclass(frozen=True)
class OutputSpec:
    path: str | None = None
    format: str = "structured"


@dataclass(frozen=True)
class RunConfig:
    nodes: tuple[NodeSpec, ...]
    actors: tuple[ActorSpec, ...]
    scenario: ScenarioSpec
    seed: int = 0
    output: OutputSpec = OutputSpec()

    @property
    def delays(self) -> dict[str, int]:
        return {n.node_id: n.delay_ticks for n in self.nodes}

    def actor(self, actor_id: str) -> ActorSpec:
        for a in self.actors:
            if a.actor_id == actor_id:
                return a
        raise ConfigError(f"no actor named {actor_id!r}")

    def with_params(self, **params: Any) -> "RunConfig":
        merged = {**self.scenario.params, **params}
        return RunConfig(
            self.nodes, self.actors,
            ScenarioSpec(self.scenario.name, merged, self.scenario.expect),
            self.seed, self.output,
        )

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        return parse_config(data)


def derive_seed(run_seed: int, label: str) -> bytes:
    """32 seed bytes for ``label`` when the config gives no explicit key seed."""
    return content_id(canonicalize({"run_seed": run_seed, "label": label})).value


def _key_seed(raw: Any, run_seed: int, actor_id: str) -> bytes:
    if raw is None:
        return derive_seed(run_seed, actor_id)
    if _is_int(raw):
        if raw < 0 or raw >= 1 << 256:
            raise ConfigError(f"actor {actor_id!r}: integer key_seed out of range")
        return raw.to_bytes(32, "big")
    if isinstance(raw, str):
        try:
            seed = bytes.fromhex(raw)
        except ValueError:
            seed = b""
        if len(seed) == 32:
            return seed
    raise ConfigError(f"actor {actor_id!r}: key_seed must be 64 hex chars or an integer")


def parse_config(data: Mapping[str, Any]) -> RunConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a table")
    unknown = set(data) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if data.get("config_version") != CONFIG_VERSION:
        raise ConfigError(f"config_version must be {CONFIG_VERSION}")
    seed = data.get("seed", 0)
    if not _is_int(seed):
        raise ConfigError("seed must be an integer")

    raw_nodes = data.get("nodes")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ConfigError("at least one [[nodes]] entry is required")
    nodes = []
    for entry in raw_nodes:
        if not isinstance(entry, Mapping) or set(entry) != {"node_id", "delay_ticks"}:
            raise ConfigError("each node has exactly node_id and delay_ticks")
        node_id, delay = entry["node_id"], entry["delay_ticks"]
        if not isinstance(node_id, str) or not node_id:
            raise ConfigError("node_id must be a non-empty string")
        if not _is_int(delay) or delay < 0:
            raise ConfigError(f"node {node_id!r}: delay_ticks must be a non-negative integer")
        nodes.append(NodeSpec(node_id, delay))
    node_ids = [n.node_id for n in nodes]
    if len(set(node_ids)) != len(node_ids):
        raise ConfigError("duplicate node_id")

    raw_actors = data.get("actors", [])
    if not isinstance(raw_actors, list):
        raise ConfigError("actors must be a list")
    actors = []
    for entry in raw_actors:
        if not isinstance(entry, Mapping) or not {"actor_id", "role", "node_id"} <= set(entry):
            raise ConfigError("each actor needs actor_id, role and node_id")
        if set(entry) - {"actor_id", "role", "node_id", "key_seed"}:
            raise ConfigError(f"actor {entry.get('actor_id')!r}: unknown keys")
        actor_id = entry["actor_id"]
        if not isinstance(actor_id, str) or not actor_id:
            raise ConfigError("actor_id must be a non-empty string")
        if not isinstance(entry["role"], str) or entry["role"] not in ROLES:
            raise ConfigError(f"actor {actor_id!r}: unknown role {entry['role']!r}")
        if entry["node_id"] not in node_ids:
            raise ConfigError(f"actor {actor_id!r} references undeclared node {entry['node_id']!r}")
        actors.append(
            ActorSpec(actor_id, entry["role"], entry["node_id"], _key_seed(entry.get("key_seed"), seed, actor_id))
        )
    actor_ids = [a.actor_id for a in actors]
    if len(set(actor_ids)) != len(actor_ids):
        raise ConfigError("duplicate actor_id")

    raw_scenario = data.get("scenario")
    if not isinstance(raw_scenario, Mapping) or not isinstance(raw_scenario.get("name"), str):
        raise ConfigError("exactly one [scenario] table with a name is required")
    expect = raw_scenario.get("expect")
    if expect is not None and expect not in EXPECTATIONS:
        raise ConfigError(f"scenario.expect must be one of {EXPECTATIONS}")
    params = {k: v for k, v in raw_scenario.items() if k not in ("name", "expect")}
    _reject_floats(params, "scenario")
    scenario = ScenarioSpec(raw_scenario["name"], params, expect)

    raw_output = data.get("output", {})
    if not isinstance(raw_output, Mapping) or set(raw_output) - {"path", "format"}:
        raise ConfigError("output takes path and format")
    fmt = raw_output.get("format", "structured")
    if fmt not in FORMATS:
        raise ConfigError(f"output.format must be one of {FORMATS}")
    path = raw_output.get("path")
    if path is not None and not isinstance(path, str):
        raise ConfigError("output.path must be a string")
    return RunConfig(tuple(nodes), tuple(actors), scenario, seed, OutputSpec(path, fmt))


def _reject_floats(value: Any, where: str) -> None:
    if isinstance(value, float):
        raise ConfigError(f"{where}: floating-point values are not allowed")
    if isinstance(value, Mapping):
        for k, v in value.items():
            _reject_floats(v, f"{where}.{k}")
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _reject_floats(v, f"{where}[{i}]")


def read_config_data(path: str | Path) -> Any:
    """Raw mapping from a TOML (or ``.json``) config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return data


def load_config(path: str | Path) -> RunConfig:
    return parse_config(read_config_data(path))
