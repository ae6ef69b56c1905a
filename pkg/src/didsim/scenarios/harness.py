"""Actors, message log and report plumbing shared by all flows."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable

from .. import did as did_core
from .. import new_network, vc
from ..config import ActorSpec, RunConfig
from ..crypto import canonicalize, content_id
from ..errors import ConfigError
from ..wallet import Wallet

LINK_CLASSES = ("terminal_visited", "visited_home", "intra_core", "ledger_local_read", "ott_link")

TERMINALS = {"Subscriber", "IoTDevice"}
OPERATORS = {"HomeMNO", "VisitedMNO"}
CORE = {"NF_Consumer", "NF_Producer", "NRF"}


def link_class(role_a: str, role_b: str) -> str:
    """Classify a message between two roles."""
    pair = {role_a, role_b}
    if "OTTService" in pair or "Government" in pair:
        return "ott_link"
    if pair & TERMINALS and pair & OPERATORS:
        return "terminal_visited"
    if pair <= OPERATORS | {"IPX"}:
        # inter-operator signalling, IPX hops included
        return "visited_home"
    if pair <= CORE:
        return "intra_core"
    raise ConfigError(f"no link between roles {role_a} and {role_b}")


@dataclass
class Actor:
    actor_id: str
    role: str
    node: str
    wallet: Wallet

    @property
    def did(self) -> str:
        return self.wallet.did


@dataclass(frozen=True)
class ScenarioMessage:
    src: str
    dst: str
    link_class: str
    payload_kind: str
    tick: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "from": self.src,
            "to": self.dst,
            "link_class": self.link_class,
            "payload_kind": self.payload_kind,
            "tick": self.tick,
        }


@dataclass
class ScenarioReport:
    scenario_name: str
    outcome: str
    message_counts: dict[str, int]
    ticks_elapsed: int
    seed: int
    verification_reports: list[dict[str, Any]] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)
    failure_reason: str | None = None
    message_log: list[ScenarioMessage] = field(default_factory=list, repr=False)
    ledger_log: str = field(default="", repr=False)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "scenario_name": self.scenario_name,
            "outcome": self.outcome,
            "message_counts": dict(self.message_counts),
            "ticks_elapsed": self.ticks_elapsed,
            "seed": self.seed,
            "verification_reports": list(self.verification_reports),
            "details": self.details,
        }
        if self.failure_reason is not None:
            out["failure_reason"] = self.failure_reason
        return out

    def render(self, fmt: str = "structured") -> str:
        if fmt == "structured":
            return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
        if fmt == "table":
            return render_table(self)
        raise ConfigError(f"unknown report format {fmt!r}")

    def summary(self) -> str:
        counts = " ".join(f"{k}={v}" for k, v in self.message_counts.items())
        return f"{self.scenario_name}: {self.outcome} ticks={self.ticks_elapsed} {counts}"

    def export_messages(self) -> str:
        return "".join(canonicalize(m.to_dict()).decode() + "\n" for m in self.message_log)


def render_table(report: ScenarioReport) -> str:
    rows = [("scenario", report.scenario_name), ("outcome", report.outcome)]
    if report.failure_reason:
        rows.append(("reason", report.failure_reason))
    rows += [("seed", str(report.seed)), ("ticks_elapsed", str(report.ticks_elapsed))]
    rows += [(f"messages.{k}", str(v)) for k, v in report.message_counts.items()]
    accepted = sum(r["outcome"] == "accept" for r in report.verification_reports)
    rows.append(("verifications", f"{accepted}/{len(report.verification_reports)} accepted"))
    for key in sorted(report.details):
        value = report.details[key]
        if not isinstance(value, (dict, list)):
            rows.append((f"details.{key}", json.dumps(value)))
    width = max(len(k) for k, _ in rows)
    return "".join(f"{k.ljust(width)}  {v}\n" for k, v in rows)


def percent(numerator: int, denominator: int) -> str:
    """Exact percentage as a fixed two-decimal string (reports carry no floats)."""
    if denominator == 0:
        return "0.00"
    value = Fraction(100 * numerator, denominator)
    hundredths = round(value * 100)
    return f"{hundredths // 100}.{hundredths % 100:02d}"


class Harness:
    """One deterministic scenario run.

    Messages sent while ``measuring`` is False belong to the setup phase and
    are kept out of the counted log.
    """

    def __init__(self, config: RunConfig, max_ticks: int | None = None):
        self.config = config
        self.params = dict(config.scenario.params)
        self.network = new_network(config.delays, seed=config.seed)
        self.rng = random.Random(config.seed)
        self.max_ticks = max_ticks
        self.actors: dict[str, Actor] = {}
        self.messages: list[ScenarioMessage] = []
        self.setup_messages: list[ScenarioMessage] = []
        self.reports: list[dict[str, Any]] = []
        self.details: dict[str, Any] = {}
        self.measuring = False
        for entry in config.actors:
            self._add_actor(entry.actor_id, entry.role, entry.node_id, entry.key_seed)

    # -- parameters --------------------------------------------------------

    def param(self, name: str, default: Any, kind: type | tuple = int) -> Any:
        value = self.params.get(name, default)
        if value is None:
            return None
        ok = isinstance(value, kind) and not (kind is int and isinstance(value, bool))
        if not ok:
            raise ConfigError(f"scenario parameter {name!r} has the wrong type")
        if kind is int and value < 0:
            raise ConfigError(f"scenario parameter {name!r} must be non-negative")
        return value

    def role_actor(self, param_name: str, *roles: str) -> Actor:
        """Actor named by ``param_name`` or else the single actor with a role."""
        name = self.params.get(param_name)
        if name is not None:
            if not isinstance(name, str) or name not in self.actors:
                raise ConfigError(f"{param_name}: no actor named {name!r}")
            actor = self.actors[name]
            if actor.role not in roles:
                raise ConfigError(f"{param_name}: actor {name!r} is not a {'/'.join(roles)}")
            return actor
        matches = [a for a in self.actors.values() if a.role in roles]
        if len(matches) != 1:
            raise ConfigError(
                f"expected exactly one {'/'.join(roles)} actor (or set {param_name!r}), found {len(matches)}"
            )
        return matches[0]

    def _add_actor(self, actor_id: str, role: str, node: str, seed: bytes) -> Actor:
        actor = Actor(actor_id, role, node, Wallet.from_seed(actor_id, seed))
        self.actors[actor_id] = actor
        return actor

    def expand(self, template: Actor, count: int) -> list[Actor]:
        """Clone a terminal actor ``count`` times with derived keys."""
        if count == 1:
            return [template]
        del self.actors[template.actor_id]
        base = template.wallet.active.private_key
        clones = []
        for i in range(count):
            seed = content_id(base + i.to_bytes(8, "big")).value
            clones.append(self._add_actor(f"{template.actor_id}-{i}", template.role, template.node, seed))
        return clones

    # -- time --------------------------------------------------------------

    @property
    def clock(self) -> int:
        return self.network.clock

    def settle(self) -> None:
        """Advance until everything committed so far is visible on every node."""
        self.advance_to(self.clock + self.network.max_delay)

    def advance_to(self, tick: int) -> None:
        if self.max_ticks is not None and tick > self.max_ticks:
            raise TickBudgetExceeded(f"tick budget {self.max_ticks} exceeded (needed {tick})")
        self.network.advance_to(tick)

    # -- setup -------------------------------------------------------------

    def create_identities(self, actors: Iterable[Actor] | None = None) -> None:
        for actor in actors if actors is not None else list(self.actors.values()):
            did_core.create_did(self.network, actor.node, actor.wallet)
        self.settle()

    def claims(self, **claims: Any) -> dict[str, Any]:
        """Claims with the run's planted tag (used by the off-ledger privacy scan)."""
        tag = self.param("claim_tag", f"tag-{self.config.scenario.name}-{self.config.seed}", str)
        return {**claims, "tag": tag}

    # -- messages ----------------------------------------------------------

    def send(self, src: Actor, dst: Actor, payload_kind: str) -> None:
        message = ScenarioMessage(
            src.actor_id, dst.actor_id, link_class(src.role, dst.role), payload_kind, self.clock
        )
        (self.messages if self.measuring else self.setup_messages).append(message)

    def ledger_read(self, actor: Actor, what: str, count: int = 1) -> None:
        for _ in range(count):
            message = ScenarioMessage(
                actor.actor_id, f"node:{actor.node}", "ledger_local_read", what, self.clock
            )
            (self.messages if self.measuring else self.setup_messages).append(message)

    def nonce(self) -> bytes:
        return self.rng.randbytes(16)

    # -- verification at a verifier's own node ----------------------------

    def challenge_and_verify(self, verifier: Actor, holder: Actor, credentials: list) -> vc.VerificationReport:
        """Challenge, present, verify locally, answer. Four messages plus reads."""
        nonce = self.nonce()
        self.send(verifier, holder, "challenge")
        presentation = vc.present(holder.wallet, credentials, nonce, verifier.did)
        self.send(holder, verifier, "presentation")
        report = vc.verify_presentation(self.network, verifier.node, presentation, nonce, verifier.did)
        self.ledger_read(verifier, "resolve_holder")
        for credential in presentation.credentials:
            self.ledger_read(verifier, "resolve_issuer")
            if credential.status is not None:
                self.ledger_read(verifier, "status")
        self.reports.append(report.to_dict())
        return report

    # -- reporting ---------------------------------------------------------

    def report(self, outcome: str, details: dict[str, Any], reason: str | None = None) -> ScenarioReport:
        counts = dict.fromkeys(LINK_CLASSES, 0)
        for m in self.messages:
            counts[m.link_class] += 1
        return ScenarioReport(
            scenario_name=self.config.scenario.name,
            outcome=outcome,
            message_counts=counts,
            ticks_elapsed=self.clock,
            seed=self.config.seed,
            verification_reports=list(self.reports),
            details=details,
            failure_reason=reason,
            message_log=list(self.messages),
            ledger_log=self.network.export_log(),
        )


class TickBudgetExceeded(Exception):
    pass
