"""Executable multi-operator flows.

Every flow has a setup phase (identities, credential issuance) whose messages
are not counted, followed by a measured phase that runs once per tick over
``horizon_ticks + 1`` ticks. Tick parameters such as ``revoke_at_tick`` are
offsets from the start of the measured phase.
"""

from __future__ import annotations

import functools
from typing import Any, Callable

from .. import did as did_core
from .. import vc
from ..config import ActorSpec, NodeSpec, OutputSpec, RunConfig, ScenarioSpec, derive_seed
from ..crypto import content_id, generate_keypair
from ..did import ChallengeBook, ServiceEndpointEntry, respond_to_challenge
from ..errors import ConfigError, DidSimError
from .harness import Actor, Harness, ScenarioReport, TickBudgetExceeded, percent
from .interconnect import apply_patch, originate, validate_message

ROAMING_GATE = "#roaming-gate"


def _guarded(flow: Callable[[Harness], str]) -> Callable[..., ScenarioReport]:
    """Run ``flow`` in a fresh harness; turn runtime errors into failure reports."""

    @functools.wraps(flow)
    def run(config: RunConfig, max_ticks: int | None = None) -> ScenarioReport:
        h = Harness(config, max_ticks)
        try:
            outcome = flow(h)
        except ConfigError:
            raise
        except (TickBudgetExceeded, DidSimError) as exc:
            return h.report("failure", h.details, f"{type(exc).__name__}: {exc}")
        return h.report(outcome, h.details)

    return run


def _horizon(h: Harness, event_offset: int | None) -> int:
    default = 0 if event_offset is None else event_offset + h.network.max_delay + 1
    return h.param("horizon_ticks", default)


def _measured_ticks(h: Harness, horizon: int):
    """Yield each measured-phase tick offset after moving the clock there."""
    start = h.clock
    h.details["access_start_tick"] = start
    h.measuring = True
    for offset in range(horizon + 1):
        h.advance_to(start + offset)
        yield offset


def _note_denial(h: Harness, reason: Any) -> None:
    h.details["denials"] = h.details.get("denials", 0) + 1
    if h.details.get("first_denial_tick") is None:
        h.details["first_denial_tick"] = h.clock
        h.details["first_denial_reason"] = reason


def _roaming_actors(h: Harness) -> tuple[Actor, Actor, list[Actor]]:
    home = h.role_actor("home", "HomeMNO")
    visited = h.role_actor("visited", "VisitedMNO")
    template = h.role_actor("subscriber", "Subscriber", "IoTDevice")
    count = h.param("subscribers", 1)
    if count < 1:
        raise ConfigError("subscribers must be at least 1")
    return home, visited, h.expand(template, count)


def _issue_access(h: Harness, home: Actor, subscribers: list[Actor]) -> None:
    validity = h.param("validity_ticks", 1000)
    for sub in subscribers:
        credential = vc.issue(
            h.network, home.node, home.wallet, sub.did, vc.ACCESS_PERMISSION,
            h.claims(service_profile="data"), h.clock, h.clock + validity, with_status=True,
        )
        sub.wallet.credentials.append(credential)
        h.send(home, sub, "access_permission")
    h.settle()


def _edge_access(h: Harness, home: Actor, visited: Actor, sub: Actor) -> bool:
    """Visited operator authorizes ``sub`` using only its own ledger node."""
    credential = sub.wallet.credentials[0]
    report = h.challenge_and_verify(visited, sub, [credential])
    granted = (
        report.accepted
        and credential.schema == vc.ACCESS_PERMISSION
        and credential.issuer == home.did
    )
    h.send(visited, sub, "access_granted" if granted else "access_denied")
    if not granted:
        _note_denial(h, report.failed() or ["policy"])
    return granted


@_guarded
def run_roaming_access(h: Harness) -> str:
    home, visited, subscribers = _roaming_actors(h)
    revoke_before = h.param("revoke_before_access", False, bool)
    revoke_at = h.param("revoke_at_tick", None)
    if revoke_before and revoke_at is not None:
        raise ConfigError("revoke_before_access and revoke_at_tick are exclusive")
    target_index = h.param("revoke_subscriber", 0)
    if target_index >= len(subscribers):
        raise ConfigError("revoke_subscriber is out of range")
    horizon = _horizon(h, revoke_at)

    h.create_identities()
    _issue_access(h, home, subscribers)
    target = subscribers[target_index].wallet.credentials[0]
    if revoke_before:
        vc.revoke(h.network, home.node, home.wallet, target.status)
        h.settle()

    h.details.update(
        subscribers=len(subscribers),
        verifier_node=visited.node,
        verifier_delay=h.network.delays[visited.node],
        first_denial_tick=None,
        denials=0,
    )
    log_size = len(h.network)
    for offset in _measured_ticks(h, horizon):
        if offset == revoke_at:
            receipt = vc.revoke(h.network, home.node, home.wallet, target.status)
            h.details["revocation_commit_tick"] = receipt.commit_tick
        for sub in subscribers:
            _edge_access(h, home, visited, sub)
    h.details["attempts"] = len(subscribers) * (horizon + 1)
    h.details["ledger_transactions_during_access"] = len(h.network) - log_size
    return "success" if h.details["denials"] == 0 else "expected_denial"


@_guarded
def run_baseline_centralized(h: Harness) -> str:
    """Today's flow: every access costs a visited->home round trip."""
    home, visited, subscribers = _roaming_actors(h)
    h.measuring = True
    for sub in subscribers:
        h.send(sub, visited, "attach_request")
        h.send(visited, home, "auth_material_request")
        h.send(home, visited, "auth_material_response")
        h.send(visited, sub, "auth_challenge")
        h.send(sub, visited, "auth_response")
        h.send(visited, sub, "access_granted")
    baseline = sum(m.link_class == "visited_home" for m in h.messages)
    decentralized = run_roaming_access(h.config, h.max_ticks)
    if decentralized.outcome == "failure":
        raise DidSimError(f"decentralized comparison run failed: {decentralized.failure_reason}")
    other = decentralized.message_counts["visited_home"]
    h.details.update(
        subscribers=len(subscribers),
        visited_home_per_access=baseline // len(subscribers),
        decentralized_visited_home=other,
        visited_home_reduction_percent=percent(baseline - other, baseline),
    )
    return "success"


def compare_roaming(config: RunConfig) -> dict[str, Any]:
    """visited_home counts of both roaming models and the exact reduction."""
    base = run_baseline_centralized(config)
    dec = run_roaming_access(config)
    b, d = base.message_counts["visited_home"], dec.message_counts["visited_home"]
    return {"baseline": b, "decentralized": d, "reduction_percent": percent(b - d, b)}


@_guarded
def run_nf_authorization(h: Harness) -> str:
    nrf = h.role_actor("nrf", "NRF")
    consumer = h.role_actor("consumer", "NF_Consumer")
    producer = h.role_actor("producer", "NF_Producer")
    authorized = h.role_actor("authorized_producer", "NF_Producer") if "authorized_producer" in h.params else producer
    service = h.param("service", "nsmf-pdusession", str)
    requested = h.param("requested_service", service, str)
    expired = h.param("expired", False, bool)
    revoke_at = h.param("revoke_at_tick", None)
    horizon = _horizon(h, revoke_at)

    h.create_identities()
    valid_until = h.clock if expired else h.clock + h.param("validity_ticks", 1000)
    credential = vc.issue(
        h.network, nrf.node, nrf.wallet, consumer.did, vc.NETWORK_AUTHORIZATION,
        h.claims(producer=authorized.did, service=service), h.clock, valid_until, with_status=True,
    )
    h.send(nrf, consumer, "network_authorization")
    h.settle()
    if expired and h.clock <= valid_until:
        h.advance_to(valid_until + 1)

    h.details.update(verifier_node=producer.node, verifier_delay=h.network.delays[producer.node],
                     first_denial_tick=None, denials=0)
    for offset in _measured_ticks(h, horizon):
        if offset == revoke_at:
            receipt = vc.revoke(h.network, nrf.node, nrf.wallet, credential.status)
            h.details["revocation_commit_tick"] = receipt.commit_tick
        h.send(consumer, producer, "service_request")
        report = h.challenge_and_verify(producer, consumer, [credential])
        claims_ok = (
            credential.schema == vc.NETWORK_AUTHORIZATION
            and credential.issuer == nrf.did
            and credential.claims.get("producer") == producer.did
            and credential.claims.get("service") == requested
        )
        granted = report.accepted and claims_ok
        h.send(producer, consumer, "service_response" if granted else "service_denied")
        if not granted:
            _note_denial(h, report.failed() or ["claims-mismatch"])
    return "success" if h.details["denials"] == 0 else "expected_denial"


_DEFAULT_ELEMENTS = {
    "route_header": "mno-v>mno-h",
    "charging_info": "tariff-a",
    "subscriber_ref": "ref-0",
}


def _str_list(value: Any, what: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{what} must be a list of strings")
    return value


@_guarded
def run_ipx_alteration(h: Harness) -> str:
    origin = h.role_actor("origin", "VisitedMNO", "HomeMNO") if "origin" in h.params else h.role_actor("origin", "VisitedMNO")
    receiver = h.role_actor("receiver", "HomeMNO", "VisitedMNO") if "receiver" in h.params else h.role_actor("receiver", "HomeMNO")
    chain_ids = h.params.get("ipx_chain") or [a.actor_id for a in h.actors.values() if a.role == "IPX"]
    chain = []
    for name in _str_list(chain_ids, "ipx_chain"):
        if name not in h.actors or h.actors[name].role != "IPX":
            raise ConfigError(f"ipx_chain: {name!r} is not an IPX actor")
        chain.append(h.actors[name])
    if not chain:
        raise ConfigError("ipx_alteration needs at least one IPX actor")
    permitted = h.params.get("permitted_elements", {})
    if not isinstance(permitted, dict):
        raise ConfigError("permitted_elements must map IPX ids to element lists")
    elements = h.params.get("elements", _DEFAULT_ELEMENTS)
    if not isinstance(elements, dict) or not all(isinstance(v, str) for v in elements.values()):
        raise ConfigError("elements must map names to strings")
    patches = h.params.get("patches")
    if not patches:
        # default: each hop appends itself to the route header
        route, patches = elements.get("route_header", ""), []
        for a in chain:
            route = f"{route}+{a.actor_id}"
            patches.append({"ipx": a.actor_id, "element": "route_header", "value": route})
    for p in patches:
        if not isinstance(p, dict) or set(p) != {"ipx", "element", "value"}:
            raise ConfigError("each patch has ipx, element and value")
        if not all(isinstance(p[k], str) for k in p):
            raise ConfigError("patch ipx, element and value must be strings")
        if p["ipx"] not in [a.actor_id for a in chain]:
            raise ConfigError(f"patch by {p['ipx']!r} who is not on the chain")
    revoke_ipx = h.params.get("revoke_ipx")
    revoke_at = h.param("revoke_at_tick", None)
    if (revoke_ipx is None) != (revoke_at is None):
        raise ConfigError("revoke_ipx and revoke_at_tick go together")
    if revoke_ipx is not None and (not isinstance(revoke_ipx, str) or revoke_ipx not in [a.actor_id for a in chain]):
        raise ConfigError(f"revoke_ipx {revoke_ipx!r} is not on the chain")
    horizon = _horizon(h, revoke_at)

    h.create_identities()
    grants = {}
    for ipx in chain:
        allowed = _str_list(permitted.get(ipx.actor_id, ["route_header"]), f"permitted_elements.{ipx.actor_id}")
        grants[ipx.actor_id] = vc.issue(
            h.network, origin.node, origin.wallet, ipx.did, vc.ALTERATION_PERMISSION,
            h.claims(permitted_elements=sorted(allowed)), h.clock,
            h.clock + h.param("validity_ticks", 1000), with_status=True,
        )
        h.send(origin, ipx, "alteration_permission")
    h.settle()

    h.details.update(verifier_node=receiver.node, verifier_delay=h.network.delays[receiver.node],
                     first_denial_tick=None, denials=0, verdicts=[])
    for offset in _measured_ticks(h, horizon):
        if offset == revoke_at:
            receipt = vc.revoke(h.network, origin.node, origin.wallet, grants[revoke_ipx].status)
            h.details["revocation_commit_tick"] = receipt.commit_tick
        message = originate(origin.wallet, elements)
        previous = origin
        for ipx in chain:
            h.send(previous, ipx, "interconnect_message")
            for p in patches:
                if p["ipx"] == ipx.actor_id:
                    message = apply_patch(message, ipx.wallet, p["element"], p["value"], grants[ipx.actor_id])
            previous = ipx
        h.send(previous, receiver, "interconnect_message")
        verdict = validate_message(h.network, receiver.node, message, expected_origin=origin.did)
        h.ledger_read(receiver, "resolve_origin")
        for _ in verdict.credential_reports:
            h.ledger_read(receiver, "resolve_patcher")
            h.ledger_read(receiver, "resolve_issuer")
            h.ledger_read(receiver, "status")
        h.reports.extend(r.to_dict() for r in verdict.credential_reports)
        h.details["verdicts"].append({"tick": h.clock, **verdict.to_dict()})
        if not verdict:
            _note_denial(h, verdict.reason)
            if "offending_patch" not in h.details:
                h.details["offending_patch"] = verdict.offending_patch
        else:
            h.details["delivered_elements"] = message.current_elements()
    return "success" if h.details["denials"] == 0 else "expected_denial"


@_guarded
def run_key_rotation_roaming(h: Harness) -> str:
    home = h.role_actor("home", "HomeMNO")
    visited = h.role_actor("visited", "VisitedMNO")
    sub = h.role_actor("subscriber", "Subscriber", "IoTDevice")
    keep_old = h.param("keep_old_assertion_key", True, bool)
    rotate_at = h.param("rotate_at_tick", 1)
    new_endpoint = h.param("new_endpoint", "sim://mno-h/gate2", str)
    initial_endpoint = h.param("initial_endpoint", "sim://mno-h/gate1", str)
    horizon = _horizon(h, rotate_at)

    h.create_identities()
    current = did_core.authoritative_document(h.network, home.did)
    gate = ServiceEndpointEntry(ROAMING_GATE, "RoamingGate", initial_endpoint)
    did_core.update_document(
        h.network, home.node, home.did,
        did_core.DidDocument(home.did, current.verification_methods, (gate,)), home.wallet,
    )
    _issue_access(h, home, [sub])
    old_ref = home.wallet.ref()
    new_key = generate_keypair(content_id(home.wallet.active.private_key + b"rotation").value)

    books = {node: ChallengeBook(visited.did) for node in h.network.nodes}
    ownership: dict[str, dict[str, Any]] = {node: {"first_reject_tick": None} for node in books}
    endpoint_seen: dict[str, int | None] = dict.fromkeys(books)
    h.details.update(
        keep_old_assertion_key=keep_old, verifier_node=visited.node,
        verifier_delay=h.network.delays[visited.node], first_denial_tick=None, denials=0,
    )
    for offset in _measured_ticks(h, horizon):
        if offset == rotate_at:
            receipt = did_core.rotate_key(
                h.network, home.node, home.wallet, new_key, keep_old_as_assertion=keep_old,
                services=[ServiceEndpointEntry(ROAMING_GATE, "RoamingGate", new_endpoint)],
            )
            h.details["rotation_commit_tick"] = receipt.commit_tick
        _edge_access(h, home, visited, sub)
        h.ledger_read(visited, "resolve_endpoint")
        for node, book in books.items():
            document = did_core.resolve(h.network, node, home.did).document
            if endpoint_seen[node] is None and document.service(ROAMING_GATE).endpoint == new_endpoint:
                endpoint_seen[node] = h.clock
            challenge = book.make_challenge(home.did, h.clock, 1, h.rng.getrandbits(64))
            result = book.verify_ownership(
                h.network, node, home.did, challenge, respond_to_challenge(home.wallet, challenge, old_ref)
            )
            if not result and ownership[node]["first_reject_tick"] is None:
                ownership[node] = {"first_reject_tick": h.clock, "reason": result.reason}
    h.details["visited_endpoint"] = did_core.resolve(h.network, visited.node, home.did).document.service(ROAMING_GATE).endpoint
    h.details["endpoint_seen_tick"] = endpoint_seen
    h.details["old_key_ownership"] = ownership
    return "success" if h.details["denials"] == 0 else "expected_denial"


@_guarded
def run_location_attestation(h: Harness) -> str:
    variant = h.param("variant", "attestation", str)
    if variant not in ("attestation", "onboarding"):
        raise ConfigError("variant must be 'attestation' or 'onboarding'")
    mno = h.role_actor("mno", "HomeMNO", "VisitedMNO") if "mno" in h.params else h.role_actor("mno", "HomeMNO")
    sub = h.role_actor("subscriber", "Subscriber")
    h.details.update(variant=variant, first_denial_tick=None, denials=0)

    if variant == "onboarding":
        gov = h.role_actor("government", "Government")
        h.create_identities()
        credential = vc.issue(
            h.network, gov.node, gov.wallet, sub.did, vc.SOCIAL_SECURITY_NUMBER,
            h.claims(ssn=h.param("ssn", "000-00-0000", str)), h.clock,
            h.clock + h.param("validity_ticks", 1000), with_status=True,
        )
        h.send(gov, sub, "social_security_number")
        h.settle()
        verifier, issuer, schema = mno, gov, vc.SOCIAL_SECURITY_NUMBER
    else:
        ott = h.role_actor("ott", "OTTService")
        h.create_identities()
        issued = h.clock
        credential = vc.issue(
            h.network, mno.node, mno.wallet, sub.did, vc.LOCATION_ATTESTATION,
            h.claims(cell_area=h.param("cell_area", "cell-area-17", str), attested_tick=issued),
            issued, issued + h.param("validity_ticks", 5),
        )
        h.send(mno, sub, "location_attestation")
        h.advance_to(issued + h.param("present_after_ticks", 0))
        h.details["valid_until_tick"] = credential.valid_until_tick
        verifier, issuer, schema = ott, mno, vc.LOCATION_ATTESTATION

    for _ in _measured_ticks(h, h.param("horizon_ticks", 0)):
        report = h.challenge_and_verify(verifier, sub, [credential])
        granted = report.accepted and credential.schema == schema and credential.issuer == issuer.did
        h.send(verifier, sub, "accepted" if granted else "rejected")
        if not granted:
            _note_denial(h, report.failed() or ["policy"])
    return "success" if h.details["denials"] == 0 else "expected_denial"


SCENARIOS: dict[str, Callable[..., ScenarioReport]] = {
    "roaming_access": run_roaming_access,
    "baseline_centralized": run_baseline_centralized,
    "nf_authorization": run_nf_authorization,
    "ipx_alteration": run_ipx_alteration,
    "key_rotation_roaming": run_key_rotation_roaming,
    "location_attestation": run_location_attestation,
}


def run_scenario(config: RunConfig, max_ticks: int | None = None) -> ScenarioReport:
    try:
        flow = SCENARIOS[config.scenario.name]
    except KeyError:
        raise ConfigError(f"unknown scenario {config.scenario.name!r}") from None
    return flow(config, max_ticks)


DEFAULT_NODES = (("n-home", 0), ("n-visited", 2), ("n-core", 1), ("n-ott", 1), ("n-ipx", 3))
DEFAULT_ACTORS = (
    ("mno-h", "HomeMNO", "n-home"),
    ("mno-v", "VisitedMNO", "n-visited"),
    ("sub", "Subscriber", "n-visited"),
    ("nrf", "NRF", "n-core"),
    ("nf-c", "NF_Consumer", "n-core"),
    ("nf-p1", "NF_Producer", "n-core"),
    ("nf-p2", "NF_Producer", "n-core"),
    ("ipx-1", "IPX", "n-ipx"),
    ("ipx-2", "IPX", "n-ipx"),
    ("ott", "OTTService", "n-ott"),
    ("gov", "Government", "n-home"),
)
_DEFAULT_PARAMS = {"nf_authorization": {"producer": "nf-p1"}}


def default_config(
    name: str, seed: int = 7, delays: dict[str, int] | None = None, **params: Any
) -> RunConfig:
    """The reference topology with every role present."""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}")
    nodes = tuple(NodeSpec(n, (delays or {}).get(n, d)) for n, d in DEFAULT_NODES)
    actors = tuple(ActorSpec(a, r, n, derive_seed(seed, a)) for a, r, n in DEFAULT_ACTORS)
    merged = {**_DEFAULT_PARAMS.get(name, {}), **params}
    return RunConfig(nodes, actors, ScenarioSpec(name, merged), seed, OutputSpec())
