"""Verifiable credentials, presentations and the on-ledger revocation registry.

Credentials never touch the ledger. The only things an issuer writes are its
DID document and its revocation registry, an index set keyed by
``<issuer-did>#revocation``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from . import crypto
from .crypto import Signature, canonicalize, content_id, from_hex, parse_canonical
from .did import (
    ASSERTION,
    AUTHENTICATION,
    Did,
    authoritative_document,
    is_did,
    resolve,
    split_key_ref,
)
from .errors import (
    AuthorizationError,
    ConflictError,
    InputError,
    LifecycleError,
    NotFoundError,
)
from .ledger import LedgerNetwork, Receipt, Transaction, TxKind
from .wallet import Wallet

ACCESS_PERMISSION = "AccessPermission"
NETWORK_AUTHORIZATION = "NetworkAuthorization"
ALTERATION_PERMISSION = "AlterationPermission"
LOCATION_ATTESTATION = "LocationAttestation"
SOCIAL_SECURITY_NUMBER = "SocialSecurityNumber"
SCHEMAS = (
    ACCESS_PERMISSION,
    NETWORK_AUTHORIZATION,
    ALTERATION_PERMISSION,
    LOCATION_ATTESTATION,
    SOCIAL_SECURITY_NUMBER,
)

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"
CHECKS = ("holder_binding", "issuer_signature", "issuer_active", "subject_match", "time_window", "status")
CREDENTIAL_CHECKS = CHECKS[1:]


def _int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InputError(f"{what} must be an integer")
    return value


def registry_id_for(issuer: str) -> str:
    return f"{issuer}#revocation"


@dataclass(frozen=True)
class StatusRef:
    registry_id: str
    index: int

    def to_dict(self) -> dict[str, Any]:
        return {"registry_id": self.registry_id, "index": self.index}

    @classmethod
    def from_dict(cls, data: Any) -> "StatusRef":
        if not isinstance(data, dict) or set(data) != {"registry_id", "index"}:
            raise InputError("malformed status reference")
        if not isinstance(data["registry_id"], str) or _int(data["index"], "status index") < 0:
            raise InputError("malformed status reference")
        return cls(data["registry_id"], data["index"])


@dataclass(frozen=True)
class Proof:
    verification_method_ref: str
    signature: Signature

    def to_dict(self) -> dict[str, Any]:
        return {"verification_method_ref": self.verification_method_ref, "signature": self.signature.to_dict()}

    @classmethod
    def from_dict(cls, data: Any) -> "Proof":
        if not isinstance(data, dict) or set(data) != {"verification_method_ref", "signature"}:
            raise InputError("malformed proof")
        if not isinstance(data["verification_method_ref"], str):
            raise InputError("malformed proof")
        return cls(data["verification_method_ref"], Signature.from_dict(data["signature"]))


_CREDENTIAL_FIELDS = frozenset(
    {"credential_id", "schema", "issuer", "subject", "claims", "valid_from_tick",
     "valid_until_tick", "status", "proof"}
)


@dataclass(frozen=True)
class Credential:
    credential_id: str
    schema: str
    issuer: str
    subject: str
    claims: dict[str, Any]
    valid_from_tick: int
    valid_until_tick: int
    status: StatusRef | None
    proof: Proof

    def unsigned_body(self) -> dict[str, Any]:
        return {
            "schema": self.schema,
            "issuer": self.issuer,
            "subject": self.subject,
            "claims": self.claims,
            "valid_from_tick": self.valid_from_tick,
            "valid_until_tick": self.valid_until_tick,
            "status": None if self.status is None else self.status.to_dict(),
        }

    def signing_input(self) -> bytes:
        return canonicalize({**self.unsigned_body(), "credential_id": self.credential_id})

    def to_dict(self) -> dict[str, Any]:
        return {**self.unsigned_body(), "credential_id": self.credential_id, "proof": self.proof.to_dict()}

    def to_bytes(self) -> bytes:
        return canonicalize(self.to_dict())

    @classmethod
    def from_dict(cls, data: Any) -> "Credential":
        if not isinstance(data, dict) or set(data) != _CREDENTIAL_FIELDS:
            raise InputError("malformed credential")
        for name in ("credential_id", "schema", "issuer", "subject"):
            if not isinstance(data[name], str):
                raise InputError(f"credential {name} must be a string")
        if not isinstance(data["claims"], dict):
            raise InputError("credential claims must be a map")
        return cls(
            credential_id=data["credential_id"],
            schema=data["schema"],
            issuer=data["issuer"],
            subject=data["subject"],
            claims=data["claims"],
            valid_from_tick=_int(data["valid_from_tick"], "valid_from_tick"),
            valid_until_tick=_int(data["valid_until_tick"], "valid_until_tick"),
            status=None if data["status"] is None else StatusRef.from_dict(data["status"]),
            proof=Proof.from_dict(data["proof"]),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Credential":
        return cls.from_dict(parse_canonical(data))


def compute_credential_id(body: Mapping[str, Any]) -> str:
    return content_id(canonicalize(dict(body))).hex()


@dataclass(frozen=True)
class VerificationReport:
    checks: dict[str, str]
    as_of_tick: int
    node: str
    credential_reports: tuple["VerificationReport", ...] = ()

    @property
    def outcome(self) -> str:
        performed = [v for v in self.checks.values() if v != SKIPPED]
        return "accept" if performed and all(v == PASS for v in performed) else "reject"

    @property
    def accepted(self) -> bool:
        return self.outcome == "accept"

    def failed(self) -> list[str]:
        return [name for name in CHECKS if self.checks.get(name) == FAIL]

    def to_dict(self) -> dict[str, Any]:
        out = {
            "outcome": self.outcome,
            "checks": dict(self.checks),
            "as_of_tick": self.as_of_tick,
            "node": self.node,
        }
        if self.credential_reports:
            out["credentials"] = [r.to_dict() for r in self.credential_reports]
        return out


# -- revocation registry ---------------------------------------------------


class Status(str, enum.Enum):
    ACTIVE = "active"
    REVOKED = "revoked"
    UNKNOWN_REGISTRY = "unknown-registry"


@dataclass(frozen=True)
class RevocationRegistryState:
    registry_id: str
    issuer: str
    revoked: frozenset[int] = field(default_factory=frozenset)


def registry_state(
    network: LedgerNetwork, registry_id: str, node: str | None = None
) -> RevocationRegistryState | None:
    """Fold the registry's transactions (optionally as seen from ``node``)."""
    txs = network.registry_transactions(registry_id, node)
    if not txs:
        return None
    revoked = frozenset(tx.payload["index"] for tx in txs if tx.payload["op"] == "revoke")
    return RevocationRegistryState(registry_id, txs[0].payload["issuer"], revoked)


def check_status(network: LedgerNetwork, node: str, status_ref: StatusRef) -> Status:
    state = registry_state(network, status_ref.registry_id, node)
    if state is None:
        return Status.UNKNOWN_REGISTRY
    return Status.REVOKED if status_ref.index in state.revoked else Status.ACTIVE


def _validate_revocation(network: LedgerNetwork, tx: Transaction) -> None:
    payload = tx.payload
    op = payload.get("op")
    expected = {"registry_id", "issuer", "op", "signer"} | ({"index"} if op == "revoke" else set())
    if op not in ("create", "revoke") or set(payload) != expected:
        raise InputError("malformed RevocationUpdate payload")
    issuer, signer = payload["issuer"], payload["signer"]
    if not is_did(issuer) or payload["registry_id"] != registry_id_for(issuer):
        raise InputError("registry id must be derived from the issuer DID")
    state = registry_state(network, payload["registry_id"])
    if op == "create" and state is not None:
        raise ConflictError(f"registry {payload['registry_id']} already exists")
    if op == "revoke":
        if state is None:
            raise NotFoundError(f"registry {payload['registry_id']} does not exist")
        if _int(payload["index"], "index") < 0:
            raise InputError("index must be non-negative")
        if payload["index"] in state.revoked:
            raise ConflictError(f"index {payload['index']} is already revoked")
    if not isinstance(signer, str) or signer.partition("#")[0] != issuer or tx.submitter_did != issuer:
        raise AuthorizationError("only the registry's issuer may write to it")
    document = authoritative_document(network, issuer)
    if document is None or document.deactivated:
        raise LifecycleError(f"issuer {issuer} is not active")
    method = document.method(split_key_ref(signer)[1])
    if method is None or ASSERTION not in method.purposes:
        raise AuthorizationError(f"{signer} is not an assertion key of {issuer}")
    if not crypto.verify(method.public_key, tx.signing_input(), tx.submitter_signature):
        raise AuthorizationError("registry update signature does not verify")


VALIDATORS = {TxKind.REVOCATION_UPDATE: _validate_revocation}


def _assertion_ref(network: LedgerNetwork, wallet: Wallet, node: str | None) -> str:
    """A key reference the wallet can sign with that is an assertion key."""
    if wallet.did is None:
        raise InputError(f"wallet {wallet.name!r} has no DID")
    if node is None:
        document = authoritative_document(network, wallet.did)
    else:
        found = resolve(network, node, wallet.did)
        document = None if found is None else found.document
    if document is None:
        raise NotFoundError(f"{wallet.did} is not visible")
    if document.deactivated:
        raise LifecycleError(f"{wallet.did} is deactivated")
    candidates = [wallet.active_key] + sorted(wallet.keys)
    for fragment in candidates:
        method = document.method(fragment)
        if method is not None and ASSERTION in method.purposes and fragment in wallet.keys:
            return wallet.ref(fragment)
    raise AuthorizationError(f"wallet {wallet.name!r} holds no assertion key of {wallet.did}")


def _submit_registry(network: LedgerNetwork, node: str, wallet: Wallet, payload: dict) -> Receipt:
    signer = _assertion_ref(network, wallet, None)
    payload = {**payload, "issuer": str(wallet.did), "signer": signer}
    signature = crypto.sign(wallet.key_for(signer), canonicalize(payload))
    return network.submit(node, Transaction(TxKind.REVOCATION_UPDATE, payload, str(wallet.did), signature))


# -- issuance and verification --------------------------------------------


def issue(
    network: LedgerNetwork,
    node: str,
    issuer_wallet: Wallet,
    subject: str,
    schema: str,
    claims: Mapping[str, Any],
    valid_from_tick: int,
    valid_until_tick: int,
    with_status: bool = False,
) -> Credential:
    """Sign a credential for ``subject``. Nothing about it is written on-ledger
    except, on first use, the issuer's (empty) revocation registry."""
    _int(valid_from_tick, "valid_from_tick")
    _int(valid_until_tick, "valid_until_tick")
    if valid_until_tick < valid_from_tick:
        raise InputError("valid_until_tick precedes valid_from_tick")
    if not isinstance(schema, str) or not schema:
        raise InputError("schema must be a non-empty string")
    Did(subject)
    claims = dict(claims)
    canonicalize(claims)
    signer = _assertion_ref(network, issuer_wallet, node)
    issuer = str(issuer_wallet.did)
    status = None
    if with_status:
        registry_id = registry_id_for(issuer)
        if registry_state(network, registry_id) is None:
            _submit_registry(network, node, issuer_wallet, {"registry_id": registry_id, "op": "create"})
        status = StatusRef(registry_id, issuer_wallet.allocate_status_index())
    body = {
        "schema": schema,
        "issuer": issuer,
        "subject": str(subject),
        "claims": claims,
        "valid_from_tick": valid_from_tick,
        "valid_until_tick": valid_until_tick,
        "status": None if status is None else status.to_dict(),
    }
    credential_id = compute_credential_id(body)
    signature = crypto.sign(
        issuer_wallet.key_for(signer), canonicalize({**body, "credential_id": credential_id})
    )
    return Credential(
        credential_id, schema, issuer, str(subject), claims, valid_from_tick,
        valid_until_tick, status, Proof(signer, signature),
    )


def revoke(network: LedgerNetwork, node: str, issuer_wallet: Wallet, status_ref: StatusRef) -> Receipt:
    state = registry_state(network, status_ref.registry_id)
    if state is None:
        raise NotFoundError(f"registry {status_ref.registry_id} does not exist")
    if state.issuer != issuer_wallet.did:
        raise AuthorizationError(f"registry {status_ref.registry_id} belongs to {state.issuer}")
    if status_ref.index in state.revoked:
        raise ConflictError(f"index {status_ref.index} is already revoked")
    return _submit_registry(
        network, node, issuer_wallet,
        {"registry_id": status_ref.registry_id, "op": "revoke", "index": status_ref.index},
    )


def _issuer_signature_ok(credential: Credential, document) -> bool:
    try:
        if compute_credential_id(credential.unsigned_body()) != credential.credential_id:
            return False
        key_did, fragment = split_key_ref(credential.proof.verification_method_ref)
    except InputError:
        return False
    method = document.method(fragment)
    if key_did != credential.issuer or method is None or ASSERTION not in method.purposes:
        return False
    return crypto.verify(method.public_key, credential.signing_input(), credential.proof.signature)


def verify_credential(
    network: LedgerNetwork, node: str, credential: Credential, expected_subject: str | None = None
) -> VerificationReport:
    """Check a credential using only ``node``'s view of the ledger."""
    found = resolve(network, node, credential.issuer)
    checks = dict.fromkeys(CHECKS, SKIPPED)
    checks["issuer_signature"] = PASS if found and _issuer_signature_ok(credential, found.document) else FAIL
    checks["issuer_active"] = PASS if found and not found.deactivated else FAIL
    now = network.clock
    checks["time_window"] = PASS if credential.valid_from_tick <= now <= credential.valid_until_tick else FAIL
    if credential.status is not None:
        active = check_status(network, node, credential.status) is Status.ACTIVE
        checks["status"] = PASS if active else FAIL
    if expected_subject is not None:
        checks["subject_match"] = PASS if credential.subject == expected_subject else FAIL
    return VerificationReport(checks, now, node)


_PRESENTATION_FIELDS = frozenset({"holder", "credentials", "challenge_nonce", "audience", "proof"})


@dataclass(frozen=True)
class Presentation:
    holder: str
    credentials: tuple[Credential, ...]
    challenge_nonce: bytes
    audience: str
    proof: Proof

    def unsigned_body(self) -> dict[str, Any]:
        return {
            "holder": self.holder,
            "credentials": [c.to_dict() for c in self.credentials],
            "challenge_nonce": self.challenge_nonce.hex(),
            "audience": self.audience,
        }

    def signing_input(self) -> bytes:
        return canonicalize(self.unsigned_body())

    def to_dict(self) -> dict[str, Any]:
        return {**self.unsigned_body(), "proof": self.proof.to_dict()}

    def to_bytes(self) -> bytes:
        return canonicalize(self.to_dict())

    @classmethod
    def from_dict(cls, data: Any) -> "Presentation":
        if not isinstance(data, dict) or set(data) != _PRESENTATION_FIELDS:
            raise InputError("malformed presentation")
        if not isinstance(data["holder"], str) or not isinstance(data["audience"], str):
            raise InputError("malformed presentation")
        if not isinstance(data["credentials"], list) or not data["credentials"]:
            raise InputError("a presentation carries at least one credential")
        return cls(
            holder=data["holder"],
            credentials=tuple(Credential.from_dict(c) for c in data["credentials"]),
            challenge_nonce=from_hex(data["challenge_nonce"], 16),
            audience=data["audience"],
            proof=Proof.from_dict(data["proof"]),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Presentation":
        return cls.from_dict(parse_canonical(data))


def present(
    holder_wallet: Wallet,
    credentials: Iterable[Credential],
    challenge_nonce: bytes,
    audience: str,
    key_ref: str | None = None,
) -> Presentation:
    credentials = tuple(credentials)
    if not credentials:
        raise InputError("cannot present an empty credential list")
    if not isinstance(challenge_nonce, bytes) or len(challenge_nonce) != 16:
        raise InputError("challenge nonce must be 16 bytes")
    key_ref = key_ref or holder_wallet.ref()
    holder, audience = str(holder_wallet.did), str(audience)
    body = {
        "holder": holder,
        "credentials": [c.to_dict() for c in credentials],
        "challenge_nonce": challenge_nonce.hex(),
        "audience": audience,
    }
    signature = crypto.sign(holder_wallet.key_for(key_ref), canonicalize(body))
    return Presentation(holder, credentials, challenge_nonce, audience, Proof(key_ref, signature))


def _holder_binding_ok(network: LedgerNetwork, node: str, presentation: Presentation,
                       expected_nonce: bytes, expected_audience: str) -> bool:
    if presentation.challenge_nonce != expected_nonce or presentation.audience != expected_audience:
        return False
    found = resolve(network, node, presentation.holder)
    if found is None or found.deactivated:
        return False
    try:
        key_did, fragment = split_key_ref(presentation.proof.verification_method_ref)
    except InputError:
        return False
    method = found.document.method(fragment)
    if key_did != presentation.holder or method is None or AUTHENTICATION not in method.purposes:
        return False
    return crypto.verify(method.public_key, presentation.signing_input(), presentation.proof.signature)


def _combine(values: Iterable[str]) -> str:
    values = list(values)
    if FAIL in values:
        return FAIL
    return PASS if PASS in values else SKIPPED


def verify_presentation(
    network: LedgerNetwork,
    node: str,
    presentation: Presentation,
    expected_nonce: bytes,
    expected_audience: str,
) -> VerificationReport:
    """Holder binding first; only then each embedded credential.

    The top-level checks combine the per-credential reports (any fail wins).
    """
    checks = dict.fromkeys(CHECKS, SKIPPED)
    if not _holder_binding_ok(network, node, presentation, expected_nonce, expected_audience):
        checks["holder_binding"] = FAIL
        return VerificationReport(checks, network.clock, node)
    checks["holder_binding"] = PASS
    reports = tuple(
        verify_credential(network, node, c, expected_subject=presentation.holder)
        for c in presentation.credentials
    )
    for name in CREDENTIAL_CHECKS:
        checks[name] = _combine(r.checks[name] for r in reports)
    return VerificationReport(checks, network.clock, node, reports)
