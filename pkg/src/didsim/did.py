"""DID syntax, document lifecycle on the ledger, and proof of ownership.

Identifiers look like ``did:sim6g:<base58>`` where the base58 part encodes the
first 16 bytes of SHA-256 over the initial public key. Documents are replaced
wholesale on every update; the log keeps every historical version.
"""

from __future__ import annotations

import dataclasses
import functools
import random
import re
from dataclasses import dataclass
from typing import Any, Iterable

import base58

from . import crypto
from .crypto import KeyPair, Signature, canonicalize, content_id, from_hex
from .errors import (
    AuthorizationError,
    ConflictError,
    InputError,
    LifecycleError,
    NotFoundError,
)
from .ledger import LedgerNetwork, Receipt, Transaction, TxKind
from .wallet import Wallet

METHOD = "sim6g"
PREFIX = f"did:{METHOD}:"
ID_BYTES = 16

AUTHENTICATION = "authentication"
ASSERTION = "assertion"
PURPOSES = frozenset({AUTHENTICATION, ASSERTION})

DOCUMENT_FIELDS = frozenset(
    {"id", "controller", "verification_methods", "services", "version", "deactivated"}
)

_FRAGMENT_RE = re.compile(r"#[A-Za-z0-9._-]{1,64}")


@functools.lru_cache(maxsize=1 << 15)
def _msid_problem(msid: str) -> str | None:
    try:
        raw = base58.b58decode(msid)
    except ValueError:
        return "is not base58"
    if len(raw) != ID_BYTES or base58.b58encode(raw).decode() != msid:
        return f"must encode {ID_BYTES} bytes"
    return None


class Did(str):
    """A validated ``did:sim6g`` identifier."""

    def __new__(cls, value: str) -> "Did":
        if isinstance(value, Did):
            return value
        if not isinstance(value, str) or not value.startswith(PREFIX):
            raise InputError(f"not a {METHOD} DID: {value!r}")
        problem = _msid_problem(value[len(PREFIX):])
        if problem:
            raise InputError(f"DID identifier {problem}: {value!r}")
        return super().__new__(cls, value)

    @property
    def method(self) -> str:
        return METHOD

    @property
    def method_specific_id(self) -> str:
        return self[len(PREFIX):]

    @classmethod
    def from_public_key(cls, public_key: bytes) -> "Did":
        msid = base58.b58encode(content_id(public_key).value[:ID_BYTES]).decode()
        return cls(PREFIX + msid)


def is_did(value: Any) -> bool:
    try:
        Did(value)
    except InputError:
        return False
    return True


def split_key_ref(key_ref: str) -> tuple[Did, str]:
    """``did:sim6g:abc#key-1`` -> (Did, ``#key-1``)."""
    if not isinstance(key_ref, str) or "#" not in key_ref:
        raise InputError(f"not a key reference: {key_ref!r}")
    did, _, fragment = key_ref.partition("#")
    fragment = "#" + fragment
    if not _FRAGMENT_RE.fullmatch(fragment):
        raise InputError(f"bad fragment in {key_ref!r}")
    return Did(did), fragment


def _check_fragment(value: Any, what: str) -> str:
    if not isinstance(value, str) or not _FRAGMENT_RE.fullmatch(value):
        raise InputError(f"{what} must be a fragment like '#key-1', got {value!r}")
    return value


@dataclass(frozen=True)
class VerificationMethod:
    id: str
    public_key: bytes
    purposes: frozenset[str] = PURPOSES
    suite_id: str = crypto.DEFAULT_SUITE

    def __post_init__(self) -> None:
        _check_fragment(self.id, "verification method id")
        suite = crypto.get_suite(self.suite_id)
        if not isinstance(self.public_key, bytes) or len(self.public_key) != suite.public_key_length:
            raise InputError(f"{self.id}: public key must be {suite.public_key_length} bytes")
        purposes = frozenset(self.purposes)
        if not purposes or not purposes <= PURPOSES:
            raise InputError(f"{self.id}: purposes must be a non-empty subset of {sorted(PURPOSES)}")
        object.__setattr__(self, "purposes", purposes)

    @classmethod
    def from_keypair(cls, fragment: str, keypair: KeyPair, purposes: Iterable[str] = PURPOSES):
        return cls(fragment, keypair.public_key, frozenset(purposes), keypair.suite_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "suite_id": self.suite_id,
            "public_key": self.public_key.hex(),
            "purposes": sorted(self.purposes),
        }

    @classmethod
    def from_dict(cls, data: Any) -> "VerificationMethod":
        if not isinstance(data, dict) or set(data) != {"id", "suite_id", "public_key", "purposes"}:
            raise InputError("malformed verification method")
        purposes = data["purposes"]
        if not isinstance(purposes, list) or purposes != sorted(set(purposes)):
            raise InputError("purposes must be a sorted list without repeats")
        return cls(data["id"], from_hex(data["public_key"]), frozenset(purposes), data["suite_id"])


@dataclass(frozen=True)
class ServiceEndpointEntry:
    id: str
    type: str
    endpoint: str

    def __post_init__(self) -> None:
        _check_fragment(self.id, "service id")
        if not isinstance(self.type, str) or not isinstance(self.endpoint, str) or not self.endpoint:
            raise InputError(f"{self.id}: service type and endpoint must be non-empty strings")

    def to_dict(self) -> dict[str, str]:
        return {"id": self.id, "type": self.type, "endpoint": self.endpoint}

    @classmethod
    def from_dict(cls, data: Any) -> "ServiceEndpointEntry":
        if not isinstance(data, dict) or set(data) != {"id", "type", "endpoint"}:
            raise InputError("malformed service entry")
        return cls(data["id"], data["type"], data["endpoint"])


@dataclass(frozen=True)
class DidDocument:
    id: Did
    verification_methods: tuple[VerificationMethod, ...]
    services: tuple[ServiceEndpointEntry, ...] = ()
    controller: Did | None = None
    version: int = 0
    deactivated: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", Did(self.id))
        if self.controller is not None:
            object.__setattr__(self, "controller", Did(self.controller))
        object.__setattr__(self, "verification_methods", tuple(self.verification_methods))
        object.__setattr__(self, "services", tuple(self.services))
        if isinstance(self.version, bool) or not isinstance(self.version, int) or self.version < 0:
            raise InputError("document version must be a non-negative integer")
        if not isinstance(self.deactivated, bool):
            raise InputError("deactivated must be a boolean")
        ids = [m.id for m in self.verification_methods] + [s.id for s in self.services]
        if len(ids) != len(set(ids)):
            raise InputError("verification method and service ids must be unique")
        if not self.deactivated and not self.keys_for(AUTHENTICATION):
            raise InputError("an active document needs at least one authentication method")

    def method(self, fragment: str) -> VerificationMethod | None:
        for m in self.verification_methods:
            if m.id == fragment:
                return m
        return None

    def keys_for(self, purpose: str) -> list[VerificationMethod]:
        return [m for m in self.verification_methods if purpose in m.purposes]

    def service(self, fragment: str) -> ServiceEndpointEntry | None:
        for s in self.services:
            if s.id == fragment:
                return s
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": str(self.id),
            "controller": None if self.controller is None else str(self.controller),
            "verification_methods": [m.to_dict() for m in self.verification_methods],
            "services": [s.to_dict() for s in self.services],
            "version": self.version,
            "deactivated": self.deactivated,
        }

    @classmethod
    def from_dict(cls, data: Any) -> "DidDocument":
        if not isinstance(data, dict) or set(data) != DOCUMENT_FIELDS:
            raise InputError(f"a DID document has exactly the fields {sorted(DOCUMENT_FIELDS)}")
        methods, services = data["verification_methods"], data["services"]
        if not isinstance(methods, list) or not isinstance(services, list):
            raise InputError("verification_methods and services must be lists")
        return cls(
            id=Did(data["id"]),
            controller=None if data["controller"] is None else Did(data["controller"]),
            verification_methods=tuple(VerificationMethod.from_dict(m) for m in methods),
            services=tuple(ServiceEndpointEntry.from_dict(s) for s in services),
            version=data["version"],
            deactivated=data["deactivated"],
        )


@dataclass(frozen=True)
class Resolution:
    document: DidDocument
    as_of_tick: int
    node: str
    seq: int

    @property
    def version(self) -> int:
        return self.document.version

    @property
    def deactivated(self) -> bool:
        return self.document.deactivated

    @property
    def metadata(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "deactivated": self.deactivated,
            "as_of_tick": self.as_of_tick,
        }

    def to_dict(self) -> dict[str, Any]:
        return {"document": self.document.to_dict(), "metadata": self.metadata, "node": self.node}


@functools.lru_cache(maxsize=1 << 16)
def _document_of(tx: Transaction) -> DidDocument:
    return DidDocument.from_dict(tx.payload["document"])


def resolve(network: LedgerNetwork, node: str, did: str) -> Resolution | None:
    """Document as seen from ``node`` right now; None if not visible there."""
    tx = network.query_latest(node, did)
    if tx is None:
        return None
    return Resolution(_document_of(tx), network.clock, node, tx.seq)


def resolve_or_raise(network: LedgerNetwork, node: str, did: str) -> Resolution:
    found = resolve(network, node, did)
    if found is None:
        raise NotFoundError(f"{did} is not visible on node {node!r}")
    return found


def authoritative_document(network: LedgerNetwork, did: str) -> DidDocument | None:
    tx = network.authoritative_latest(did)
    return None if tx is None else _document_of(tx)


# -- admission hooks -------------------------------------------------------

_LIFECYCLE_PAYLOAD = {"did", "document", "signer"}


def _lifecycle_payload(tx: Transaction) -> tuple[Did, DidDocument, str]:
    payload = tx.payload
    if set(payload) != _LIFECYCLE_PAYLOAD:
        raise InputError(f"{tx.kind.value} payload has fields {sorted(_LIFECYCLE_PAYLOAD)}")
    did = Did(payload["did"])
    document = DidDocument.from_dict(payload["document"])
    if document.id != did:
        raise InputError("document id does not match the transaction's DID")
    if not isinstance(payload["signer"], str):
        raise InputError("signer must be a key reference")
    return did, document, payload["signer"]


def authorize_signer(
    network: LedgerNetwork, did: str, current: DidDocument, signer: str, message: bytes,
    signature: Signature,
) -> None:
    """Raise AuthorizationError unless ``signer`` may mutate ``did``.

    Allowed signers are authentication keys of the DID's current document or
    of its controller's current document.
    """
    try:
        signer_did, fragment = split_key_ref(signer)
    except InputError as exc:
        raise AuthorizationError(str(exc)) from None
    if signer_did == did:
        source = current
    elif current.controller is not None and signer_did == current.controller:
        source = authoritative_document(network, signer_did)
        if source is None or source.deactivated:
            raise AuthorizationError(f"controller {signer_did} is not active")
    else:
        raise AuthorizationError(f"{signer_did} is neither {did} nor its controller")
    method = source.method(fragment)
    if method is None or AUTHENTICATION not in method.purposes:
        raise AuthorizationError(f"{signer} is not an authentication key of {source.id}")
    if signature.suite_id != method.suite_id or not crypto.verify(method.public_key, message, signature):
        raise AuthorizationError(f"signature does not verify under {signer}")


def _validate_create(network: LedgerNetwork, tx: Transaction) -> None:
    did, document, signer = _lifecycle_payload(tx)
    if tx.submitter_did != "":
        raise InputError("DidCreate is submitted without a submitter DID")
    if document.version != 0 or document.deactivated or document.controller is not None:
        raise InputError("initial documents are version 0, active, without controller")
    if len(document.verification_methods) != 1 or document.services:
        raise InputError("initial documents carry exactly one key and no services")
    method = document.verification_methods[0]
    if method.purposes != PURPOSES:
        raise InputError("the initial key carries both purposes")
    if Did.from_public_key(method.public_key) != did:
        raise InputError("DID is not derived from the initial public key")
    if network.authoritative_latest(did) is not None:
        raise ConflictError(f"{did} already exists")
    if signer != f"{did}{method.id}" or not crypto.verify(
        method.public_key, tx.signing_input(), tx.submitter_signature
    ):
        raise AuthorizationError("DidCreate must be signed by the initial key")


def _validate_mutation(network: LedgerNetwork, tx: Transaction) -> None:
    did, document, signer = _lifecycle_payload(tx)
    current = authoritative_document(network, did)
    if current is None:
        raise NotFoundError(f"{did} does not exist")
    if current.deactivated:
        raise LifecycleError(f"{did} is deactivated")
    if document.version != current.version + 1:
        raise InputError(f"expected version {current.version + 1}, got {document.version}")
    if tx.kind is TxKind.DID_DEACTIVATE:
        if document != dataclasses.replace(current, version=document.version, deactivated=True):
            raise InputError("deactivation only flips the deactivated flag")
    elif document.deactivated:
        raise InputError("use DidDeactivate to deactivate")
    if tx.submitter_did != signer.partition("#")[0]:
        raise AuthorizationError("submitter DID does not match the signer")
    authorize_signer(network, did, current, signer, tx.signing_input(), tx.submitter_signature)


VALIDATORS = {
    TxKind.DID_CREATE: _validate_create,
    TxKind.DID_UPDATE: _validate_mutation,
    TxKind.DID_DEACTIVATE: _validate_mutation,
}


# -- lifecycle operations --------------------------------------------------


def submit_lifecycle(
    network: LedgerNetwork,
    node: str,
    kind: TxKind,
    document: DidDocument,
    signer_key_ref: str,
    keypair: KeyPair,
) -> Receipt:
    """Sign and submit a lifecycle transaction with an explicit key."""
    payload = {"did": str(document.id), "document": document.to_dict(), "signer": signer_key_ref}
    submitter = "" if kind is TxKind.DID_CREATE else signer_key_ref.partition("#")[0]
    tx = Transaction(kind, payload, submitter, crypto.sign(keypair, canonicalize(payload)))
    return network.submit(node, tx)


def create_did(
    network: LedgerNetwork, node: str, keypair: KeyPair | Wallet, fragment: str = "#key-1"
) -> tuple[Did, DidDocument]:
    """Register a new DID for ``keypair``.

    Passing a Wallet uses its active key and records the DID in the wallet.
    """
    wallet = keypair if isinstance(keypair, Wallet) else None
    if wallet is not None:
        fragment, keypair = wallet.active_key, wallet.active
    did = Did.from_public_key(keypair.public_key)
    document = DidDocument(did, (VerificationMethod.from_keypair(fragment, keypair),))
    submit_lifecycle(network, node, TxKind.DID_CREATE, document, f"{did}{fragment}", keypair)
    if wallet is not None:
        wallet.did = did
    return did, document


def _current_for_mutation(network: LedgerNetwork, did: str) -> DidDocument:
    current = authoritative_document(network, did)
    if current is None:
        raise NotFoundError(f"{did} does not exist")
    if current.deactivated:
        raise LifecycleError(f"{did} is deactivated")
    return current


def update_document(
    network: LedgerNetwork,
    node: str,
    did: str,
    body: DidDocument,
    wallet: Wallet,
    signer_key_ref: str | None = None,
) -> Receipt:
    """Replace ``did``'s document with ``body`` (its version is assigned here)."""
    current = _current_for_mutation(network, did)
    if body.id != did:
        raise InputError("document body belongs to a different DID")
    document = dataclasses.replace(body, version=current.version + 1, deactivated=False)
    signer = signer_key_ref or wallet.ref()
    return submit_lifecycle(network, node, TxKind.DID_UPDATE, document, signer, wallet.key_for(signer))


def deactivate(
    network: LedgerNetwork, node: str, did: str, wallet: Wallet, signer_key_ref: str | None = None
) -> Receipt:
    current = _current_for_mutation(network, did)
    document = dataclasses.replace(current, version=current.version + 1, deactivated=True)
    signer = signer_key_ref or wallet.ref()
    return submit_lifecycle(
        network, node, TxKind.DID_DEACTIVATE, document, signer, wallet.key_for(signer)
    )


def rotate_key(
    network: LedgerNetwork,
    node: str,
    wallet: Wallet,
    new_keypair: KeyPair,
    *,
    keep_old_as_assertion: bool = False,
    services: Iterable[ServiceEndpointEntry] | None = None,
) -> Receipt:
    """Swap the wallet's active key for ``new_keypair``, signed by the old key.

    The old key is dropped, or kept with the assertion purpose only so that
    credentials it signed keep verifying.
    """
    current = _current_for_mutation(network, wallet.did)
    old = wallet.active_key
    number = len(wallet.keys) + 1
    while current.method(f"#key-{number}") or f"#key-{number}" in wallet.keys:
        number += 1
    fragment = f"#key-{number}"
    methods = [m for m in current.verification_methods if m.id != old]
    if keep_old_as_assertion and current.method(old) is not None:
        methods.append(dataclasses.replace(current.method(old), purposes=frozenset({ASSERTION})))
    methods.append(VerificationMethod.from_keypair(fragment, new_keypair))
    body = dataclasses.replace(
        current,
        verification_methods=tuple(methods),
        services=current.services if services is None else tuple(services),
    )
    receipt = update_document(network, node, wallet.did, body, wallet, wallet.ref(old))
    wallet.add_key(fragment, new_keypair)
    wallet.active_key = fragment
    return receipt


# -- proof of ownership ----------------------------------------------------


@dataclass(frozen=True)
class OwnershipChallenge:
    nonce: bytes
    audience: Did
    subject: Did
    issued_tick: int
    validity_ticks: int

    def signing_input(self) -> bytes:
        return canonicalize(
            {"nonce": self.nonce.hex(), "audience": str(self.audience), "subject_did": str(self.subject)}
        )

    def expired_at(self, tick: int) -> bool:
        return tick >= self.issued_tick + self.validity_ticks


@dataclass(frozen=True)
class OwnershipResponse:
    key_ref: str
    signature: Signature


@dataclass(frozen=True)
class OwnershipResult:
    accepted: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.accepted


def respond_to_challenge(
    wallet: Wallet, challenge: OwnershipChallenge, key_ref: str | None = None
) -> OwnershipResponse:
    key_ref = key_ref or wallet.ref()
    return OwnershipResponse(key_ref, crypto.sign(wallet.key_for(key_ref), challenge.signing_input()))


class ChallengeBook:
    """Outstanding ownership challenges issued by one verifier.

    Nonces are single use: any verification attempt consumes the challenge.
    """

    def __init__(self, audience: str):
        self.audience = Did(audience)
        self._outstanding: dict[tuple[str, bytes], OwnershipChallenge] = {}

    def make_challenge(
        self, subject: str, current_tick: int, validity_ticks: int, rng_seed: int
    ) -> OwnershipChallenge:
        if isinstance(validity_ticks, bool) or not isinstance(validity_ticks, int) or validity_ticks < 1:
            raise InputError("validity_ticks must be at least 1")
        nonce = random.Random(rng_seed).randbytes(16)
        challenge = OwnershipChallenge(nonce, self.audience, Did(subject), current_tick, validity_ticks)
        self._outstanding[(challenge.subject, nonce)] = challenge
        return challenge

    def verify_ownership(
        self,
        network: LedgerNetwork,
        node: str,
        subject: str,
        challenge: OwnershipChallenge,
        response: OwnershipResponse,
    ) -> OwnershipResult:
        stored = self._outstanding.pop((subject, challenge.nonce), None)
        if stored is None or stored != challenge:
            return OwnershipResult(False, "replayed")
        if stored.expired_at(network.clock):
            return OwnershipResult(False, "expired")
        found = resolve(network, node, subject)
        if found is None:
            return OwnershipResult(False, "not-found")
        if found.deactivated:
            return OwnershipResult(False, "deactivated")
        try:
            key_did, fragment = split_key_ref(response.key_ref)
        except InputError:
            return OwnershipResult(False, "no-matching-key")
        method = found.document.method(fragment)
        if key_did != subject or method is None or AUTHENTICATION not in method.purposes:
            return OwnershipResult(False, "no-matching-key")
        if not crypto.verify(method.public_key, stored.signing_input(), response.signature):
            return OwnershipResult(False, "bad-signature")
        return OwnershipResult(True)
