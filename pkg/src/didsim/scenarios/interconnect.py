"""Signed interconnect messages with credential-authorized, hash-chained patches.

The origin signs its elements once. Each intermediary appends a patch signed
over ``digest(previous state) || canonical(patch body)``, so reordering,
dropping a middle patch or editing any field breaks a signature. The element
values the receiver acts on are the origin's elements with patches applied in
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .. import crypto, vc
from ..crypto import Signature, canonicalize, content_id, parse_canonical
from ..did import AUTHENTICATION, resolve, split_key_ref
from ..errors import InputError
from ..ledger import LedgerNetwork
from ..wallet import Wallet


def _patch_body(element_name, new_value, patcher, key_ref, alteration_vc) -> dict[str, Any]:
    return {
        "element_name": element_name,
        "new_value": new_value,
        "patcher": patcher,
        "key_ref": key_ref,
        "alteration_vc": alteration_vc.to_dict(),
    }


@dataclass(frozen=True)
class Patch:
    element_name: str
    new_value: str
    patcher: str
    key_ref: str
    alteration_vc: vc.Credential
    signature: Signature

    def body(self) -> dict[str, Any]:
        return _patch_body(self.element_name, self.new_value, self.patcher, self.key_ref, self.alteration_vc)

    def to_dict(self) -> dict[str, Any]:
        return {**self.body(), "patch_signature": self.signature.to_dict()}

    @classmethod
    def from_dict(cls, data: Any) -> "Patch":
        fields = {"element_name", "new_value", "patcher", "key_ref", "alteration_vc", "patch_signature"}
        if not isinstance(data, dict) or set(data) != fields:
            raise InputError("malformed patch")
        for name in ("element_name", "new_value", "patcher", "key_ref"):
            if not isinstance(data[name], str):
                raise InputError(f"patch {name} must be a string")
        return cls(
            data["element_name"], data["new_value"], data["patcher"], data["key_ref"],
            vc.Credential.from_dict(data["alteration_vc"]), Signature.from_dict(data["patch_signature"]),
        )


@dataclass(frozen=True)
class SignedInterconnectMessage:
    origin: str
    origin_key_ref: str
    elements: dict[str, str]
    origin_signature: Signature
    patches: tuple[Patch, ...] = ()

    def origin_body(self) -> dict[str, Any]:
        return {"origin": self.origin, "origin_key_ref": self.origin_key_ref, "elements": self.elements}

    def state_digests(self) -> list[bytes]:
        """Digest before each patch, plus the final one."""
        digest = content_id(
            canonicalize({**self.origin_body(), "origin_signature": self.origin_signature.to_dict()})
        ).value
        out = [digest]
        for patch in self.patches:
            digest = content_id(digest + canonicalize(patch.body()) + patch.signature.value).value
            out.append(digest)
        return out

    def current_elements(self) -> dict[str, str]:
        elements = dict(self.elements)
        for patch in self.patches:
            elements[patch.element_name] = patch.new_value
        return elements

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.origin_body(),
            "origin_signature": self.origin_signature.to_dict(),
            "patches": [p.to_dict() for p in self.patches],
        }

    def to_bytes(self) -> bytes:
        return canonicalize(self.to_dict())

    @classmethod
    def from_dict(cls, data: Any) -> "SignedInterconnectMessage":
        fields = {"origin", "origin_key_ref", "elements", "origin_signature", "patches"}
        if not isinstance(data, dict) or set(data) != fields:
            raise InputError("malformed interconnect message")
        elements = data["elements"]
        if not isinstance(elements, dict) or not all(isinstance(v, str) for v in elements.values()):
            raise InputError("elements must map names to strings")
        if not isinstance(data["origin"], str) or not isinstance(data["origin_key_ref"], str):
            raise InputError("malformed origin")
        if not isinstance(data["patches"], list):
            raise InputError("patches must be a list")
        return cls(
            data["origin"], data["origin_key_ref"], elements,
            Signature.from_dict(data["origin_signature"]),
            tuple(Patch.from_dict(p) for p in data["patches"]),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SignedInterconnectMessage":
        return cls.from_dict(parse_canonical(data))


def originate(wallet: Wallet, elements: dict[str, str]) -> SignedInterconnectMessage:
    key_ref = wallet.ref()
    body = {"origin": str(wallet.did), "origin_key_ref": key_ref, "elements": dict(elements)}
    signature = crypto.sign(wallet.key_for(key_ref), canonicalize(body))
    return SignedInterconnectMessage(str(wallet.did), key_ref, dict(elements), signature)


def apply_patch(
    message: SignedInterconnectMessage,
    wallet: Wallet,
    element_name: str,
    new_value: str,
    alteration_vc: vc.Credential,
) -> SignedInterconnectMessage:
    key_ref = wallet.ref()
    body = _patch_body(element_name, new_value, str(wallet.did), key_ref, alteration_vc)
    previous = message.state_digests()[-1]
    signature = crypto.sign(wallet.key_for(key_ref), previous + canonicalize(body))
    patch = Patch(element_name, new_value, str(wallet.did), key_ref, alteration_vc, signature)
    return SignedInterconnectMessage(
        message.origin, message.origin_key_ref, message.elements, message.origin_signature,
        message.patches + (patch,),
    )


@dataclass(frozen=True)
class InterconnectVerdict:
    accepted: bool
    reason: str | None = None
    offending_patch: int | None = None
    credential_reports: tuple[vc.VerificationReport, ...] = ()

    def __bool__(self) -> bool:
        return self.accepted

    def to_dict(self) -> dict[str, Any]:
        return {
            "accepted": self.accepted,
            "reason": self.reason,
            "offending_patch": self.offending_patch,
        }


def _auth_key_ok(network: LedgerNetwork, node: str, owner: str, key_ref: str,
                 message: bytes, signature: Signature) -> bool:
    found = resolve(network, node, owner)
    if found is None or found.deactivated:
        return False
    try:
        key_did, fragment = split_key_ref(key_ref)
    except InputError:
        return False
    method = found.document.method(fragment)
    if key_did != owner or method is None or AUTHENTICATION not in method.purposes:
        return False
    return crypto.verify(method.public_key, message, signature)


def validate_message(
    network: LedgerNetwork,
    node: str,
    message: SignedInterconnectMessage,
    expected_origin: str | None = None,
) -> InterconnectVerdict:
    """Receiver-side check using only ``node``'s view of the ledger."""
    if expected_origin is not None and message.origin != expected_origin:
        return InterconnectVerdict(False, "unexpected-origin")
    if not _auth_key_ok(network, node, message.origin, message.origin_key_ref,
                        canonicalize(message.origin_body()), message.origin_signature):
        return InterconnectVerdict(False, "origin-signature")
    digests = message.state_digests()
    reports = []
    for i, patch in enumerate(message.patches):
        if patch.element_name not in message.elements:
            return InterconnectVerdict(False, "unknown-element", i, tuple(reports))
        if not _auth_key_ok(network, node, patch.patcher, patch.key_ref,
                            digests[i] + canonicalize(patch.body()), patch.signature):
            return InterconnectVerdict(False, "patch-signature", i, tuple(reports))
        credential = patch.alteration_vc
        report = vc.verify_credential(network, node, credential, expected_subject=patch.patcher)
        reports.append(report)
        if not report.accepted:
            return InterconnectVerdict(False, "alteration-credential", i, tuple(reports))
        permitted = credential.claims.get("permitted_elements")
        if (
            credential.schema != vc.ALTERATION_PERMISSION
            or credential.issuer != message.origin
            or not isinstance(permitted, list)
            or patch.element_name not in permitted
        ):
            return InterconnectVerdict(False, "not-permitted", i, tuple(reports))
    return InterconnectVerdict(True, None, None, tuple(reports))
