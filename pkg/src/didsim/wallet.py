from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .crypto import KeyPair, from_hex, generate_keypair
from .errors import AuthorizationError, InputError


@dataclass
class Wallet:
    """Private keys and held credentials of one actor.

    Keys are stored by fragment (``#key-1``); ``ref()`` turns a fragment into
    a full key reference once the wallet's DID is known.
    """

    name: str
    keys: dict[str, KeyPair] = field(default_factory=dict)
    did: str | None = None
    active_key: str = "#key-1"
    credentials: list[Any] = field(default_factory=list)
    next_status_index: int = 0

    @classmethod
    def from_seed(cls, name: str, seed: bytes, fragment: str = "#key-1") -> "Wallet":
        return cls(name=name, keys={fragment: generate_keypair(seed)}, active_key=fragment)

    @property
    def active(self) -> KeyPair:
        return self.keys[self.active_key]

    def ref(self, fragment: str | None = None) -> str:
        if self.did is None:
            raise InputError(f"wallet {self.name!r} has no DID yet")
        return f"{self.did}{fragment or self.active_key}"

    def key_for(self, key_ref: str) -> KeyPair:
        did, _, fragment = key_ref.partition("#")
        if did != self.did or f"#{fragment}" not in self.keys:
            raise AuthorizationError(f"wallet {self.name!r} holds no key for {key_ref!r}")
        return self.keys[f"#{fragment}"]

    def add_key(self, fragment: str, keypair: KeyPair) -> None:
        if fragment in self.keys:
            raise InputError(f"wallet already holds {fragment}")
        self.keys[fragment] = keypair

    def allocate_status_index(self) -> int:
        index = self.next_status_index
        self.next_status_index += 1
        return index

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "did": self.did,
            "active_key": self.active_key,
            "keys": {frag: kp.private_key.hex() for frag, kp in self.keys.items()},
            "credentials": [c.to_dict() for c in self.credentials],
            "next_status_index": self.next_status_index,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Wallet":
        from .vc import Credential

        try:
            return cls(
                name=data["name"],
                did=data["did"],
                active_key=data["active_key"],
                keys={f: generate_keypair(from_hex(s, 32)) for f, s in data["keys"].items()},
                credentials=[Credential.from_dict(c) for c in data["credentials"]],
                next_status_index=data["next_status_index"],
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise InputError(f"malformed wallet: {exc}") from None
