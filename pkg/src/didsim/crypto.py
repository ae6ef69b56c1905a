"""Signatures, canonical serialization and content identifiers.

Every signature in the toolkit is computed over ``canonicalize(obj)`` where
``obj`` is the structure with its own proof field removed. One suite is
registered (Ed25519, deterministic); the suite id travels with every key and
signature so verifiers dispatch on it.
"""

from __future__ import annotations

import functools
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import CanonicalizationError, InputError

ED25519 = "ed25519"
DEFAULT_SUITE = ED25519

_HEX_RE = re.compile(r"[0-9a-f]*")


@dataclass(frozen=True)
class Suite:
    suite_id: str
    seed_length: int
    public_key_length: int
    signature_length: int
    derive_public: Callable[[bytes], bytes]
    sign: Callable[[bytes, bytes], bytes]
    verify: Callable[[bytes, bytes, bytes], bool]


# key objects are immutable and costly to rebuild; scenario runs reuse a few thousand
_private_key = functools.lru_cache(maxsize=1 << 15)(Ed25519PrivateKey.from_private_bytes)
_public_key = functools.lru_cache(maxsize=1 << 15)(Ed25519PublicKey.from_public_bytes)


def _ed25519_public(seed: bytes) -> bytes:
    return _private_key(seed).public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )


def _ed25519_sign(seed: bytes, message: bytes) -> bytes:
    return _private_key(seed).sign(message)


def _ed25519_verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        _public_key(public_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


SUITES: dict[str, Suite] = {
    ED25519: Suite(
        suite_id=ED25519,
        seed_length=32,
        public_key_length=32,
        signature_length=64,
        derive_public=_ed25519_public,
        sign=_ed25519_sign,
        verify=_ed25519_verify,
    )
}


def get_suite(suite_id: str) -> Suite:
    try:
        return SUITES[suite_id]
    except (KeyError, TypeError):
        raise InputError(f"unknown signature suite {suite_id!r}") from None


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    private_key: bytes
    suite_id: str = DEFAULT_SUITE

    def __repr__(self) -> str:  # keep secrets out of logs and tracebacks
        return f"KeyPair(public_key={self.public_key.hex()}, suite_id={self.suite_id!r})"


@dataclass(frozen=True)
class Signature:
    value: bytes
    suite_id: str = DEFAULT_SUITE

    def __post_init__(self) -> None:
        suite = get_suite(self.suite_id)
        if not isinstance(self.value, bytes) or len(self.value) != suite.signature_length:
            raise InputError(
                f"{self.suite_id} signatures are {suite.signature_length} bytes"
            )

    def to_dict(self) -> dict[str, str]:
        return {"suite_id": self.suite_id, "value": self.value.hex()}

    @classmethod
    def from_dict(cls, data: Any) -> "Signature":
        if not isinstance(data, dict) or set(data) != {"suite_id", "value"}:
            raise InputError("signature must be a map with suite_id and value")
        return cls(value=from_hex(data["value"]), suite_id=data["suite_id"])


@dataclass(frozen=True)
class Digest:
    value: bytes

    def hex(self) -> str:
        return self.value.hex()


def generate_keypair(seed: bytes, suite_id: str = DEFAULT_SUITE) -> KeyPair:
    """Derive a key pair deterministically from ``seed`` (32 bytes)."""
    suite = get_suite(suite_id)
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != suite.seed_length:
        raise InputError(f"seed must be exactly {suite.seed_length} bytes")
    seed = bytes(seed)
    return KeyPair(public_key=suite.derive_public(seed), private_key=seed, suite_id=suite_id)


def sign(key: KeyPair | bytes, message: bytes, suite_id: str = DEFAULT_SUITE) -> Signature:
    """Sign ``message`` with a KeyPair or a raw private key."""
    if isinstance(key, KeyPair):
        private, suite_id = key.private_key, key.suite_id
    else:
        private = key
    suite = get_suite(suite_id)
    if not isinstance(private, bytes) or len(private) != suite.seed_length:
        raise InputError("malformed private key")
    if not isinstance(message, (bytes, bytearray)):
        raise InputError("message must be bytes")
    return Signature(value=suite.sign(private, bytes(message)), suite_id=suite_id)


def verify(public_key: bytes, message: bytes, sig: Signature) -> bool:
    """Return True iff ``sig`` is a valid signature over exactly ``message``.

    Never raises: anything malformed is simply a rejection.
    """
    try:
        suite = SUITES[sig.suite_id]
    except (KeyError, AttributeError, TypeError):
        return False
    if not isinstance(public_key, bytes) or len(public_key) != suite.public_key_length:
        return False
    if not isinstance(message, (bytes, bytearray)):
        return False
    if not isinstance(sig.value, bytes) or len(sig.value) != suite.signature_length:
        return False
    try:
        return suite.verify(public_key, bytes(message), sig.value)
    except Exception:
        return False


def _check_canonical(value: Any, path: str) -> None:
    if value is None or isinstance(value, (bool, str, int)):
        return
    if isinstance(value, float):
        raise CanonicalizationError(f"{path}: floating-point values are not allowed")
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise CanonicalizationError(f"{path}: map keys must be strings")
            _check_canonical(item, f"{path}.{key}")
        return
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check_canonical(item, f"{path}[{i}]")
        return
    raise CanonicalizationError(f"{path}: unsupported type {type(value).__name__}")


_SCALARS = (str, int, bool, type(None))
_CONTAINERS = (list, tuple)


def _fast_ok(value: Any) -> bool:
    """Quick scan on the hot path; the recursive walk explains failures."""
    stack = [value]
    while stack:
        v = stack.pop()
        t = type(v)
        if t in _SCALARS:
            continue
        if t is dict:
            for key in v:
                if type(key) is not str:
                    return False
            stack.extend(v.values())
        elif t in _CONTAINERS:
            stack.extend(v)
        else:
            return False
    return True


def canonicalize(value: Any) -> bytes:
    """Serialize ``value`` to its unique byte representation.

    Sorted keys, no insignificant whitespace, UTF-8. Floats are rejected.
    """
    if not _fast_ok(value):
        _check_canonical(value, "$")
    text = json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )
    try:
        return text.encode("utf-8")
    except UnicodeEncodeError:
        raise CanonicalizationError("string is not valid UTF-8 (lone surrogate)") from None


def _no_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, item in pairs:
        if key in out:
            raise CanonicalizationError(f"duplicate map key {key!r}")
        out[key] = item
    return out


def _no_float(text: str) -> Any:
    raise CanonicalizationError(f"floating-point literal {text!r} is not allowed")


def parse_canonical(data: bytes | str, *, strict: bool = True) -> Any:
    """Parse canonical text back to a value.

    With ``strict`` the input must be byte-identical to the canonical form of
    the parsed value, so each value has exactly one accepted encoding.
    """
    try:
        raw = data if isinstance(data, bytes) else data.encode("utf-8")
        value = json.loads(
            raw.decode("utf-8"),
            object_pairs_hook=_no_duplicates,
            parse_float=_no_float,
            parse_constant=_no_float,
        )
    except CanonicalizationError:
        raise
    except (ValueError, UnicodeError, RecursionError) as exc:
        raise CanonicalizationError(f"not canonical text: {exc}") from None
    if strict and canonicalize(value) != raw:
        raise CanonicalizationError("input is not in canonical form")
    return value


def content_id(data: bytes) -> Digest:
    """SHA-256 of ``data``."""
    return Digest(hashlib.sha256(bytes(data)).digest())


def from_hex(text: Any, length: int | None = None) -> bytes:
    """Strict lowercase hex decoding; one encoding per byte string."""
    if not isinstance(text, str) or len(text) % 2 or not _HEX_RE.fullmatch(text):
        raise InputError("expected lowercase hex")
    out = bytes.fromhex(text)
    if length is not None and len(out) != length:
        raise InputError(f"expected {length} bytes, got {len(out)}")
    return out


@dataclass(frozen=True)
class TestVector:
    __test__ = False  # not a pytest class

    seed: bytes
    message: bytes
    signature: bytes


def load_test_vectors(path: str | Path) -> list[TestVector]:
    """Read ``seed_hex<TAB>message_hex<TAB>signature_hex`` lines.

    Blank lines and lines starting with ``#`` are skipped.
    """
    vectors = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise InputError(f"{path}:{lineno}: expected 3 tab-separated fields")
        try:
            seed, message, signature = (bytes.fromhex(f.strip()) for f in fields)
        except ValueError:
            raise InputError(f"{path}:{lineno}: bad hex") from None
        vectors.append(TestVector(seed, message, signature))
    return vectors


def dump_test_vectors(vectors: Iterable[TestVector]) -> str:
    return "".join(
        f"{v.seed.hex()}\t{v.message.hex()}\t{v.signature.hex()}\n" for v in vectors
    )
