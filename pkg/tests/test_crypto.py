import json

import pytest
from hypothesis import given, strategies as st

import ed25519_ref
import oracles
from conftest import DATA
from didsim import crypto
from didsim.crypto import (
    Signature,
    canonicalize,
    content_id,
    from_hex,
    generate_keypair,
    load_test_vectors,
    parse_canonical,
    sign,
    verify,
)
from didsim.errors import CanonicalizationError, InputError

VECTORS = load_test_vectors(DATA / "ed25519_vectors.tsv")

json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-(2**70), 2**70) | st.text(max_size=12),
    lambda kids: st.lists(kids, max_size=4) | st.dictionaries(st.text(max_size=6), kids, max_size=4),
    max_leaves=20,
)


@pytest.mark.parametrize("vector", VECTORS, ids=lambda v: v.signature[:4].hex())
def test_signer_matches_vector_file(vector):
    key = generate_keypair(vector.seed)
    assert key.public_key == ed25519_ref.public_key(vector.seed)
    assert sign(key, vector.message).value == vector.signature
    assert verify(key.public_key, vector.message, Signature(vector.signature))


def test_vector_file_has_rfc_cases():
    first = VECTORS[0]
    assert generate_keypair(first.seed).public_key.hex() == (
        "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a"
    )
    assert len(VECTORS) >= 10


@given(st.binary(min_size=32, max_size=32), st.binary(max_size=200))
def test_sign_agrees_with_reference(seed, message):
    key = generate_keypair(seed)
    sig = sign(key, message)
    assert sig.value == ed25519_ref.sign(seed, message)
    assert ed25519_ref.verify(key.public_key, message, sig.value)
    assert verify(key.public_key, message, sig)


@given(st.binary(min_size=32, max_size=32), st.binary(max_size=64), st.data())
def test_any_bit_flip_rejects(seed, message, data):
    key = generate_keypair(seed)
    sig = sign(key, message)
    blob = bytearray(sig.value + message)
    bit = data.draw(st.integers(0, len(blob) * 8 - 1))
    blob[bit // 8] ^= 1 << (bit % 8)
    assert not verify(key.public_key, bytes(blob[len(sig.value):]), Signature(bytes(blob[:64])))


def test_verify_never_raises_on_garbage():
    key = generate_keypair(bytes(32))
    good = sign(key, b"m")
    assert not verify(b"short", b"m", good)
    assert not verify(key.public_key, "text", good)  # type: ignore[arg-type]
    assert not verify(b"\xff" * 32, b"m", good)
    assert not verify(key.public_key, b"m", object())  # type: ignore[arg-type]


def test_signature_and_seed_lengths():
    with pytest.raises(InputError):
        Signature(b"\0" * 63)
    with pytest.raises(InputError):
        generate_keypair(b"\0" * 31)
    with pytest.raises(InputError):
        crypto.get_suite("rsa")


def test_keypair_repr_hides_secret():
    key = generate_keypair(b"\x42" * 32)
    assert (b"\x42" * 32).hex() not in repr(key)


def test_signature_roundtrip():
    sig = sign(generate_keypair(bytes(32)), b"x")
    assert Signature.from_dict(sig.to_dict()) == sig
    with pytest.raises(InputError):
        Signature.from_dict({**sig.to_dict(), "value": sig.to_dict()["value"].upper()})


# -- canonical form --------------------------------------------------------


@given(json_values)
def test_canonical_matches_oracle(value):
    assert canonicalize(value) == oracles.canonical(value)


@given(json_values)
def test_canonical_roundtrip(value):
    data = canonicalize(value)
    assert parse_canonical(data) == value
    assert canonicalize(parse_canonical(data)) == data


@given(st.dictionaries(st.text(max_size=5), st.integers(), max_size=6))
def test_key_order_irrelevant(mapping):
    reordered = dict(reversed(list(mapping.items())))
    assert canonicalize(mapping) == canonicalize(reordered)


def test_canonical_known_answers():
    assert canonicalize({"b": 1, "a": [True, None, "é"]}) == '{"a":[true,null,"é"],"b":1}'.encode()
    assert canonicalize("\u0001") == b'"\\u0001"'


@pytest.mark.parametrize("bad", [1.5, {"x": float("nan")}, {1: "a"}, b"bytes", {"s": {1, 2}}])
def test_canonical_rejects(bad):
    with pytest.raises(CanonicalizationError):
        canonicalize(bad)


@pytest.mark.parametrize(
    "data",
    [b'{"a":1,"a":2}', b'{"b":1,"a":2}', b'{"a": 1}', b"1.0", b"1e3", b"NaN", b"[1,]", b"\xff", b'"\\u00e9"'],
)
def test_parse_rejects_non_canonical(data):
    with pytest.raises(CanonicalizationError):
        parse_canonical(data)


def test_lenient_parse_accepts_whitespace_only():
    assert parse_canonical(b'{"b": 1, "a": 2}', strict=False) == {"a": 2, "b": 1}
    with pytest.raises(CanonicalizationError):
        parse_canonical(b'{"a": 1.5}', strict=False)


# -- content ids and hex ---------------------------------------------------


@pytest.mark.parametrize(
    "data, expected",
    [
        (b"", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
        (b"abc", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
    ],
)
def test_content_id_known_answers(data, expected):
    assert content_id(data).hex() == expected


def test_content_id_of_canonical_bytes_is_order_independent():
    assert content_id(canonicalize({"a": 1, "b": 2})) == content_id(canonicalize({"b": 2, "a": 1}))


@pytest.mark.parametrize("text", ["ABCD", "abc", "zz", 12, "ab cd"])
def test_from_hex_strict(text):
    with pytest.raises(InputError):
        from_hex(text)


def test_from_hex_length():
    assert from_hex("00ff", 2) == b"\x00\xff"
    with pytest.raises(InputError):
        from_hex("00ff", 3)


def test_vector_dump_roundtrip(tmp_path):
    path = tmp_path / "v.tsv"
    path.write_text(crypto.dump_test_vectors(VECTORS))
    assert load_test_vectors(path) == VECTORS


def test_vector_file_errors(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("00\t11\n")
    with pytest.raises(InputError):
        load_test_vectors(path)
    path.write_text("zz\t11\t22\n")
    with pytest.raises(InputError):
        load_test_vectors(path)


def test_stdlib_json_agrees_for_ascii():
    value = {"k": [1, "two", {"z": None, "a": False}]}
    assert canonicalize(value) == json.dumps(value, sort_keys=True, separators=(",", ":")).encode()
