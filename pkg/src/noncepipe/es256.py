"""Minimal ES256: ECDSA over P-256 with SHA-256.

Signing is a small pure-Python implementation whose per-signature k comes
from a caller-supplied seeded RNG, so a fixed seed yields byte-identical
signatures run after run; that is a simulator property, not a production
one. Verification goes through the `cryptography` package (OpenSSL), which
keeps checking independent of this signer.
"""

from __future__ import annotations

import hashlib
from random import Random
from typing import Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec

__all__ = [
    "der_signature",
    "generate_private_key",
    "public_key_bytes",
    "sign",
    "verify",
]

# NIST P-256 domain parameters
_P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
_A = _P - 3
_B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
_N = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
_G = (
    0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296,
    0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5,
)

_Point = Optional[tuple[int, int]]  # None is the point at infinity


def _add(p: _Point, q: _Point) -> _Point:
    if p is None:
        return q
    if q is None:
        return p
    (x1, y1), (x2, y2) = p, q
    if x1 == x2 and (y1 + y2) % _P == 0:
        return None
    if p == q:
        lam = (3 * x1 * x1 + _A) * pow(2 * y1, -1, _P) % _P
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, _P) % _P
    x3 = (lam * lam - x1 - x2) % _P
    y3 = (lam * (x1 - x3) - y1) % _P
    return (x3, y3)


def _mul(k: int, point: _Point) -> _Point:
    result: _Point = None
    addend = point
    while k:
        if k & 1:
            result = _add(result, addend)
        addend = _add(addend, addend)
        k >>= 1
    return result


def _der_int(value: int) -> bytes:
    raw = value.to_bytes((value.bit_length() + 7) // 8 or 1, "big")
    if raw[0] & 0x80:
        raw = b"\x00" + raw
    return b"\x02" + bytes([len(raw)]) + raw


def der_signature(r: int, s: int) -> bytes:
    body = _der_int(r) + _der_int(s)
    return b"\x30" + bytes([len(body)]) + body


def generate_private_key(rng: Random) -> int:
    return rng.randrange(1, _N)


def public_key_bytes(private_key: int) -> bytes:
    """Uncompressed SEC1 point: 0x04 || X (32 bytes) || Y (32 bytes)."""
    point = _mul(private_key, _G)
    assert point is not None
    x, y = point
    return b"\x04" + x.to_bytes(32, "big") + y.to_bytes(32, "big")


def sign(private_key: int, message: bytes, rng: Random) -> bytes:
    """DER-encoded ECDSA signature over SHA-256(message)."""
    z = int.from_bytes(hashlib.sha256(message).digest(), "big")
    while True:
        k = rng.randrange(1, _N)
        point = _mul(k, _G)
        assert point is not None
        r = point[0] % _N
        if r == 0:
            continue
        s = pow(k, -1, _N) * (z + r * private_key) % _N
        if s == 0:
            continue
        return der_signature(r, s)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Check a DER signature against an uncompressed SEC1 public key."""
    if len(public_key) != 65 or public_key[0] != 0x04:
        return False
    x = int.from_bytes(public_key[1:33], "big")
    y = int.from_bytes(public_key[33:65], "big")
    try:
        key = ec.EllipticCurvePublicNumbers(x, y, ec.SECP256R1()).public_key()
    except ValueError:
        return False
    try:
        key.verify(signature, message, ec.ECDSA(hashes.SHA256()))
        return True
    except (InvalidSignature, ValueError):
        return False
