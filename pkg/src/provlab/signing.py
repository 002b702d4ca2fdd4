"""Signing-key material, envelope signatures and postData sealing.

The vendor app signs every request with HMAC-SHA256 keyed by the
concatenation of three extracted secrets, ``certHash_secret2_secret1``.
postData bodies are sealed with AES-128-GCM under a key derived from
the same material, so both directions of the app-cloud exchange stay
testable in plaintext-in / ciphertext-out form.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import secrets as _sysrand
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .protocol import canonicalize

NONCE_BYTES = 12
TAG_BYTES = 16


class SigningError(ValueError):
    pass


class EmptyKeyPart(SigningError):
    pass


class MissingSign(SigningError):
    pass


class AuthFailure(SigningError):
    pass


class BadEncoding(SigningError):
    pass


@dataclass(frozen=True)
class SigningKeySet:
    """The three key parts recovered from a vendor app."""

    cert_hash: str
    secret1: str
    secret2: str

    def derive(self) -> bytes:
        return derive_signing_key(self)


def derive_signing_key(keys: SigningKeySet) -> bytes:
    """UTF-8 bytes of ``certHash_secret2_secret1`` (note the order)."""
    if not (keys.cert_hash and keys.secret1 and keys.secret2):
        raise EmptyKeyPart("all three key parts must be nonempty")
    return f"{keys.cert_hash}_{keys.secret2}_{keys.secret1}".encode("utf-8")


def sign_envelope(fields: dict, key: bytes) -> str:
    """Lowercase hex HMAC-SHA256 over the canonical field string."""
    return hmac.new(key, canonicalize(fields).encode("utf-8"), hashlib.sha256).hexdigest()


def verify_envelope(envelope: dict, key: bytes) -> bool:
    """Constant-time check of the ``sign`` field against a recomputation."""
    sign = envelope.get("sign")
    if sign is None:
        raise MissingSign("envelope carries no sign field")
    expected = sign_envelope(envelope, key)
    return hmac.compare_digest(expected, str(sign).lower())


def _cipher_key(signing_key: bytes) -> bytes:
    return hashlib.sha256(signing_key).digest()[:16]


def seal_postdata(plaintext: bytes, key: bytes, nonce_source=None) -> str:
    """base64(nonce[12] || AES-128-GCM ciphertext+tag).

    ``nonce_source`` is a ``random.Random``-like object used for
    deterministic tests; by default a fresh OS-random nonce is drawn.
    """
    if nonce_source is None:
        nonce = _sysrand.token_bytes(NONCE_BYTES)
    else:
        nonce = bytes(nonce_source.getrandbits(8) for _ in range(NONCE_BYTES))
    sealed = AESGCM(_cipher_key(key)).encrypt(nonce, plaintext, None)
    return base64.b64encode(nonce + sealed).decode("ascii")


def open_postdata(sealed: str, key: bytes) -> bytes:
    """Inverse of :func:`seal_postdata`; authenticates the tag."""
    try:
        raw = base64.b64decode(sealed.encode("ascii"), validate=True)
    except Exception as exc:
        raise BadEncoding(f"sealed text is not valid base64: {exc}") from exc
    if len(raw) < NONCE_BYTES + TAG_BYTES:
        raise BadEncoding("sealed text shorter than nonce plus tag")
    nonce, ct = raw[:NONCE_BYTES], raw[NONCE_BYTES:]
    try:
        return AESGCM(_cipher_key(key)).decrypt(nonce, ct, None)
    except InvalidTag as exc:
        raise AuthFailure("postData authentication failed") from exc
