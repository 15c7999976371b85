"""Signed proof objects.

Two strictly separated kinds of proof exist:

* ``GatewayEvidence`` — settlement evidence the gateway mints for the ERP.
  It alone can drive benefit-conferring state transitions, and it is nonce
  protected so a replayed copy is rejected.
* ``ClientToken`` — identity attestation issued at login. It structurally
  cannot describe payment state: it has no field for one.

Both are HMAC-SHA256 over a canonical length-prefixed encoding with the key
purpose mixed in, so keys of different purposes never verify each other's
signatures.
"""
from __future__ import annotations

import base64
import enum
import hashlib
import hmac
import json
import random
from dataclasses import dataclass
from typing import Optional

MIN_KEY_BYTES = 32
NONCE_BYTES = 16


class KeyPurpose(enum.Enum):
    GATEWAY_TO_ERP = "GatewayToErp"
    PORTAL_CLIENT_TOKEN = "PortalClientToken"


class EvidenceOutcome(enum.Enum):
    AUTHORIZED = "Authorized"
    CAPTURED = "Captured"
    DECLINED = "Declined"


class Verdict(enum.Enum):
    VERIFIED = "Verified"
    BAD_SIGNATURE = "BadSignature"
    NONCE_REUSED = "NonceReused"
    FIELD_MISMATCH = "FieldMismatch"


class KeyPurposeError(ValueError):
    pass


@dataclass(frozen=True)
class SigningKey:
    key_id: str
    secret: bytes
    purpose: KeyPurpose

    def __post_init__(self):
        if len(self.secret) < MIN_KEY_BYTES:
            raise ValueError(f"key needs >= {MIN_KEY_BYTES} secret bytes")


def derive_key(key_id: str, purpose: KeyPurpose, seed_material: str) -> SigningKey:
    """Deterministic key for seeded simulations."""
    secret = hashlib.sha256(
        f"{key_id}|{purpose.value}|{seed_material}".encode()
    ).digest()
    return SigningKey(key_id, secret, purpose)


@dataclass(frozen=True)
class GatewayEvidence:
    gateway_id: str
    object_id: str
    attempt_id: int
    amount: int
    currency: str
    outcome: EvidenceOutcome
    nonce: bytes
    logical_time: int
    signature: bytes


@dataclass(frozen=True)
class ClientToken:
    user_id: str
    session_id: str
    issued_at: int
    signature: bytes


class NonceStore:
    """Consumed-nonce set with atomic check-and-insert; only ever grows."""

    def __init__(self):
        self._seen: set[bytes] = set()

    def consume(self, nonce: bytes) -> bool:
        if nonce in self._seen:
            return False
        self._seen.add(nonce)
        return True

    def seen(self, nonce: bytes) -> bool:
        return nonce in self._seen

    def __len__(self) -> int:
        return len(self._seen)

    def snapshot(self) -> list[str]:
        return sorted(n.hex() for n in self._seen)


def _canonical(purpose: KeyPurpose, tag: str, fields: list[bytes]) -> bytes:
    parts = [purpose.value.encode(), tag.encode()] + fields
    return b"".join(len(p).to_bytes(4, "big") + p for p in parts)


def _evidence_payload(ev_fields) -> bytes:
    gateway_id, object_id, attempt_id, amount, currency, outcome, nonce, t = ev_fields
    return _canonical(KeyPurpose.GATEWAY_TO_ERP, "evidence", [
        gateway_id.encode(),
        object_id.encode(),
        attempt_id.to_bytes(8, "big"),
        amount.to_bytes(8, "big"),
        currency.encode(),
        outcome.value.encode(),
        nonce,
        t.to_bytes(8, "big"),
    ])


def _mac(key: SigningKey, payload: bytes) -> bytes:
    return hmac.new(key.secret, payload, hashlib.sha256).digest()


def sign_evidence(
    key: SigningKey,
    *,
    gateway_id: str,
    object_id: str,
    attempt_id: int,
    amount: int,
    currency: str,
    outcome: EvidenceOutcome,
    logical_time: int,
    rng: random.Random,
    nonce: Optional[bytes] = None,
) -> GatewayEvidence:
    if key.purpose is not KeyPurpose.GATEWAY_TO_ERP:
        raise KeyPurposeError(f"cannot sign evidence with {key.purpose.value} key")
    if nonce is None:
        nonce = rng.getrandbits(8 * NONCE_BYTES).to_bytes(NONCE_BYTES, "big")
    fields = (gateway_id, object_id, attempt_id, amount, currency,
              outcome, nonce, logical_time)
    return GatewayEvidence(*fields, signature=_mac(key, _evidence_payload(fields)))


def verify_evidence(
    key: SigningKey,
    ev: GatewayEvidence,
    expected: tuple[str, int, int, str],
    nonce_store: NonceStore,
) -> Verdict:
    """Check MAC, then expected fields, then nonce freshness (consumed on success)."""
    fields = (ev.gateway_id, ev.object_id, ev.attempt_id, ev.amount,
              ev.currency, ev.outcome, ev.nonce, ev.logical_time)
    if key.purpose is not KeyPurpose.GATEWAY_TO_ERP or not hmac.compare_digest(
        _mac(key, _evidence_payload(fields)), ev.signature
    ):
        return Verdict.BAD_SIGNATURE
    object_id, attempt_id, amount, currency = expected
    if (ev.object_id, ev.attempt_id, ev.amount, ev.currency) != (
        object_id, attempt_id, amount, currency
    ):
        return Verdict.FIELD_MISMATCH
    if not nonce_store.consume(ev.nonce):
        return Verdict.NONCE_REUSED
    return Verdict.VERIFIED


def mint_client_token(
    key: SigningKey, user_id: str, session_id: str, logical_time: int
) -> ClientToken:
    if key.purpose is not KeyPurpose.PORTAL_CLIENT_TOKEN:
        raise KeyPurposeError(f"cannot mint client token with {key.purpose.value} key")
    payload = _canonical(KeyPurpose.PORTAL_CLIENT_TOKEN, "client-token", [
        user_id.encode(), session_id.encode(), logical_time.to_bytes(8, "big"),
    ])
    return ClientToken(user_id, session_id, logical_time, _mac(key, payload))


def verify_client_token(key: SigningKey, token: ClientToken) -> Verdict:
    payload = _canonical(KeyPurpose.PORTAL_CLIENT_TOKEN, "client-token", [
        token.user_id.encode(),
        token.session_id.encode(),
        token.issued_at.to_bytes(8, "big"),
    ])
    if key.purpose is not KeyPurpose.PORTAL_CLIENT_TOKEN or not hmac.compare_digest(
        _mac(key, payload), token.signature
    ):
        return Verdict.BAD_SIGNATURE
    return Verdict.VERIFIED


# Wire forms: JSON with binary fields base64-encoded. Used in transcripts and
# as the auth cookie value (itself base64 so it survives cookie syntax).

def evidence_to_wire(ev: GatewayEvidence) -> bytes:
    return json.dumps({
        "gateway_id": ev.gateway_id,
        "object_id": ev.object_id,
        "attempt_id": ev.attempt_id,
        "amount": ev.amount,
        "currency": ev.currency,
        "outcome": ev.outcome.value,
        "nonce": base64.b64encode(ev.nonce).decode(),
        "logical_time": ev.logical_time,
        "signature": base64.b64encode(ev.signature).decode(),
    }, sort_keys=True).encode()


def evidence_from_wire(data: bytes) -> GatewayEvidence:
    d = json.loads(data)
    return GatewayEvidence(
        gateway_id=d["gateway_id"],
        object_id=d["object_id"],
        attempt_id=d["attempt_id"],
        amount=d["amount"],
        currency=d["currency"],
        outcome=EvidenceOutcome(d["outcome"]),
        nonce=base64.b64decode(d["nonce"]),
        logical_time=d["logical_time"],
        signature=base64.b64decode(d["signature"]),
    )


def token_to_cookie(token: ClientToken) -> str:
    raw = json.dumps({
        "user_id": token.user_id,
        "session_id": token.session_id,
        "issued_at": token.issued_at,
        "signature": base64.b64encode(token.signature).decode(),
    }, sort_keys=True).encode()
    return base64.b64encode(raw).decode()


def token_from_cookie(value: str) -> ClientToken:
    d = json.loads(base64.b64decode(value, validate=True))
    return ClientToken(
        user_id=d["user_id"],
        session_id=d["session_id"],
        issued_at=d["issued_at"],
        signature=base64.b64decode(d["signature"]),
    )
