"""Signed envelopes, receipts and keys: legally significant communications.

Requests and responses travel as canonically serialized JSON envelopes signed
with Ed25519 over the SHA-256 of the canonical bytes (all fields except the
signature itself). Receipts bind a request digest, a decision digest and (for
writes) the appended event seq under the server's signature, so a third party
holding the public key can verify an exchange offline — the escrow pattern:
prove a registry write happened without asking the registry.

Replay is bounded by a per-requester nonce with a sliding window: an envelope
whose (requester, nonce) was already seen inside the window is rejected. A
re-signed envelope with a fresh nonce is a new request, not a replay.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519

from .canonical import canonical_bytes, parse_rfc3339, sha256_hex, to_rfc3339
from .errors import ExpiredKey, MissingField, NonceReplay, SignatureInvalid, UnknownKeyId

ENVELOPE_FIELDS = ("endpoint", "command_text", "requester", "key_id", "at", "nonce")
RECEIPT_FIELDS = ("receipt_id", "request_digest", "decision_digest", "event_seq",
                  "server_key_id", "at")
NONCE_WINDOW = timedelta(hours=24)


def canonicalize(message: dict, required: tuple[str, ...] = ()) -> bytes:
    """Canonical bytes of a message; missing required fields are errors."""
    for name in required:
        if name not in message:
            raise MissingField(name)
    return canonical_bytes(message)


def _unsigned(message: dict) -> dict:
    return {k: v for k, v in message.items() if k != "signature"}


# --- raw signatures ----------------------------------------------------------

def generate_private_key() -> ed25519.Ed25519PrivateKey:
    return ed25519.Ed25519PrivateKey.generate()


def key_id_for(public_key: ed25519.Ed25519PublicKey) -> str:
    raw = public_key.public_bytes(serialization.Encoding.Raw,
                                  serialization.PublicFormat.Raw)
    return sha256_hex(raw)[:16]


def sign(data: bytes, private_key: ed25519.Ed25519PrivateKey) -> str:
    """Hex Ed25519 signature over SHA-256 of the data."""
    return private_key.sign(hashlib.sha256(data).digest()).hex()


def verify(data: bytes, signature_hex: str, public_key: ed25519.Ed25519PublicKey) -> bool:
    try:
        public_key.verify(bytes.fromhex(signature_hex), hashlib.sha256(data).digest())
        return True
    except Exception:
        return False


def private_key_to_pem(key: ed25519.Ed25519PrivateKey) -> bytes:
    return key.private_bytes(serialization.Encoding.PEM,
                             serialization.PrivateFormat.PKCS8,
                             serialization.NoEncryption())


def public_key_to_pem(key: ed25519.Ed25519PublicKey) -> bytes:
    return key.public_bytes(serialization.Encoding.PEM,
                            serialization.PublicFormat.SubjectPublicKeyInfo)


def load_private_key(path: str | Path) -> ed25519.Ed25519PrivateKey:
    key = serialization.load_pem_private_key(Path(path).read_bytes(), password=None)
    if not isinstance(key, ed25519.Ed25519PrivateKey):
        raise ValueError(f"{path}: not an Ed25519 private key")
    return key


def load_public_key_pem(pem: bytes) -> ed25519.Ed25519PublicKey:
    key = serialization.load_pem_public_key(pem)
    if not isinstance(key, ed25519.Ed25519PublicKey):
        raise ValueError("not an Ed25519 public key")
    return key


# --- key records -------------------------------------------------------------

@dataclass(frozen=True)
class KeyRecord:
    key_id: str
    owner: str
    public_key: ed25519.Ed25519PublicKey
    valid_from: datetime
    valid_to: datetime

    def active_at(self, at: datetime) -> bool:
        return self.valid_from <= at < self.valid_to


class KeyStore:
    """Directory of PEM public keys named by key id plus a keys.json index.

    One active key per owner at a time; registration is out-of-band (an
    official installs the files), so loading validates that constraint.
    """

    def __init__(self, directory: str | Path | None = None):
        self._records: dict[str, KeyRecord] = {}
        self._dir = Path(directory) if directory else None
        if self._dir and (self._dir / "keys.json").exists():
            index = json.loads((self._dir / "keys.json").read_text(encoding="utf-8"))
            for entry in index:
                pem = (self._dir / f"{entry['key_id']}.pem").read_bytes()
                record = KeyRecord(
                    key_id=entry["key_id"],
                    owner=entry["owner"],
                    public_key=load_public_key_pem(pem),
                    valid_from=parse_rfc3339(entry["valid_from"]),
                    valid_to=parse_rfc3339(entry["valid_to"]),
                )
                self._add(record)

    def _add(self, record: KeyRecord) -> None:
        for existing in self._records.values():
            if existing.owner == record.owner and not (
                    record.valid_to <= existing.valid_from
                    or existing.valid_to <= record.valid_from):
                raise ValueError(
                    f"owner {record.owner!r} already has an active key in that interval")
        self._records[record.key_id] = record

    def register(self, owner: str, public_key: ed25519.Ed25519PublicKey,
                 valid_from: datetime, valid_to: datetime) -> KeyRecord:
        record = KeyRecord(key_id_for(public_key), owner, public_key, valid_from, valid_to)
        self._add(record)
        if self._dir:
            self._dir.mkdir(parents=True, exist_ok=True)
            (self._dir / f"{record.key_id}.pem").write_bytes(public_key_to_pem(public_key))
            index = [
                {"key_id": r.key_id, "owner": r.owner,
                 "valid_from": to_rfc3339(r.valid_from), "valid_to": to_rfc3339(r.valid_to)}
                for r in sorted(self._records.values(), key=lambda r: r.key_id)
            ]
            (self._dir / "keys.json").write_text(
                json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return record

    def lookup(self, key_id: str) -> KeyRecord:
        try:
            return self._records[key_id]
        except KeyError:
            raise UnknownKeyId(key_id) from None

    def records(self) -> tuple[KeyRecord, ...]:
        return tuple(self._records.values())


# --- envelopes ------------------------------------------------------------------

def new_nonce() -> str:
    return secrets.token_hex(16)


def build_envelope(endpoint: str, command_text: str, requester: str,
                   private_key: ed25519.Ed25519PrivateKey, at: datetime,
                   nonce: str | None = None) -> dict:
    envelope = {
        "endpoint": endpoint,
        "command_text": command_text,
        "requester": requester,
        "key_id": key_id_for(private_key.public_key()),
        "at": to_rfc3339(at),
        "nonce": nonce or new_nonce(),
    }
    envelope["signature"] = sign(canonicalize(envelope, ENVELOPE_FIELDS), private_key)
    return envelope


def envelope_digest(envelope: dict) -> str:
    """Digest of the complete signed envelope as transmitted."""
    return sha256_hex(canonical_bytes(envelope))


def verify_envelope(envelope: dict, keys: KeyStore) -> KeyRecord:
    """Authenticate an envelope: known key, active, owner match, valid signature."""
    for name in (*ENVELOPE_FIELDS, "signature"):
        if name not in envelope:
            raise MissingField(name)
    record = keys.lookup(envelope["key_id"])
    at = parse_rfc3339(envelope["at"])
    if not record.active_at(at):
        raise ExpiredKey(f"key {record.key_id} not active at {envelope['at']}")
    if record.owner != envelope["requester"]:
        raise SignatureInvalid(
            f"key {record.key_id} belongs to {record.owner!r}, "
            f"not {envelope['requester']!r}")
    body = canonicalize(_unsigned(envelope), ENVELOPE_FIELDS)
    if not verify(body, envelope["signature"], record.public_key):
        raise SignatureInvalid("envelope signature does not verify")
    return record


class NonceLedger:
    """Sliding-window seen-set with atomic check-and-insert; optionally persisted."""

    def __init__(self, path: str | Path | None = None, window: timedelta = NONCE_WINDOW):
        self._lock = threading.Lock()
        self._seen: dict[tuple[str, str], datetime] = {}
        self._window = window
        self._path = Path(path) if path else None
        if self._path and self._path.exists():
            with open(self._path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        entry = json.loads(line)
                        self._seen[(entry["requester"], entry["nonce"])] = parse_rfc3339(
                            entry["at"])

    def check_and_insert(self, requester: str, nonce: str, at: datetime) -> None:
        with self._lock:
            cutoff = at - self._window
            self._seen = {k: v for k, v in self._seen.items() if v >= cutoff}
            if (requester, nonce) in self._seen:
                raise NonceReplay(f"nonce already seen for {requester!r} inside window")
            self._seen[(requester, nonce)] = at
            if self._path:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(canonical_bytes(
                        {"requester": requester, "nonce": nonce, "at": to_rfc3339(at)}
                    ).decode("utf-8") + "\n")


# --- receipts ---------------------------------------------------------------------

def issue_receipt(envelope: dict, decision, private_key: ed25519.Ed25519PrivateKey,
                  event=None, receipt_id: str | None = None) -> dict:
    """Non-repudiable answer to a finalized decision (plus event for writes)."""
    request_digest = envelope_digest(envelope)
    decision_digest = decision.digest()
    receipt = {
        "receipt_id": receipt_id or sha256_hex(
            f"receipt:{request_digest}:{decision_digest}:".encode())[:32],
        "request_digest": request_digest,
        "decision_digest": decision_digest,
        "event_seq": event.seq if event is not None else None,
        "server_key_id": key_id_for(private_key.public_key()),
        "at": envelope["at"],
    }
    receipt["signature"] = sign(canonicalize(receipt, RECEIPT_FIELDS), private_key)
    return receipt


def verify_receipt(receipt: dict, keys: KeyStore, envelope: dict | None = None,
                   decision_doc: dict | None = None) -> list[str]:
    """Offline receipt verification; returns a list of problems (empty = accept).

    Needs only public keys plus, optionally, the canonical request and
    decision documents to cross-check the digests. No network access.
    """
    problems: list[str] = []
    for name in (*RECEIPT_FIELDS, "signature"):
        if name not in receipt:
            return [f"missing field {name!r}"]
    try:
        record = keys.lookup(receipt["server_key_id"])
    except UnknownKeyId:
        return [f"unknown server key {receipt['server_key_id']!r}"]
    body = canonicalize(_unsigned(receipt), RECEIPT_FIELDS)
    if not verify(body, receipt["signature"], record.public_key):
        problems.append("signature invalid")
    if envelope is not None and envelope_digest(envelope) != receipt["request_digest"]:
        problems.append("request digest mismatch")
    if decision_doc is not None:
        doc_digest = sha256_hex(canonical_bytes(decision_doc))
        if doc_digest != receipt["decision_digest"]:
            problems.append("decision digest mismatch")
    return problems
