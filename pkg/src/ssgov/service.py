"""The governance service: envelope handling, gazette, configuration.

Every incoming envelope is processed in a fixed, documented order — auth,
syntax, gate, execute — and each stage failure maps to a distinct
machine-readable code inside a signed response. A legal deny is not an
error: it answers with code ``OK``, ``permit=false`` and the missing atoms.
HTTP status codes are reserved for transport and protocol health.

Responses are deterministic functions of the signed request and store state:
the response timestamp echoes the request instant and receipt ids derive
from digests, so independent clients receive byte-identical canonical bodies
for identical canonical requests.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import timedelta
from pathlib import Path

from . import attest
from .attest import KeyStore, NonceLedger, issue_receipt, verify_envelope
from .calculus import Decision, evaluate
from .canonical import canonical_bytes, parse_rfc3339, sha256_hex, to_rfc3339
from .commands import parse
from .conditions import make_context
from .errors import (
    ExpiredKey,
    MissingField,
    NonceReplay,
    SignatureInvalid,
    SsgovError,
    UnknownKeyId,
)
from .frames import frame_from_dict, validate_frame, validate_frame_set
from .gate import AuditLog, derive_receipt_id, gate_and_execute
from .notify import Notifier
from .store import RegistryStore

COMMAND_PATH = "/ssgov/v1/command"
DECIDE_PATH = "/ssgov/v1/decide"
GAZETTE_PATH = "/ssgov/v1/gazette"
HEALTH_PATH = "/ssgov/v1/health"

GRAMMAR_VERSION = "1"
SCHEMA_VERSION = "1"

MAX_BODY_BYTES = 256 * 1024

_NONCE_HEX = set("0123456789abcdef")

RESPONSE_FIELDS = ("endpoint", "at", "request_digest", "code", "error", "decision",
                   "rows", "event_seq", "receipt", "server_key_id")

_ENV_OVERRIDES = {
    "SSGOV_LISTEN_HOST": "listen_host",
    "SSGOV_LISTEN_PORT": "listen_port",
    "SSGOV_DATA_DIR": "data_dir",
    "SSGOV_FRAME_DIR": "frame_dir",
    "SSGOV_KEYS_DIR": "keys_dir",
    "SSGOV_SERVER_KEY": "server_key",
}


@dataclass
class ServiceConfig:
    data_dir: str
    frame_dir: str
    keys_dir: str
    server_key: str
    listen_host: str = "127.0.0.1"
    listen_port: int = 8420
    default_jurisdiction_tags: tuple[str, ...] = ()
    nonce_window_hours: int = 24

    @staticmethod
    def load(path: str | Path, env: dict | None = None) -> "ServiceConfig":
        """Read a JSON config file; SSGOV_* environment variables override."""
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        env = os.environ if env is None else env
        for var, key in _ENV_OVERRIDES.items():
            if var in env:
                doc[key] = int(env[var]) if key == "listen_port" else env[var]
        return ServiceConfig(
            data_dir=doc["data_dir"],
            frame_dir=doc["frame_dir"],
            keys_dir=doc["keys_dir"],
            server_key=doc["server_key"],
            listen_host=doc.get("listen_host", "127.0.0.1"),
            listen_port=int(doc.get("listen_port", 8420)),
            default_jurisdiction_tags=tuple(doc.get("default_jurisdiction_tags", ())),
            nonce_window_hours=int(doc.get("nonce_window_hours", 24)),
        )


class ProtocolError(Exception):
    """Transport-level defect: the input never became a verifiable envelope."""

    def __init__(self, status: int, code: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.code = code
        self.detail = detail


def load_frames(frame_dir: str | Path, schemas=None):
    frames = []
    for path in sorted(Path(frame_dir).glob("*.json")):
        frame = frame_from_dict(json.loads(path.read_text(encoding="utf-8")))
        validate_frame(frame, schemas)
        frames.append(frame)
    validate_frame_set(frames)
    return frames


class GovService:
    """Wires store, frames, keys, nonce ledger, audit log and notifier."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        data_dir = Path(config.data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        self.store = RegistryStore(data_dir / "events.ndjson")
        schemas = {rid: self.store.view().schema(rid)
                   for rid in self.store.view().registries()}
        self.frames = load_frames(config.frame_dir, schemas or None)
        self.keys = KeyStore(config.keys_dir)
        self.server_key = attest.load_private_key(config.server_key)
        self.server_key_id = attest.key_id_for(self.server_key.public_key())
        self.nonces = NonceLedger(data_dir / "nonces.ndjson",
                                  window=timedelta(hours=config.nonce_window_hours))
        self.audit = AuditLog(data_dir / "audit.ndjson")
        self.notifier = Notifier(self.store, self.frames, self.server_key,
                                 frozenset(config.default_jurisdiction_tags),
                                 outbox_path=data_dir / "outbox.ndjson")

    # -- envelope intake ----------------------------------------------------------

    def _read_envelope(self, body: bytes, path: str) -> dict:
        if len(body) > MAX_BODY_BYTES:
            raise ProtocolError(413, "PROTOCOL_ERROR", "request body too large")
        try:
            envelope = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(400, "PROTOCOL_ERROR", f"body is not JSON: {exc}")
        if not isinstance(envelope, dict):
            raise ProtocolError(400, "MALFORMED_ENVELOPE", "envelope must be an object")
        for name in (*attest.ENVELOPE_FIELDS, "signature"):
            if name not in envelope:
                raise ProtocolError(400, "MALFORMED_ENVELOPE", f"missing field {name!r}")
            if not isinstance(envelope[name], str):
                raise ProtocolError(400, "MALFORMED_ENVELOPE",
                                    f"field {name!r} must be a string")
        nonce = envelope["nonce"]
        if len(nonce) != 32 or any(c not in _NONCE_HEX for c in nonce):
            raise ProtocolError(400, "MALFORMED_ENVELOPE", "nonce must be 16 bytes hex")
        try:
            parse_rfc3339(envelope["at"])
        except ValueError as exc:
            raise ProtocolError(400, "MALFORMED_ENVELOPE", f"bad timestamp: {exc}")
        return envelope

    def _authenticate(self, envelope: dict, path: str) -> None:
        verify_envelope(envelope, self.keys)  # raises typed auth errors
        if envelope["endpoint"] != path:
            raise SignatureInvalid(
                f"envelope bound to {envelope['endpoint']!r}, received on {path!r}")
        self.nonces.check_and_insert(envelope["requester"], envelope["nonce"],
                                     parse_rfc3339(envelope["at"]))

    def _respond(self, path: str, envelope: dict | None, code: str, *,
                 error: str | None = None, decision: Decision | None = None,
                 rows=None, event_seq: int | None = None,
                 receipt: dict | None = None) -> dict:
        response = {
            "endpoint": path,
            "at": envelope["at"] if envelope else None,
            "request_digest": attest.envelope_digest(envelope) if envelope else None,
            "code": code,
            "error": error,
            "decision": decision.to_dict() if decision else None,
            "rows": rows,
            "event_seq": event_seq,
            "receipt": receipt,
            "server_key_id": self.server_key_id,
        }
        response["signature"] = attest.sign(
            canonical_bytes({k: response[k] for k in RESPONSE_FIELDS}), self.server_key)
        return response

    # -- endpoints ---------------------------------------------------------------------

    def handle_command(self, body: bytes, path: str = COMMAND_PATH) -> tuple[int, dict]:
        """POST /ssgov/v1/command — auth, parse, gate, execute; one response."""
        envelope = self._read_envelope(body, path)
        try:
            self._authenticate(envelope, path)
        except (UnknownKeyId, ExpiredKey, SignatureInvalid, NonceReplay, MissingField) as exc:
            return 200, self._respond(path, envelope, exc.code, error=exc.detail)

        try:
            ast = parse(envelope["command_text"])
        except SsgovError as exc:
            return 200, self._respond(path, envelope, exc.code, error=exc.detail)

        at = parse_rfc3339(envelope["at"])
        ctx = make_context(at, frozenset(self.config.default_jurisdiction_tags)
                           or frozenset({"default"}))
        try:
            result = gate_and_execute(ast, envelope["requester"], self.frames,
                                      self.store, ctx, audit=self.audit,
                                      request_digest=attest.envelope_digest(envelope))
        except SsgovError as exc:
            return 200, self._respond(path, envelope, exc.code, error=exc.detail)

        receipt = issue_receipt(envelope, result.decision, self.server_key,
                                event=result.event, receipt_id=result.receipt_id)
        return 200, self._respond(
            path, envelope, "OK", decision=result.decision, rows=result.rows,
            event_seq=result.event.seq if result.event else None, receipt=receipt)

    def handle_decide(self, body: bytes, path: str = DECIDE_PATH) -> tuple[int, dict]:
        """POST /ssgov/v1/decide — evaluate a request without executing anything."""
        envelope = self._read_envelope(body, path)
        try:
            self._authenticate(envelope, path)
        except (UnknownKeyId, ExpiredKey, SignatureInvalid, NonceReplay, MissingField) as exc:
            return 200, self._respond(path, envelope, exc.code, error=exc.detail)

        try:
            payload = json.loads(envelope["command_text"])
            subject = payload["subject"]
            request_kind = payload["request_kind"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            return 200, self._respond(path, envelope, "MALFORMED_REQUEST",
                                      error=f"bad evaluate-request: {exc}")

        at = parse_rfc3339(payload.get("at") or envelope["at"])
        tags = frozenset(payload.get("jurisdiction_tags")
                         or self.config.default_jurisdiction_tags or {"default"})
        params = dict(payload.get("params") or {})
        params.setdefault("requester", envelope["requester"])
        ctx = make_context(at, tags, request_kind, params)
        view = self.store.view()
        try:
            decision = evaluate(self.frames, view, subject, ctx)
        except SsgovError as exc:
            return 200, self._respond(path, envelope, exc.code, error=exc.detail)

        receipt_id = derive_receipt_id(attest.envelope_digest(envelope),
                                       decision.digest(), view.digest)
        self.audit.record(receipt_id, decision, sha256_hex(
            envelope["command_text"].encode("utf-8")))
        receipt = issue_receipt(envelope, decision, self.server_key,
                                receipt_id=receipt_id)
        return 200, self._respond(path, envelope, "OK", decision=decision,
                                  receipt=receipt)

    # -- gazette --------------------------------------------------------------------------

    def gazette_document(self) -> dict:
        """Machine-readable list of everything in force; served unauthenticated."""
        frame_versions = sorted(f"{f.frame_id}@{f.version}" for f in self.frames)
        effective = (min(to_rfc3339(f.valid_from) for f in self.frames)
                     if self.frames else "1970-01-01T00:00:00Z")
        entries = []
        for name, path in (("command", COMMAND_PATH), ("decide", DECIDE_PATH),
                           ("gazette", GAZETTE_PATH), ("health", HEALTH_PATH)):
            entries.append({
                "name": name, "path": path, "schema_version": SCHEMA_VERSION,
                "grammar_version": GRAMMAR_VERSION, "frame_versions": frame_versions,
                "effective": effective,
            })
        view = self.store.view()
        for event in self.store.events():
            if event.kind == "define":
                rid = event.registry_id
                entries.append({
                    "name": rid, "path": COMMAND_PATH,
                    "schema_version": sha256_hex(canonical_bytes(
                        view.schema(rid).to_dict()))[:12],
                    "grammar_version": GRAMMAR_VERSION,
                    "frame_versions": frame_versions,
                    "effective": to_rfc3339(event.at),
                })
        document = {"entries": entries, "digest": sha256_hex(canonical_bytes(entries)),
                    "server_key_id": self.server_key_id}
        document["signature"] = attest.sign(canonical_bytes(
            {k: document[k] for k in ("entries", "digest", "server_key_id")}),
            self.server_key)
        return document

    def health_document(self) -> dict:
        return {"status": "ok", "seq": self.store.latest_seq()}
