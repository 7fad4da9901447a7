"""Command gating: evaluate first, execute only on permit.

Every read or write command is mapped to a gated request and run through the
full eligibility calculus against the same snapshot the command will execute
against. On deny (or any error) the store digest is untouched; on permit,
reads query the snapshot and writes append exactly one event whose receipt id
is recorded — together with the decision — in the audit log, so a log scan
can prove that every write traces back to a permit.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .calculus import Decision, evaluate
from .canonical import Scalar, canonical_bytes, sha256_hex
from .commands import CommandAst, Insert, Read, Update, map_to_request
from .conditions import EvalContext
from .store import RegistryStore, WriteEvent, query


@dataclass(frozen=True)
class CommandResult:
    decision: Decision
    rows: list[dict[str, Scalar]] | None = None
    event: WriteEvent | None = None
    receipt_id: str | None = None


class AuditLog:
    """Append-only record of every gate decision, keyed by receipt id."""

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.Lock()
        self._records: list[dict] = []
        self._by_receipt: dict[str, dict] = {}
        self._path = Path(path) if path else None
        if self._path and self._path.exists():
            with open(self._path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        record = json.loads(line)
                        self._records.append(record)
                        self._by_receipt[record["receipt_id"]] = record

    def record(self, receipt_id: str, decision: Decision, command_digest: str) -> None:
        entry = {
            "receipt_id": receipt_id,
            "permit": decision.permit,
            "decision_digest": decision.digest(),
            "command_digest": command_digest,
            "at": decision.at,
        }
        with self._lock:
            self._records.append(entry)
            self._by_receipt[receipt_id] = entry
            if self._path:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(canonical_bytes(entry).decode("utf-8") + "\n")

    def lookup(self, receipt_id: str) -> dict | None:
        with self._lock:
            return self._by_receipt.get(receipt_id)

    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)


def derive_receipt_id(request_digest: str, decision_digest: str, anchor: str) -> str:
    """Deterministic receipt id: identical requests answered over identical
    state yield identical receipts."""
    return sha256_hex(f"receipt:{request_digest}:{decision_digest}:{anchor}".encode())[:32]


def gate_and_execute(ast: CommandAst, requester: str, frames, store: RegistryStore,
                     ctx: EvalContext, *, audit: AuditLog | None = None,
                     request_digest: str | None = None) -> CommandResult:
    """Gate a parsed command through the calculus and execute it if permitted.

    Reads evaluate and query one snapshot. Write commands hold the store's
    writer lock across evaluate-then-append so the permitting constellation
    cannot be changed by a concurrent write in between. Calculus and store
    errors propagate to the caller; nothing is written on any non-permit
    path.
    """
    is_read = isinstance(ast.command, Read)
    request_digest = request_digest or ast.digest

    def run() -> CommandResult:
        view = store.view()
        key_field = None
        if view.has_registry(ast.registry):
            key_field = view.schema(ast.registry).key_field
        spec = map_to_request(ast, requester, key_field)
        gated_ctx = ctx.with_request(spec.request_kind, spec.params_dict())
        decision = evaluate(frames, view, requester, gated_ctx)

        anchor = str(view.seq + 1) if (decision.permit and not is_read) else view.digest
        receipt_id = derive_receipt_id(request_digest, decision.digest(), anchor)
        if audit is not None:
            audit.record(receipt_id, decision, ast.digest)
        if not decision.permit:
            return CommandResult(decision, receipt_id=receipt_id)

        if is_read:
            rows = query(ast.registry, ast.command.selection,
                         list(ast.command.projection), view, gated_ctx)
            return CommandResult(decision, rows=rows, receipt_id=receipt_id)

        command = ast.command
        if isinstance(command, Insert):
            values = dict(command.values)
            key = str(values.get(key_field) or "") if key_field else ""
            kind, after = "insert", values
        elif isinstance(command, Update):
            kind, key, after = "update", str(command.key), dict(command.updates)
        else:
            kind, key, after = "delete", str(command.key), None
        event = store.apply_write(kind, ast.registry, key, after,
                                  requester=requester, at=ctx.time,
                                  receipt_id=receipt_id, command_digest=ast.digest)
        return CommandResult(decision, event=event, receipt_id=receipt_id)

    if is_read:
        return run()
    with store.exclusive():
        return run()
