"""Event-sourced registry storage.

Registries hold the subject data that the calculus reads. Every change is an
immutable event in a single append-only, hash-chained log; the live state is
just the fold of that log, which keeps two properties testable:

* replaying the log reproduces the live store digest bit for bit;
* any historic decision can be re-derived from the view ``as_of`` the seq or
  instant it was made at.

Writes are serialized store-wide (single-writer contract) while reads act on
immutable snapshots and may run concurrently with writes and each other.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path

from .canonical import Scalar, canonical_bytes, parse_rfc3339, sha256_hex, to_rfc3339
from .conditions import Condition, EvalContext, EvalEnv, FieldRef, evaluate_condition
from .errors import (
    DigestMismatch,
    DuplicateRegistry,
    FutureSeq,
    GapDetected,
    InvalidSchema,
    SchemaViolation,
    StaleBefore,
    UnknownField,
    UnknownKey,
    UnknownRegistry,
)

FIELD_TYPES = ("string", "integer", "date", "national-id", "boolean")

# Parameter names injected by request mapping; field names must not shadow them.
RESERVED_FIELD_NAMES = frozenset({"requester", "companion", "key", "registry"})

_NAME_RE = re.compile(r"^[a-z_][a-z0-9_]*$")

GENESIS_RECEIPT = "genesis"


@dataclass(frozen=True)
class FieldDef:
    name: str
    type: str
    nullable: bool = True

    def to_dict(self):
        return {"name": self.name, "type": self.type, "nullable": self.nullable}


@dataclass(frozen=True)
class RegistrySchema:
    registry_id: str
    fields: tuple[FieldDef, ...]
    key_field: str

    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def field(self, name: str) -> FieldDef:
        for f in self.fields:
            if f.name == name:
                return f
        raise UnknownField(f"{self.registry_id}.{name}")

    def to_dict(self):
        return {
            "registry_id": self.registry_id,
            "fields": [f.to_dict() for f in self.fields],
            "key_field": self.key_field,
        }

    @staticmethod
    def from_dict(doc) -> "RegistrySchema":
        return RegistrySchema(
            registry_id=doc["registry_id"],
            fields=tuple(FieldDef(f["name"], f["type"], bool(f.get("nullable", True)))
                         for f in doc["fields"]),
            key_field=doc["key_field"],
        )


def schema(registry_id: str, key_field: str, *fields) -> RegistrySchema:
    """Shorthand: fields as (name, type) or (name, type, nullable) tuples."""
    defs = []
    for spec in fields:
        name, ftype = spec[0], spec[1]
        nullable = spec[2] if len(spec) > 2 else True
        defs.append(FieldDef(name, ftype, nullable))
    return RegistrySchema(registry_id, tuple(defs), key_field)


def validate_schema(s: RegistrySchema) -> None:
    if not _NAME_RE.match(s.registry_id):
        raise InvalidSchema(f"bad registry id {s.registry_id!r}")
    names = [f.name for f in s.fields]
    if len(set(names)) != len(names):
        raise InvalidSchema(f"{s.registry_id}: duplicate field names")
    for f in s.fields:
        if not _NAME_RE.match(f.name):
            raise InvalidSchema(f"{s.registry_id}: bad field name {f.name!r}")
        if f.name in RESERVED_FIELD_NAMES:
            raise InvalidSchema(f"{s.registry_id}: field name {f.name!r} is reserved")
        if f.type not in FIELD_TYPES:
            raise InvalidSchema(f"{s.registry_id}.{f.name}: unknown type {f.type!r}")
    if s.key_field not in names:
        raise InvalidSchema(f"{s.registry_id}: key field {s.key_field!r} not declared")
    key = s.field(s.key_field)
    if key.type != "national-id" or key.nullable:
        raise InvalidSchema(f"{s.registry_id}: key field must be a non-nullable national-id")


def _check_value(s: RegistrySchema, f: FieldDef, value: Scalar) -> None:
    if value is None:
        if not f.nullable:
            raise SchemaViolation(f"{s.registry_id}.{f.name}: null not allowed")
        return
    if f.type in ("string", "national-id"):
        if not isinstance(value, str):
            raise SchemaViolation(f"{s.registry_id}.{f.name}: expected string")
        if f.type == "national-id" and not value:
            raise SchemaViolation(f"{s.registry_id}.{f.name}: empty national-id")
    elif f.type == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaViolation(f"{s.registry_id}.{f.name}: expected integer")
    elif f.type == "boolean":
        if not isinstance(value, bool):
            raise SchemaViolation(f"{s.registry_id}.{f.name}: expected boolean")
    elif f.type == "date":
        if not isinstance(value, str):
            raise SchemaViolation(f"{s.registry_id}.{f.name}: expected ISO date")
        try:
            date.fromisoformat(value)
        except ValueError as exc:
            raise SchemaViolation(f"{s.registry_id}.{f.name}: {exc}") from exc


@dataclass(frozen=True)
class WriteEvent:
    seq: int
    at: datetime
    kind: str  # define | insert | update | delete
    registry_id: str
    key: str
    before: tuple[tuple[str, Scalar], ...] | None
    after: tuple[tuple[str, Scalar], ...] | None
    requester: str
    receipt_id: str
    command_digest: str
    prev: str  # sha256 of the previous log record ("" for seq 1)

    def body_dict(self):
        return {
            "seq": self.seq,
            "at": to_rfc3339(self.at),
            "kind": self.kind,
            "registry_id": self.registry_id,
            "key": self.key,
            "before": dict(self.before) if self.before is not None else None,
            "after": dict(self.after) if self.after is not None else None,
            "requester": self.requester,
            "receipt_id": self.receipt_id,
            "command_digest": self.command_digest,
            "prev": self.prev,
        }

    def record_digest(self) -> str:
        return sha256_hex(canonical_bytes(self.body_dict()))

    @staticmethod
    def from_dict(doc) -> "WriteEvent":
        return WriteEvent(
            seq=int(doc["seq"]),
            at=parse_rfc3339(doc["at"]),
            kind=doc["kind"],
            registry_id=doc["registry_id"],
            key=doc["key"],
            before=tuple(sorted(doc["before"].items())) if doc["before"] is not None else None,
            after=tuple(sorted(doc["after"].items())) if doc["after"] is not None else None,
            requester=doc["requester"],
            receipt_id=doc["receipt_id"],
            command_digest=doc["command_digest"],
            prev=doc["prev"],
        )


class StoreView:
    """Immutable point-in-time snapshot of all registries."""

    def __init__(self, schemas: dict[str, RegistrySchema],
                 rows: dict[str, dict[str, dict[str, Scalar]]], seq: int):
        self._schemas = dict(schemas)
        self._rows = {rid: {k: dict(v) for k, v in table.items()}
                      for rid, table in rows.items()}
        self.seq = seq
        self._digest: str | None = None

    def registries(self) -> tuple[str, ...]:
        return tuple(sorted(self._schemas))

    def has_registry(self, registry_id: str) -> bool:
        return registry_id in self._schemas

    def schema(self, registry_id: str) -> RegistrySchema:
        try:
            return self._schemas[registry_id]
        except KeyError:
            raise UnknownRegistry(registry_id) from None

    def rows(self, registry_id: str) -> dict[str, dict[str, Scalar]]:
        if registry_id not in self._schemas:
            raise UnknownRegistry(registry_id)
        return self._rows.get(registry_id, {})

    def row(self, registry_id: str, key: str) -> dict[str, Scalar] | None:
        found = self.rows(registry_id).get(key)
        return dict(found) if found is not None else None

    def dump(self):
        return {
            "registries": {
                rid: {
                    "schema": self._schemas[rid].to_dict(),
                    "rows": {k: dict(v) for k, v in sorted(self._rows.get(rid, {}).items())},
                }
                for rid in sorted(self._schemas)
            }
        }

    @property
    def digest(self) -> str:
        if self._digest is None:
            self._digest = sha256_hex(canonical_bytes(self.dump()))
        return self._digest


def query(registry_id: str, selection: Condition, projection, view: StoreView,
          ctx: EvalContext | None = None) -> list[dict[str, Scalar]]:
    """Rows of the view satisfying the selection, projected, ordered by key.

    The selection is a condition over the registry's own fields (``row.*``
    references); an always-true selection is ``And(())``.
    """
    s = view.schema(registry_id)
    names = s.field_names()
    for fname in projection:
        if fname not in names:
            raise UnknownField(f"{registry_id}.{fname}")
    _check_selection_refs(selection, names, registry_id)
    if ctx is None:
        ctx = EvalContext(datetime.fromtimestamp(0, tz=timezone.utc), frozenset({"query"}))
    out = []
    for key in sorted(view.rows(registry_id)):
        env = EvalEnv(ctx, view, row=dict(view.rows(registry_id)[key]),
                      row_registry=registry_id)
        if evaluate_condition(selection, env):
            row = view.rows(registry_id)[key]
            out.append({fname: row.get(fname) for fname in projection})
    return out


def _check_selection_refs(cond: Condition, names, registry_id: str, _depth: int = 0):
    from .conditions import And, Cmp, Exists, Not, Or

    if _depth > 64:
        raise SchemaViolation("selection nesting exceeds supported depth")
    if isinstance(cond, (And, Or)):
        for a in cond.args:
            _check_selection_refs(a, names, registry_id, _depth + 1)
    elif isinstance(cond, Not):
        _check_selection_refs(cond.arg, names, registry_id, _depth + 1)
    elif isinstance(cond, Exists):
        pass  # inner filter is checked against its own registry during eval
    elif isinstance(cond, Cmp):
        for ref in (cond.lhs, cond.rhs):
            if isinstance(ref, FieldRef) and ref.scope == "row" and ref.name not in names:
                raise UnknownField(f"{registry_id}.{ref.name}")


class RegistryStore:
    """Append-only store; optionally persisted as newline-delimited canonical JSON."""

    def __init__(self, log_path: str | Path | None = None):
        self._lock = threading.RLock()
        self._events: list[WriteEvent] = []
        self._schemas: dict[str, RegistrySchema] = {}
        self._rows: dict[str, dict[str, dict[str, Scalar]]] = {}
        self._log_path = Path(log_path) if log_path else None
        if self._log_path and self._log_path.exists():
            for event in read_event_log(self._log_path):
                self._apply_to_state(event)
                self._events.append(event)

    # -- snapshots ------------------------------------------------------------

    def view(self) -> StoreView:
        with self._lock:
            return StoreView(self._schemas, self._rows, len(self._events))

    def as_of(self, target: int | datetime) -> StoreView:
        """View reflecting all events with seq (or instant) <= target.

        Instant-based targets take the longest log prefix whose event times
        do not exceed the instant (event times are non-decreasing under the
        single-writer contract).
        """
        with self._lock:
            events = list(self._events)
        if isinstance(target, datetime):
            selected = []
            for e in events:
                if e.at > target:
                    break
                selected.append(e)
        else:
            if target > len(events):
                raise FutureSeq(f"seq {target} is beyond latest {len(events)}")
            if target < 0:
                raise FutureSeq(f"seq {target} is negative")
            selected = events[:target]
        return fold_events(selected)

    def events(self) -> tuple[WriteEvent, ...]:
        with self._lock:
            return tuple(self._events)

    def latest_seq(self) -> int:
        with self._lock:
            return len(self._events)

    def exclusive(self):
        """Context manager honoring the single-writer contract across
        evaluate-then-write sequences."""
        return self._lock

    # -- mutation ---------------------------------------------------------------

    def define_registry(self, s: RegistrySchema, *, requester: str, at: datetime,
                        receipt_id: str = GENESIS_RECEIPT,
                        command_digest: str = "") -> WriteEvent:
        with self._lock:
            validate_schema(s)
            if s.registry_id in self._schemas:
                raise DuplicateRegistry(s.registry_id)
            event = self._append(
                kind="define", registry_id=s.registry_id, key="", at=at,
                before=None, after=tuple(sorted({"schema": json.dumps(
                    s.to_dict(), sort_keys=True)}.items())),
                requester=requester, receipt_id=receipt_id, command_digest=command_digest)
            return event

    def apply_write(self, kind: str, registry_id: str, key: str,
                    after: dict[str, Scalar] | None, *, requester: str, at: datetime,
                    receipt_id: str, command_digest: str = "",
                    expected_before: dict[str, Scalar] | None = None) -> WriteEvent:
        """Append an insert/update/delete event.

        Callers must have obtained a permit decision first; the command gate
        enforces that. ``expected_before`` supports optimistic concurrency:
        a mismatch with the current row raises ``StaleBefore``.
        """
        with self._lock:
            if registry_id not in self._schemas:
                raise UnknownRegistry(registry_id)
            s = self._schemas[registry_id]
            current = self._rows.get(registry_id, {}).get(key)
            if expected_before is not None and current != expected_before:
                raise StaleBefore(f"{registry_id}[{key}]: before-image mismatch")

            if kind == "insert":
                if current is not None:
                    raise SchemaViolation(f"{registry_id}[{key}]: key already present")
                if after is None:
                    raise SchemaViolation("insert requires values")
                values = self._conform(s, after, key)
                return self._append(kind="insert", registry_id=registry_id, key=key,
                                    at=at, before=None,
                                    after=tuple(sorted(values.items())),
                                    requester=requester, receipt_id=receipt_id,
                                    command_digest=command_digest)
            if kind == "update":
                if current is None:
                    raise UnknownKey(f"{registry_id}[{key}]")
                if after is None:
                    raise SchemaViolation("update requires values")
                merged = dict(current)
                for name, value in after.items():
                    if name == s.key_field and value != key:
                        raise SchemaViolation(f"{registry_id}: key field is immutable")
                    merged[name] = value
                values = self._conform(s, merged, key)
                return self._append(kind="update", registry_id=registry_id, key=key,
                                    at=at, before=tuple(sorted(current.items())),
                                    after=tuple(sorted(values.items())),
                                    requester=requester, receipt_id=receipt_id,
                                    command_digest=command_digest)
            if kind == "delete":
                if current is None:
                    raise UnknownKey(f"{registry_id}[{key}]")
                return self._append(kind="delete", registry_id=registry_id, key=key,
                                    at=at, before=tuple(sorted(current.items())),
                                    after=None, requester=requester,
                                    receipt_id=receipt_id, command_digest=command_digest)
            raise SchemaViolation(f"unknown write kind {kind!r}")

    def _conform(self, s: RegistrySchema, values: dict[str, Scalar], key: str) -> dict:
        names = s.field_names()
        for name in values:
            if name not in names:
                raise SchemaViolation(f"{s.registry_id}: unknown field {name!r}")
        full = {name: values.get(name) for name in names}
        if full.get(s.key_field) is None:
            full[s.key_field] = key
        if full[s.key_field] != key:
            raise SchemaViolation(
                f"{s.registry_id}: key field value {full[s.key_field]!r} "
                f"disagrees with key {key!r}")
        for f in s.fields:
            _check_value(s, f, full[f.name])
        return full

    def _append(self, **kw) -> WriteEvent:
        prev = self._events[-1].record_digest() if self._events else ""
        event = WriteEvent(seq=len(self._events) + 1, prev=prev, **kw)
        self._apply_to_state(event)
        self._events.append(event)
        if self._log_path:
            with open(self._log_path, "a", encoding="utf-8") as fh:
                fh.write(canonical_bytes(event.body_dict()).decode("utf-8") + "\n")
        return event

    def _apply_to_state(self, event: WriteEvent) -> None:
        if event.kind == "define":
            s = RegistrySchema.from_dict(json.loads(dict(event.after)["schema"]))
            self._schemas[s.registry_id] = s
            self._rows.setdefault(s.registry_id, {})
        elif event.kind == "insert":
            self._rows[event.registry_id][event.key] = dict(event.after)
        elif event.kind == "update":
            self._rows[event.registry_id][event.key] = dict(event.after)
        elif event.kind == "delete":
            del self._rows[event.registry_id][event.key]
        else:
            raise SchemaViolation(f"unknown event kind {event.kind!r}")

    # -- persistence ---------------------------------------------------------------

    def snapshot(self, directory: str | Path) -> Path:
        """Write a canonical dump plus digest file; returns the dump path."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        view = self.view()
        dump_path = directory / f"snapshot-{view.seq:08d}.json"
        payload = canonical_bytes({"seq": view.seq, "store": view.dump()})
        dump_path.write_bytes(payload + b"\n")
        (directory / f"snapshot-{view.seq:08d}.digest").write_text(
            sha256_hex(payload) + "\n", encoding="utf-8")
        return dump_path


def fold_events(events) -> StoreView:
    store = RegistryStore()
    for event in events:
        store._apply_to_state(event)
        store._events.append(event)
    return store.view()


def replay(events) -> StoreView:
    """Rebuild a view from a log, verifying seq gaplessness and the hash chain."""
    expected_prev = ""
    for position, event in enumerate(events, start=1):
        if event.seq != position:
            raise GapDetected(f"expected seq {position}, found {event.seq}")
        if event.prev != expected_prev:
            raise DigestMismatch(f"hash chain broken at seq {event.seq}")
        expected_prev = event.record_digest()
    return fold_events(events)


def read_event_log(path: str | Path) -> list[WriteEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(WriteEvent.from_dict(json.loads(line)))
    # Loading an on-disk log always verifies the chain.
    expected_prev = ""
    for position, event in enumerate(events, start=1):
        if event.seq != position:
            raise GapDetected(f"{path}: expected seq {position}, found {event.seq}")
        if event.prev != expected_prev:
            raise DigestMismatch(f"{path}: hash chain broken at seq {event.seq}")
        expected_prev = event.record_digest()
    return events
