"""Subscription-driven change detection over registries and decisions.

A subscription stores either a read command (``query-diff``) or an
evaluation request (``decision-watch``). Cycles are polls: each run
re-executes the stored payload against the store as of the cycle instant and
emits a signed change notice exactly when the result digest moved. Nothing
pushes on write — the paper's daily-query service pattern — which keeps the
store interface minimal and the notice stream reproducible.

Owner eligibility is re-checked every cycle: a subscription whose owner has
lost read eligibility stops emitting payload contents and announces the
lapse once.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .attest import canonicalize, key_id_for, sign
from .calculus import evaluate
from .canonical import Scalar, canonical_bytes, sha256_hex, to_rfc3339
from .commands import Read, map_to_request, parse
from .conditions import EvalContext, make_context
from .errors import DeniedPayload, SsgovError
from .store import RegistryStore, query

QUERY_DIFF = "query-diff"
DECISION_WATCH = "decision-watch"

MIN_SCHEDULE_SECONDS = 1
DEFAULT_SCHEDULE_SECONDS = 24 * 3600

NOTICE_FIELDS = ("sub_id", "kind", "at", "before", "after", "delta", "server_key_id")


@dataclass(frozen=True)
class Subscription:
    sub_id: str
    owner: str
    kind: str  # query-diff | decision-watch
    payload: dict  # {"command_text": ...} or evaluate-request fields
    schedule_seconds: int = DEFAULT_SCHEDULE_SECONDS


@dataclass
class _SubState:
    sub: Subscription
    last_digest: str | None = None
    last_run: datetime | None = None
    lapsed: bool = False
    last_permit: bool | None = None


class Notifier:
    """Owns the subscription table and the notice outbox."""

    def __init__(self, store: RegistryStore, frames, server_key,
                 default_tags: frozenset[str], outbox_path: str | Path | None = None,
                 sink=None):
        self._store = store
        self._frames = list(frames)
        self._key = server_key
        self._key_id = key_id_for(server_key.public_key())
        self._tags = frozenset(default_tags)
        self._lock = threading.Lock()
        self._subs: dict[str, _SubState] = {}
        self._counter = 0
        self._outbox_path = Path(outbox_path) if outbox_path else None
        self._outbox: list[dict] = []
        self._sink = sink  # optional callable(notice_dict), e.g. a webhook post

    # -- subscription ----------------------------------------------------------

    def subscribe(self, owner: str, kind: str, payload: dict,
                  schedule_seconds: int = DEFAULT_SCHEDULE_SECONDS,
                  now: datetime | None = None) -> str:
        """Store a subscription after gate-checking the payload as the owner.

        The first cycle establishes the baseline and emits nothing.
        """
        if kind not in (QUERY_DIFF, DECISION_WATCH):
            raise DeniedPayload(f"unknown subscription kind {kind!r}")
        if schedule_seconds < MIN_SCHEDULE_SECONDS:
            raise DeniedPayload("schedule below 1 second")
        now = now or datetime.now(tz=timezone.utc)

        if kind == QUERY_DIFF:
            decision, _ = self._run_query(owner, payload, now)
            if not decision.permit:
                raise DeniedPayload(
                    f"owner lacks read permit: missing "
                    f"{sorted(str(a) for a in decision.missing_atoms)}")
        else:
            subject = payload.get("subject")
            if subject != owner:
                raise DeniedPayload("decision-watch subscriptions cover the owner only")

        with self._lock:
            self._counter += 1
            sub_id = f"sub-{self._counter:04d}"
            sub = Subscription(sub_id, owner, kind, dict(payload), schedule_seconds)
            self._subs[sub_id] = _SubState(sub)
        return sub_id

    def subscriptions(self) -> tuple[Subscription, ...]:
        with self._lock:
            return tuple(state.sub for state in self._subs.values())

    # -- cycles -------------------------------------------------------------------

    def run_cycle(self, now: datetime) -> list[dict]:
        """Re-evaluate every due subscription against ``as_of(now)``.

        Per-subscription failures isolate: one broken payload never blocks
        the others; it is reported as a notice of kind ``error``.
        """
        notices: list[dict] = []
        with self._lock:
            due = [state for state in self._subs.values()
                   if state.last_run is None
                   or (now - state.last_run) >= timedelta(seconds=state.sub.schedule_seconds)]
        for state in due:
            try:
                notice = self._run_one(state, now)
            except SsgovError as exc:
                notice = self._emit(state, now, "error", state.last_digest or "",
                                    state.last_digest or "", f"{exc.code}: {exc.detail}")
            state.last_run = now
            if notice is not None:
                notices.append(notice)
        return notices

    def _run_one(self, state: _SubState, now: datetime) -> dict | None:
        sub = state.sub
        if sub.kind == QUERY_DIFF:
            decision, rows = self._run_query(sub.owner, sub.payload, now)
            if not decision.permit:
                if state.lapsed:
                    return None
                state.lapsed = True
                return self._emit(state, now, "permission-lapsed",
                                  state.last_digest or "", state.last_digest or "",
                                  "read eligibility lapsed; payload suppressed")
            state.lapsed = False
            digest = sha256_hex(canonical_bytes(rows))
            delta = f"result changed ({len(rows)} rows)"
        else:
            decision = self._run_decision(sub.payload, now)
            digest = decision.digest()
            if state.last_permit is None or state.last_permit == decision.permit:
                delta = f"decision changed for {sub.payload.get('request_kind')}"
            elif decision.permit:
                delta = f"permission granted: {sub.payload.get('request_kind')}"
            else:
                delta = f"permission cancelled: {sub.payload.get('request_kind')}"
            state.last_permit = decision.permit

        if state.last_digest is None:
            state.last_digest = digest  # baseline cycle, nothing to report
            return None
        if digest == state.last_digest:
            return None
        before, state.last_digest = state.last_digest, digest
        return self._emit(state, now, "change", before, digest, delta)

    # -- payload execution -----------------------------------------------------------

    def _run_query(self, owner: str, payload: dict, now: datetime):
        ast = parse(payload["command_text"])
        if not isinstance(ast.command, Read):
            raise DeniedPayload("query-diff payloads must be READ commands")
        view = self._store.as_of(now)
        key_field = (view.schema(ast.registry).key_field
                     if view.has_registry(ast.registry) else None)
        spec = map_to_request(ast, owner, key_field)
        tags = frozenset(payload.get("jurisdiction_tags") or self._tags)
        ctx = make_context(now, tags, spec.request_kind, spec.params_dict())
        decision = evaluate(self._frames, view, owner, ctx)
        rows = None
        if decision.permit:
            rows = query(ast.registry, ast.command.selection,
                         list(ast.command.projection), view, ctx)
        return decision, rows

    def _run_decision(self, payload: dict, now: datetime):
        tags = frozenset(payload.get("jurisdiction_tags") or self._tags)
        params = {k: v for k, v in (payload.get("params") or {}).items()}
        ctx = make_context(now, tags, payload["request_kind"], params)
        view = self._store.as_of(now)
        return evaluate(self._frames, view, payload["subject"], ctx)

    # -- notices -------------------------------------------------------------------------

    def _emit(self, state: _SubState, now: datetime, kind: str, before: str,
              after: str, delta: str) -> dict:
        notice = {
            "sub_id": state.sub.sub_id,
            "kind": kind,
            "at": to_rfc3339(now),
            "before": before,
            "after": after,
            "delta": delta,
            "server_key_id": self._key_id,
        }
        notice["signature"] = sign(canonicalize(notice, NOTICE_FIELDS), self._key)
        with self._lock:
            self._outbox.append(notice)
            if self._outbox_path:
                with open(self._outbox_path, "a", encoding="utf-8") as fh:
                    fh.write(canonical_bytes(notice).decode("utf-8") + "\n")
        if self._sink is not None:
            try:
                self._sink(notice)
            except Exception:
                pass  # delivery is best-effort; the outbox is the contract
        return notice

    def outbox(self) -> list[dict]:
        with self._lock:
            return list(self._outbox)
