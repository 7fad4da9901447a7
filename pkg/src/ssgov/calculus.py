"""The eligibility calculus: status, bundle, required set, decision.

Governance decisions are recomputed on every request from the constellation
of stored data, never cached or stored themselves:

1. ``select_frame`` picks the rule set in force for the request context;
2. ``compute_status`` derives the subject's status labels from frame + data;
3. ``compute_bundle`` turns statuses (plus data and context, where grant
   conditions demand it) into the bundle of eligibility atoms;
4. ``required_eligibilities`` derives the atoms the request demands;
5. ``decide`` permits iff the required set is contained in the bundle.

All five steps are pure functions over immutable inputs; ``evaluate``
composes them in one logical step and assembles a trace listing every rule
evaluated, in frame declaration order, so that a dispute can be settled by
replaying the trace against the pinned frame digest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .canonical import canonical_bytes, sha256_hex, to_rfc3339
from .conditions import EvalContext, EvalEnv, evaluate_condition
from .errors import NoApplicableRule, SsgovError, UnknownRequestKind
from .frames import Atom, LegalFrame, atoms_to_list, data_kind_parts, select_frame


@dataclass(frozen=True)
class FiredRule:
    stage: str  # frame | status | grant | request | decide
    rule_id: str
    result: bool

    def to_dict(self):
        return {"stage": self.stage, "rule_id": self.rule_id, "result": self.result}


@dataclass(frozen=True)
class Decision:
    permit: bool
    missing_atoms: frozenset
    frame_id: str | None = None
    frame_version: int | None = None
    frame_digest: str | None = None
    fired_rules: tuple[FiredRule, ...] = ()
    statuses: frozenset[str] = frozenset()
    bundle: frozenset = frozenset()
    required: frozenset = frozenset()
    subject: str | None = None
    request_kind: str | None = None
    at: str | None = None
    jurisdiction_tags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.permit != (not self.missing_atoms):
            raise ValueError("permit must hold exactly when missing_atoms is empty")

    def to_dict(self):
        return {
            "permit": self.permit,
            "missing_atoms": atoms_to_list(self.missing_atoms),
            "frame_id": self.frame_id,
            "frame_version": self.frame_version,
            "frame_digest": self.frame_digest,
            "fired_rules": [r.to_dict() for r in self.fired_rules],
            "statuses": sorted(self.statuses),
            "bundle": atoms_to_list(self.bundle),
            "required": atoms_to_list(self.required),
            "subject": self.subject,
            "request_kind": self.request_kind,
            "at": self.at,
            "jurisdiction_tags": sorted(self.jurisdiction_tags),
        }

    def digest(self) -> str:
        return sha256_hex(canonical_bytes(self.to_dict()))


def _annotate(exc: SsgovError, rule_id: str) -> SsgovError:
    exc.detail = f"rule {rule_id}: {exc.detail}"
    exc.args = (exc.detail,)
    return exc


def compute_status(frame: LegalFrame, subject_id: str, view, ctx: EvalContext,
                   trace: list[FiredRule] | None = None) -> frozenset[str]:
    """Labels of exactly the status rules whose condition holds."""
    labels: set[str] = set()
    for rule in frame.status_rules:
        env = EvalEnv(ctx, view, frame.subject_registry, subject_id)
        try:
            result = evaluate_condition(rule.condition, env)
        except SsgovError as exc:
            raise _annotate(exc, rule.rule_id)
        if trace is not None:
            trace.append(FiredRule("status", rule.rule_id, result))
        if result:
            labels.add(rule.status_label)
    return frozenset(labels)


def compute_bundle(frame: LegalFrame, statuses: frozenset[str], subject_id: str,
                   view, ctx: EvalContext,
                   trace: list[FiredRule] | None = None) -> frozenset:
    """Union of the grants of all grant rules whose condition holds.

    Grant conditions see the computed statuses through ``has_status`` leaves
    and may also consult subject data and context (e.g. a fee-payment record
    check), which is why the snapshot and context are inputs here.
    """
    bundle: set[Atom] = set()
    for rule in frame.grant_rules:
        env = EvalEnv(ctx, view, frame.subject_registry, subject_id, statuses=statuses)
        try:
            result = evaluate_condition(rule.condition, env)
        except SsgovError as exc:
            raise _annotate(exc, rule.rule_id)
        if trace is not None:
            trace.append(FiredRule("grant", rule.rule_id, result))
        if result:
            bundle.update(rule.grants)
    return frozenset(bundle)


def _subkinds(frame: LegalFrame, request_kind: str) -> list[str]:
    """Expand a request kind into the rule-level kinds that must govern it.

    Write kinds are gated per touched field: ``write(rc,adr,married_to)``
    expands to ``write(rc,adr)`` and ``write(rc,married_to)``, each of which
    must be governed by at least one rule.
    """
    parts = data_kind_parts(request_kind)
    if parts is None or parts[0] != "write":
        return [request_kind]
    verb, registry, fields = parts
    if not fields:
        raise UnknownRequestKind(f"write kind without fields: {request_kind!r}")
    return [f"write({registry},{f})" for f in fields]


def required_eligibilities(frame: LegalFrame, ctx: EvalContext,
                           trace: list[FiredRule] | None = None) -> frozenset:
    """Atoms demanded by all rules matching the request kind whose context holds.

    Default-deny discipline: a kind no rule governs raises
    ``UnknownRequestKind``; a governed kind whose matching rules all have
    non-holding contexts raises ``NoApplicableRule``. Only explicitly granted
    actions ever proceed.
    """
    required: set[Atom] = set()
    rules = (*frame.request_rules, *frame.access_rules)
    for subkind in _subkinds(frame, ctx.request_kind):
        candidates = [r for r in rules if r.request_kind == subkind]
        if not candidates:
            raise UnknownRequestKind(
                f"no rule in {frame.frame_id}@{frame.version} governs {subkind!r}")
        matched = False
        for rule in candidates:
            env = EvalEnv(ctx)
            try:
                holds = evaluate_condition(rule.context_condition, env)
            except SsgovError as exc:
                raise _annotate(exc, rule.rule_id)
            if trace is not None:
                trace.append(FiredRule("request", rule.rule_id, holds))
            if holds:
                matched = True
                required.update(rule.requires)
        if not matched:
            raise NoApplicableRule(
                f"no context condition holds for {subkind!r} "
                f"in {frame.frame_id}@{frame.version}")
    return frozenset(required)


def decide(bundle: frozenset, required: frozenset, *,
           frame: LegalFrame | None = None,
           fired_rules: tuple[FiredRule, ...] = (),
           statuses: frozenset[str] = frozenset(),
           subject: str | None = None,
           ctx: EvalContext | None = None) -> Decision:
    """Permit iff the required set is contained in the bundle (non-strict)."""
    missing = frozenset(required) - frozenset(bundle)
    return Decision(
        permit=not missing,
        missing_atoms=missing,
        frame_id=frame.frame_id if frame else None,
        frame_version=frame.version if frame else None,
        frame_digest=frame.digest() if frame else None,
        fired_rules=fired_rules,
        statuses=statuses,
        bundle=frozenset(bundle),
        required=frozenset(required),
        subject=subject,
        request_kind=ctx.request_kind if ctx else None,
        at=to_rfc3339(ctx.time) if ctx else None,
        jurisdiction_tags=tuple(sorted(ctx.jurisdiction_tags)) if ctx else (),
    )


def evaluate(frames, view, subject_id: str, ctx: EvalContext) -> Decision:
    """Frame selection through decision in one logical step.

    Pure: never mutates the view. Errors propagate as typed exceptions; the
    callers that execute effects treat any raised error as a deny, so no
    error path can yield a silent permit.
    """
    trace: list[FiredRule] = []
    frame = select_frame(frames, ctx)
    trace.append(FiredRule("frame", f"{frame.frame_id}@{frame.version}", True))
    statuses = compute_status(frame, subject_id, view, ctx, trace)
    bundle = compute_bundle(frame, statuses, subject_id, view, ctx, trace)
    required = required_eligibilities(frame, ctx, trace)
    trace.append(FiredRule("decide", "containment", required <= bundle))
    return decide(bundle, required, frame=frame, fired_rules=tuple(trace),
                  statuses=statuses, subject=subject_id, ctx=ctx)
