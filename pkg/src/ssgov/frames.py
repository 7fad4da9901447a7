"""Legal frames: versioned, jurisdiction- and time-scoped rule sets.

A frame carries four rule families, evaluated strictly in declaration order:

* status rules — labels a subject holds when their condition is true;
* grant rules — eligibility atoms added to the subject's bundle when the
  grant condition (over statuses, subject data and context) holds;
* request rules — eligibility atoms a non-data request kind demands;
* access rules — the same, for data request kinds (``read(reg)``,
  ``write(reg,field)``, ``insert(reg)``, ``delete(reg)``); gating for writes
  is per touched field.

Frames are exchanged as canonical JSON documents, one frame per document;
the frame digest is the SHA-256 of those canonical bytes and is embedded in
every decision trace so that any third party can pin which text of the law a
decision was computed under.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime

from .canonical import Scalar, canonical_bytes, parse_rfc3339, sha256_hex, to_rfc3339
from .conditions import (
    Condition,
    EvalContext,
    condition_from_dict,
    condition_to_dict,
    validate_condition,
)
from .errors import AmbiguousFrame, InvalidFrame, NoApplicableFrame

_DATA_KIND_RE = re.compile(r"^(read|insert|delete)\(([a-z_][a-z0-9_]*)\)$"
                           r"|^write\(([a-z_][a-z0-9_]*),([a-z0-9_,]+)\)$")
_PLAIN_KIND_RE = re.compile(r"^[a-z_][a-z0-9_]*$")


@dataclass(frozen=True, order=True)
class Atom:
    """A ground eligibility token: a name plus sorted scalar parameters."""

    name: str
    params: tuple[tuple[str, Scalar], ...] = ()

    def __str__(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={v!r}" for k, v in self.params)
        return f"{self.name}({inner})"

    def to_dict(self):
        if not self.params:
            return {"name": self.name}
        return {"name": self.name, "params": dict(self.params)}

    @staticmethod
    def from_dict(doc) -> "Atom":
        if isinstance(doc, str):
            return Atom(doc)
        params = tuple(sorted((doc.get("params") or {}).items()))
        return Atom(doc["name"], params)


def atom(name: str, **params: Scalar) -> Atom:
    return Atom(name, tuple(sorted(params.items())))


Bundle = frozenset  # of Atom
RequiredSet = frozenset  # of Atom


def atoms_to_list(atoms) -> list:
    return [a.to_dict() for a in sorted(atoms)]


@dataclass(frozen=True)
class StatusRule:
    rule_id: str
    status_label: str
    condition: Condition


@dataclass(frozen=True)
class GrantRule:
    rule_id: str
    condition: Condition  # may contain has_status leaves
    grants: frozenset


@dataclass(frozen=True)
class RequestRule:
    rule_id: str
    request_kind: str
    context_condition: Condition
    requires: frozenset


@dataclass(frozen=True)
class LegalFrame:
    frame_id: str
    community_id: str
    version: int
    valid_from: datetime
    valid_to: datetime  # half-open: valid_from <= t < valid_to
    jurisdiction_tags: frozenset[str]
    priority: int
    subject_registry: str
    atom_vocabulary: frozenset[str]
    request_vocabulary: frozenset[str]
    status_rules: tuple[StatusRule, ...] = ()
    grant_rules: tuple[GrantRule, ...] = ()
    request_rules: tuple[RequestRule, ...] = ()
    access_rules: tuple[RequestRule, ...] = ()

    def to_dict(self):
        return {
            "frame_id": self.frame_id,
            "community_id": self.community_id,
            "version": self.version,
            "valid_from": to_rfc3339(self.valid_from),
            "valid_to": to_rfc3339(self.valid_to),
            "jurisdiction_tags": sorted(self.jurisdiction_tags),
            "priority": self.priority,
            "subject_registry": self.subject_registry,
            "atom_vocabulary": sorted(self.atom_vocabulary),
            "request_vocabulary": sorted(self.request_vocabulary),
            "status_rules": [
                {"rule_id": r.rule_id, "status_label": r.status_label,
                 "condition": condition_to_dict(r.condition)}
                for r in self.status_rules
            ],
            "grant_rules": [
                {"rule_id": r.rule_id, "condition": condition_to_dict(r.condition),
                 "grants": atoms_to_list(r.grants)}
                for r in self.grant_rules
            ],
            "request_rules": [
                {"rule_id": r.rule_id, "request_kind": r.request_kind,
                 "context_condition": condition_to_dict(r.context_condition),
                 "requires": atoms_to_list(r.requires)}
                for r in self.request_rules
            ],
            "access_rules": [
                {"rule_id": r.rule_id, "request_kind": r.request_kind,
                 "context_condition": condition_to_dict(r.context_condition),
                 "requires": atoms_to_list(r.requires)}
                for r in self.access_rules
            ],
        }

    def canonical(self) -> bytes:
        return canonical_bytes(self.to_dict())

    def digest(self) -> str:
        return sha256_hex(self.canonical())

    def applies_to(self, ctx: EvalContext) -> bool:
        return (self.valid_from <= ctx.time < self.valid_to
                and bool(self.jurisdiction_tags & ctx.jurisdiction_tags))


def _parse_request_rule(doc) -> RequestRule:
    return RequestRule(
        rule_id=doc["rule_id"],
        request_kind=doc["request_kind"],
        context_condition=condition_from_dict(doc["context_condition"]),
        requires=frozenset(Atom.from_dict(a) for a in doc["requires"]),
    )


def frame_from_dict(doc) -> LegalFrame:
    try:
        frame = LegalFrame(
            frame_id=doc["frame_id"],
            community_id=doc["community_id"],
            version=int(doc["version"]),
            valid_from=parse_rfc3339(doc["valid_from"]),
            valid_to=parse_rfc3339(doc["valid_to"]),
            jurisdiction_tags=frozenset(doc["jurisdiction_tags"]),
            priority=int(doc["priority"]),
            subject_registry=doc["subject_registry"],
            atom_vocabulary=frozenset(doc.get("atom_vocabulary", ())),
            request_vocabulary=frozenset(doc.get("request_vocabulary", ())),
            status_rules=tuple(
                StatusRule(r["rule_id"], r["status_label"], condition_from_dict(r["condition"]))
                for r in doc.get("status_rules", ())
            ),
            grant_rules=tuple(
                GrantRule(r["rule_id"], condition_from_dict(r["condition"]),
                          frozenset(Atom.from_dict(a) for a in r["grants"]))
                for r in doc.get("grant_rules", ())
            ),
            request_rules=tuple(_parse_request_rule(r) for r in doc.get("request_rules", ())),
            access_rules=tuple(_parse_request_rule(r) for r in doc.get("access_rules", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidFrame(f"malformed frame document: {exc}") from exc
    return frame


def data_kind_parts(kind: str) -> tuple[str, str, tuple[str, ...]] | None:
    """Split a data request kind into (verb, registry, fields); None if plain."""
    match = _DATA_KIND_RE.match(kind)
    if not match:
        return None
    if match.group(1):
        return match.group(1), match.group(2), ()
    return "write", match.group(3), tuple(match.group(4).split(","))


def validate_frame(frame: LegalFrame, schemas=None) -> None:
    """Check frame invariants; with ``schemas``, also resolve every field ref.

    Raises ``InvalidFrame`` on any defect. Frames must be validated before
    they are offered to ``select_frame``.
    """
    if frame.valid_from >= frame.valid_to:
        raise InvalidFrame(f"{frame.frame_id}: valid_from must precede valid_to")
    if not frame.jurisdiction_tags:
        raise InvalidFrame(f"{frame.frame_id}: jurisdiction_tags must be non-empty")

    seen_ids: set[str] = set()
    for rule in (*frame.status_rules, *frame.grant_rules, *frame.request_rules,
                 *frame.access_rules):
        if rule.rule_id in seen_ids:
            raise InvalidFrame(f"{frame.frame_id}: duplicate rule id {rule.rule_id!r}")
        seen_ids.add(rule.rule_id)

    def check(rule_id, cond, *, allow_has_status=False,
              scopes=("subject", "companion", "context", "row")):
        try:
            validate_condition(cond, schemas=schemas, subject_registry=frame.subject_registry,
                               allowed_scopes=scopes, allow_has_status=allow_has_status)
        except Exception as exc:
            raise InvalidFrame(f"{frame.frame_id}/{rule_id}: {exc}") from exc

    for rule in frame.status_rules:
        check(rule.rule_id, rule.condition)
    for rule in frame.grant_rules:
        if not rule.grants:
            raise InvalidFrame(f"{frame.frame_id}/{rule.rule_id}: grants must be non-empty")
        for granted in rule.grants:
            if granted.name not in frame.atom_vocabulary:
                raise InvalidFrame(
                    f"{frame.frame_id}/{rule.rule_id}: grants undeclared atom {granted.name!r}")
        check(rule.rule_id, rule.condition, allow_has_status=True)

    def check_request_rule(rule: RequestRule, is_access: bool):
        for needed in rule.requires:
            if needed.name not in frame.atom_vocabulary:
                raise InvalidFrame(
                    f"{frame.frame_id}/{rule.rule_id}: requires undeclared atom {needed.name!r}")
        parts = data_kind_parts(rule.request_kind)
        if is_access and parts is None:
            raise InvalidFrame(
                f"{frame.frame_id}/{rule.rule_id}: access rule kind {rule.request_kind!r} "
                "must be read/write/insert/delete form")
        if not is_access and parts is not None:
            raise InvalidFrame(
                f"{frame.frame_id}/{rule.rule_id}: data kinds belong in access_rules")
        if parts is None and not _PLAIN_KIND_RE.match(rule.request_kind):
            raise InvalidFrame(
                f"{frame.frame_id}/{rule.rule_id}: malformed request kind {rule.request_kind!r}")
        if parts is not None and len(parts[2]) > 1:
            raise InvalidFrame(
                f"{frame.frame_id}/{rule.rule_id}: access rules gate one field per rule")
        if rule.request_kind not in frame.request_vocabulary:
            raise InvalidFrame(
                f"{frame.frame_id}/{rule.rule_id}: kind {rule.request_kind!r} "
                "not in request vocabulary")
        # Context conditions must stay data-free: they are matched before the
        # snapshot is consulted, so only context parameters may appear.
        check(rule.rule_id, rule.context_condition, scopes=("context",))

    for rule in frame.request_rules:
        check_request_rule(rule, is_access=False)
    for rule in frame.access_rules:
        check_request_rule(rule, is_access=True)


def validate_frame_set(frames) -> None:
    """Cross-frame invariant: versions strictly increase per frame_id."""
    by_id: dict[str, list[LegalFrame]] = {}
    for frame in frames:
        by_id.setdefault(frame.frame_id, []).append(frame)
    for frame_id, group in by_id.items():
        group.sort(key=lambda f: f.valid_from)
        versions = [f.version for f in group]
        if any(b <= a for a, b in zip(versions, versions[1:])):
            raise InvalidFrame(f"{frame_id}: versions must strictly increase")


def select_frame(frames, ctx: EvalContext) -> LegalFrame:
    """Pick the unique applicable frame of maximal priority.

    Applicable means the validity interval contains ``ctx.time`` and the
    jurisdiction tags intersect. A priority tie between applicable frames is
    an authoring defect and raises ``AmbiguousFrame``; it is never resolved
    heuristically.
    """
    applicable = [f for f in frames if f.applies_to(ctx)]
    if not applicable:
        raise NoApplicableFrame(
            f"no frame applies at {to_rfc3339(ctx.time)} "
            f"with tags {sorted(ctx.jurisdiction_tags)}")
    top = max(f.priority for f in applicable)
    winners = [f for f in applicable if f.priority == top]
    if len(winners) > 1:
        names = ", ".join(f"{f.frame_id}@{f.version}" for f in winners)
        raise AmbiguousFrame(f"priority tie between {names}")
    return winners[0]
