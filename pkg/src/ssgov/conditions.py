"""Declarative condition trees and their deterministic evaluator.

Conditions are the predicate content of every rule in a legal frame: status
rules, grant rules and request/access rules all decide by evaluating a finite
condition tree against an immutable registry snapshot plus the request
context. The language is intentionally small:

* comparisons ``=, !=, <, <=, >, >=, is-null, is-not-null`` between a field
  reference and a literal or second field reference;
* ``and`` / ``or`` / ``not`` combinators (short-circuit, two-valued);
* ``exists(registry, filter)`` scanning the snapshot;
* ``has_status(label)`` — permitted only inside grant rules;
* one derived function: ``derived.age`` (and its companion-record variant
  ``derived.companion_age``), computing full years between a record's
  ``date_of_birth`` and the evaluation instant.

Null semantics are two-valued by design: any comparison other than the
explicit null checks evaluates to false when either side is null. A null
arises from a null field value, an absent record, or an absent context
parameter. Companion field references are stricter: they raise
``MissingContextParam`` when the request carries no ``companion`` parameter,
so frames guard them with ``is-not-null(context.companion)`` (``and`` is
short-circuit).
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timezone

from .canonical import Scalar
from .errors import MissingContextParam, UnresolvableField

COMPANION_PARAM = "companion"

COMPARATORS = ("eq", "ne", "lt", "le", "gt", "ge")
NULL_CHECKS = ("is_null", "is_not_null")

_OP_SYMBOLS = {"eq": "=", "ne": "!=", "lt": "<", "le": "<=", "gt": ">", "ge": ">="}


@dataclass(frozen=True)
class EvalContext:
    """The context of a request: when, where, what, and with which parameters."""

    time: datetime
    jurisdiction_tags: frozenset[str]
    request_kind: str = ""
    params: tuple[tuple[str, Scalar], ...] = ()

    def __post_init__(self):
        if self.time.tzinfo is None:
            raise ValueError("EvalContext.time must be timezone-aware")
        if not self.jurisdiction_tags:
            raise ValueError("EvalContext.jurisdiction_tags must be non-empty")
        object.__setattr__(self, "jurisdiction_tags", frozenset(self.jurisdiction_tags))
        if isinstance(self.params, dict):
            object.__setattr__(self, "params", tuple(sorted(self.params.items())))

    def param(self, name: str) -> Scalar:
        for key, value in self.params:
            if key == name:
                return value
        return None

    def has_param(self, name: str) -> bool:
        return any(key == name for key, _ in self.params)

    def with_params(self, extra: dict[str, Scalar]) -> "EvalContext":
        merged = dict(self.params)
        merged.update(extra)
        return EvalContext(self.time, self.jurisdiction_tags, self.request_kind,
                           tuple(sorted(merged.items())))

    def with_request(self, request_kind: str, extra: dict[str, Scalar] | None = None) -> "EvalContext":
        merged = dict(self.params)
        merged.update(extra or {})
        return EvalContext(self.time, self.jurisdiction_tags, request_kind,
                           tuple(sorted(merged.items())))


def make_context(time: datetime, tags, request_kind: str = "",
                 params: dict[str, Scalar] | None = None) -> EvalContext:
    return EvalContext(time, frozenset(tags), request_kind,
                       tuple(sorted((params or {}).items())))


# --- field references and condition nodes -----------------------------------

_SCOPES = ("subject", "companion", "context", "row")
_DERIVED = ("age", "companion_age")


@dataclass(frozen=True)
class FieldRef:
    scope: str  # subject | companion | context | row | derived
    name: str

    def __str__(self) -> str:
        return f"{self.scope}.{self.name}"


def parse_ref(path: str) -> FieldRef:
    scope, _, name = path.partition(".")
    if not name:
        raise UnresolvableField(f"malformed field reference {path!r}")
    if scope == "derived":
        if name not in _DERIVED:
            raise UnresolvableField(f"unknown derived function {path!r}")
        return FieldRef("derived", name)
    if scope not in _SCOPES:
        raise UnresolvableField(f"unknown reference scope {path!r}")
    return FieldRef(scope, name)


@dataclass(frozen=True)
class Lit:
    value: Scalar


@dataclass(frozen=True)
class Cmp:
    lhs: FieldRef
    op: str  # eq ne lt le gt ge is_null is_not_null
    rhs: FieldRef | Lit | None = None


@dataclass(frozen=True)
class And:
    args: tuple["Condition", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["Condition", ...]


@dataclass(frozen=True)
class Not:
    arg: "Condition"


@dataclass(frozen=True)
class Exists:
    registry: str
    filter: "Condition"


@dataclass(frozen=True)
class HasStatus:
    label: str


Condition = Cmp | And | Or | Not | Exists | HasStatus

TRUE = And(())


# Convenience constructors used by fixtures and frame authors.

def cmp(lhs: str, op: str, rhs=None) -> Cmp:
    symbol_to_op = {v: k for k, v in _OP_SYMBOLS.items()}
    op = symbol_to_op.get(op, op).replace("-", "_")
    if op not in COMPARATORS + NULL_CHECKS:
        raise ValueError(f"unknown comparison operator {op!r}")
    if op in NULL_CHECKS:
        return Cmp(parse_ref(lhs), op, None)
    if isinstance(rhs, str) and rhs.startswith("@"):
        return Cmp(parse_ref(lhs), op, parse_ref(rhs[1:]))
    return Cmp(parse_ref(lhs), op, Lit(rhs))


def all_of(*args: Condition) -> And:
    return And(tuple(args))


def any_of(*args: Condition) -> Or:
    return Or(tuple(args))


def negate(arg: Condition) -> Not:
    return Not(arg)


def exists(registry: str, filter: Condition) -> Exists:
    return Exists(registry, filter)


def has_status(label: str) -> HasStatus:
    return HasStatus(label)


# --- JSON form ----------------------------------------------------------------

def condition_to_dict(cond: Condition):
    if isinstance(cond, And):
        return {"op": "and", "args": [condition_to_dict(a) for a in cond.args]}
    if isinstance(cond, Or):
        return {"op": "or", "args": [condition_to_dict(a) for a in cond.args]}
    if isinstance(cond, Not):
        return {"op": "not", "arg": condition_to_dict(cond.arg)}
    if isinstance(cond, Exists):
        return {"op": "exists", "registry": cond.registry,
                "filter": condition_to_dict(cond.filter)}
    if isinstance(cond, HasStatus):
        return {"op": "has_status", "label": cond.label}
    if isinstance(cond, Cmp):
        out = {"op": cond.op, "lhs": str(cond.lhs)}
        if cond.op in NULL_CHECKS:
            return out
        if isinstance(cond.rhs, FieldRef):
            out["rhs"] = {"ref": str(cond.rhs)}
        else:
            out["rhs"] = cond.rhs.value
        return out
    raise TypeError(f"not a condition: {cond!r}")


def condition_from_dict(doc) -> Condition:
    if not isinstance(doc, dict) or "op" not in doc:
        raise UnresolvableField(f"malformed condition document: {doc!r}")
    op = doc["op"]
    if op == "and":
        return And(tuple(condition_from_dict(a) for a in doc.get("args", ())))
    if op == "or":
        return Or(tuple(condition_from_dict(a) for a in doc.get("args", ())))
    if op == "not":
        return Not(condition_from_dict(doc["arg"]))
    if op == "exists":
        return Exists(doc["registry"], condition_from_dict(doc["filter"]))
    if op == "has_status":
        return HasStatus(doc["label"])
    if op in COMPARATORS + NULL_CHECKS:
        lhs = parse_ref(doc["lhs"])
        if op in NULL_CHECKS:
            return Cmp(lhs, op, None)
        rhs = doc.get("rhs")
        if isinstance(rhs, dict) and "ref" in rhs:
            return Cmp(lhs, op, parse_ref(rhs["ref"]))
        if isinstance(rhs, dict):
            raise UnresolvableField(f"malformed comparison operand: {rhs!r}")
        return Cmp(lhs, op, Lit(rhs))
    raise UnresolvableField(f"unknown condition operator {op!r}")


# --- derived age ---------------------------------------------------------------

def age_at(date_of_birth: str, at: datetime) -> int:
    """Full years elapsed between a birth date and an instant (UTC calendar)."""
    born = date.fromisoformat(date_of_birth)
    today = at.astimezone(timezone.utc).date()
    return today.year - born.year - ((today.month, today.day) < (born.month, born.day))


# --- evaluation -----------------------------------------------------------------

@dataclass
class EvalEnv:
    """Resolution environment for one condition evaluation.

    ``view`` is any snapshot object exposing ``has_registry``, ``schema``,
    ``row`` and ``rows``; ``subject_registry`` names the registry whose row
    keyed by the subject (and companion) id backs ``subject.*`` and
    ``companion.*`` references.
    """

    ctx: EvalContext
    view: object | None = None
    subject_registry: str | None = None
    subject_id: str | None = None
    row: dict[str, Scalar] | None = None
    row_registry: str | None = None
    statuses: frozenset[str] | None = None

    def subject_record(self) -> dict[str, Scalar] | None:
        if self.view is None or self.subject_registry is None or self.subject_id is None:
            return None
        if not self.view.has_registry(self.subject_registry):
            return None
        return self.view.row(self.subject_registry, self.subject_id)

    def companion_record(self) -> dict[str, Scalar] | None:
        if not self.ctx.has_param(COMPANION_PARAM):
            raise MissingContextParam(
                f"condition references companion but request carries no "
                f"{COMPANION_PARAM!r} parameter")
        companion_id = self.ctx.param(COMPANION_PARAM)
        if companion_id is None or self.view is None or self.subject_registry is None:
            return None
        if not self.view.has_registry(self.subject_registry):
            return None
        return self.view.row(self.subject_registry, str(companion_id))


def _record_field(env: EvalEnv, registry: str | None, record, name: str) -> Scalar:
    if registry is not None and env.view is not None:
        schema = env.view.schema(registry)
        if name not in schema.field_names():
            raise UnresolvableField(f"field {name!r} not declared in registry {registry!r}")
    if record is None:
        return None
    return record.get(name)


def _resolve(env: EvalEnv, ref: FieldRef) -> Scalar:
    if ref.scope == "context":
        return env.ctx.param(ref.name)
    if ref.scope == "subject":
        return _record_field(env, env.subject_registry, env.subject_record(), ref.name)
    if ref.scope == "companion":
        return _record_field(env, env.subject_registry, env.companion_record(), ref.name)
    if ref.scope == "row":
        if env.row is None:
            raise UnresolvableField("row reference outside an exists filter or query selection")
        return _record_field(env, env.row_registry, env.row, ref.name)
    if ref.scope == "derived":
        record = env.subject_record() if ref.name == "age" else env.companion_record()
        dob = record.get("date_of_birth") if record else None
        if dob is None:
            return None
        if not isinstance(dob, str):
            raise UnresolvableField("date_of_birth is not a date value")
        return age_at(dob, env.ctx.time)
    raise UnresolvableField(f"unknown reference scope {ref.scope!r}")


def _same_type(a: Scalar, b: Scalar) -> bool:
    # bool is deliberately distinct from int.
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool)
    return type(a) is type(b)


def compare(op: str, left: Scalar, right: Scalar) -> bool:
    """Two-valued comparison with documented null and cross-type behavior."""
    if op == "is_null":
        return left is None
    if op == "is_not_null":
        return left is not None
    if left is None or right is None:
        return False
    if op == "eq":
        return _same_type(left, right) and left == right
    if op == "ne":
        return not (_same_type(left, right) and left == right)
    # Ordering is defined within ints and within strings only.
    if not _same_type(left, right) or isinstance(left, bool):
        return False
    if not isinstance(left, (int, str)):
        return False
    if op == "lt":
        return left < right
    if op == "le":
        return left <= right
    if op == "gt":
        return left > right
    if op == "ge":
        return left >= right
    raise UnresolvableField(f"unknown comparison operator {op!r}")


def evaluate_condition(cond: Condition, env: EvalEnv) -> bool:
    if isinstance(cond, And):
        return all(evaluate_condition(a, env) for a in cond.args)
    if isinstance(cond, Or):
        return any(evaluate_condition(a, env) for a in cond.args)
    if isinstance(cond, Not):
        return not evaluate_condition(cond.arg, env)
    if isinstance(cond, HasStatus):
        if env.statuses is None:
            raise UnresolvableField("has_status is only meaningful inside grant rules")
        return cond.label in env.statuses
    if isinstance(cond, Exists):
        if env.view is None or not env.view.has_registry(cond.registry):
            raise UnresolvableField(f"exists references unknown registry {cond.registry!r}")
        for key in sorted(env.view.rows(cond.registry)):
            inner = EvalEnv(env.ctx, env.view, env.subject_registry, env.subject_id,
                            row=dict(env.view.rows(cond.registry)[key]),
                            row_registry=cond.registry, statuses=env.statuses)
            if evaluate_condition(cond.filter, inner):
                return True
        return False
    if isinstance(cond, Cmp):
        left = _resolve(env, cond.lhs)
        if cond.op in NULL_CHECKS:
            return compare(cond.op, left, None)
        right = _resolve(env, cond.rhs) if isinstance(cond.rhs, FieldRef) else cond.rhs.value
        return compare(cond.op, left, right)
    raise TypeError(f"not a condition: {cond!r}")


def eval_condition(cond: Condition, subject_id: str, view, ctx: EvalContext,
                   subject_registry: str | None = None) -> bool:
    """Evaluate a condition for a subject against a snapshot view.

    Deterministic: the result depends only on (cond, subject_id, view, ctx).
    ``exists`` scans the snapshot only; comparisons touching null evaluate
    false except for the explicit null checks.
    """
    env = EvalEnv(ctx, view, subject_registry, subject_id)
    return evaluate_condition(cond, env)


# --- static validation -----------------------------------------------------------

def validate_condition(cond: Condition, *, schemas=None, subject_registry: str | None = None,
                       allowed_scopes: tuple[str, ...] = ("subject", "companion", "context", "row"),
                       allow_has_status: bool = False, row_registry: str | None = None,
                       _depth: int = 0) -> None:
    """Reject structurally defective conditions at frame-load time.

    With ``schemas`` (a mapping registry_id -> schema), every field reference
    is checked against the registered schemas, so evaluation can only hit
    ``UnresolvableField`` for frames that were never validated.
    """
    if _depth > 64:
        raise UnresolvableField("condition nesting exceeds supported depth")

    def check_ref(ref: FieldRef):
        if ref.scope == "derived":
            if ref.name == "companion_age" and "companion" not in allowed_scopes:
                raise UnresolvableField("companion age reference not allowed here")
            if subject_registry and schemas is not None:
                _check_field(schemas, subject_registry, "date_of_birth")
            return
        if ref.scope not in allowed_scopes:
            raise UnresolvableField(f"reference {ref} not allowed in this rule position")
        if schemas is None:
            return
        if ref.scope in ("subject", "companion") and subject_registry:
            _check_field(schemas, subject_registry, ref.name)
        if ref.scope == "row" and row_registry:
            _check_field(schemas, row_registry, ref.name)

    if isinstance(cond, (And, Or)):
        for arg in cond.args:
            validate_condition(arg, schemas=schemas, subject_registry=subject_registry,
                               allowed_scopes=allowed_scopes, allow_has_status=allow_has_status,
                               row_registry=row_registry, _depth=_depth + 1)
        return
    if isinstance(cond, Not):
        validate_condition(cond.arg, schemas=schemas, subject_registry=subject_registry,
                           allowed_scopes=allowed_scopes, allow_has_status=allow_has_status,
                           row_registry=row_registry, _depth=_depth + 1)
        return
    if isinstance(cond, Exists):
        if "row" not in allowed_scopes:
            raise UnresolvableField("exists lookups not allowed in this rule position")
        if schemas is not None and cond.registry not in schemas:
            raise UnresolvableField(f"exists references unknown registry {cond.registry!r}")
        validate_condition(cond.filter, schemas=schemas, subject_registry=subject_registry,
                           allowed_scopes=allowed_scopes, allow_has_status=False,
                           row_registry=cond.registry, _depth=_depth + 1)
        return
    if isinstance(cond, HasStatus):
        if not allow_has_status:
            raise UnresolvableField("has_status is only allowed in grant rule conditions")
        return
    if isinstance(cond, Cmp):
        check_ref(cond.lhs)
        if isinstance(cond.rhs, FieldRef):
            check_ref(cond.rhs)
        return
    raise TypeError(f"not a condition: {cond!r}")


def _check_field(schemas, registry: str, name: str):
    if registry not in schemas:
        raise UnresolvableField(f"reference against unknown registry {registry!r}")
    if name not in schemas[registry].field_names():
        raise UnresolvableField(f"field {name!r} not declared in registry {registry!r}")
