"""ssgov: a self-service governance engine.

Subjects read and write registry data directly; every access is gated by an
eligibility calculus (status -> bundle of rights -> required-set containment)
evaluated against versioned, jurisdiction- and time-scoped legal frames.
Decisions are recomputed from data constellations on every request, traced
rule by rule, and answered in signed, offline-verifiable envelopes.
"""

from .calculus import Decision, FiredRule, compute_bundle, compute_status, decide, \
    evaluate, required_eligibilities
from .canonical import canonical_bytes, digest, parse_rfc3339, to_rfc3339
from .commands import CommandAst, RequestSpec, map_to_request, parse, render
from .conditions import EvalContext, age_at, all_of, any_of, cmp, eval_condition, \
    exists, has_status, make_context, negate
from .frames import Atom, GrantRule, LegalFrame, RequestRule, StatusRule, atom, \
    frame_from_dict, select_frame, validate_frame, validate_frame_set
from .gate import AuditLog, CommandResult, gate_and_execute
from .notify import Notifier, Subscription
from .store import FieldDef, RegistrySchema, RegistryStore, StoreView, WriteEvent, \
    query, replay, schema

__version__ = "0.1.0"

__all__ = [
    "Atom", "AuditLog", "CommandAst", "CommandResult", "Decision", "EvalContext",
    "FieldDef", "FiredRule", "GrantRule", "LegalFrame", "Notifier", "RegistrySchema",
    "RegistryStore", "RequestRule", "RequestSpec", "StatusRule", "StoreView",
    "Subscription", "WriteEvent", "age_at", "all_of", "any_of", "atom",
    "canonical_bytes", "cmp", "compute_bundle", "compute_status", "decide", "digest",
    "eval_condition", "evaluate", "exists", "frame_from_dict", "gate_and_execute",
    "has_status", "make_context", "map_to_request", "negate", "parse",
    "parse_rfc3339", "query", "render", "replay", "required_eligibilities", "schema",
    "select_frame", "to_rfc3339", "validate_frame", "validate_frame_set",
]
