from __future__ import annotations

import itertools
import random

import pytest

from ssgov import fixtures
from ssgov.calculus import (
    compute_bundle,
    compute_status,
    decide,
    evaluate,
    required_eligibilities,
)
from ssgov.conditions import make_context
from ssgov.errors import NoApplicableFrame, NoApplicableRule, UnknownRequestKind
from ssgov.fixtures import utc
from ssgov.frames import LegalFrame, atom, select_frame


@pytest.fixture(scope="module")
def voyage():
    return fixtures.ship_voyage()


@pytest.fixture(scope="module")
def support():
    return fixtures.child_support()


def _names(atoms) -> set[str]:
    return {a.name for a in atoms}


# --- compute_status ------------------------------------------------------------

def test_eve_statuses_day_two(voyage):
    # Hand evaluation of the ship frame against the fixture: Eve is a
    # passenger, books second class, and is still 13 on day 2.
    frame = select_frame(voyage.frames, voyage.ctx(2))
    statuses = compute_status(frame, fixtures.EVE, voyage.store.view(), voyage.ctx(2))
    assert statuses == {"passenger", "class_2", "under_14"}


def test_eve_statuses_day_three(voyage):
    frame = select_frame(voyage.frames, voyage.ctx(3))
    statuses = compute_status(frame, fixtures.EVE, voyage.store.view(), voyage.ctx(3))
    assert statuses == {"passenger", "class_2", "age_14_plus"}


def test_zero_status_rules_vacuous(voyage):
    frame = LegalFrame(
        frame_id="empty", community_id="c", version=1,
        valid_from=utc("2026-01-01T00:00:00"), valid_to=utc("2027-01-01T00:00:00"),
        jurisdiction_tags=frozenset({"t"}), priority=1, subject_registry="pax",
        atom_vocabulary=frozenset(), request_vocabulary=frozenset())
    ctx = make_context(utc("2026-06-01T00:00:00"), {"t"})
    assert compute_status(frame, fixtures.EVE, voyage.store.view(), ctx) == frozenset()


# --- compute_bundle -----------------------------------------------------------------

def test_first_class_settles_fee_without_payment_record(voyage):
    # No sauna_fees row is consulted for first class: the grant keys on status.
    frame = voyage.frames[0]
    view = voyage.store.view()
    ctx = voyage.ctx(2)
    bundle = compute_bundle(frame, frozenset({"passenger", "class_1"}),
                            "NO_SUCH_PERSON", view, ctx)
    assert "sauna_fee_settled" in _names(bundle)


def test_no_statuses_no_unconditional_grants_empty_bundle(voyage):
    frame = voyage.frames[1]  # stricter frame has no unconditional grants
    bundle = compute_bundle(frame, frozenset(), "NO_SUCH_PERSON",
                            voyage.store.view(), voyage.ctx(5))
    assert bundle == frozenset()


def test_eve_day_three_bundle_from_statuses_and_payment(voyage):
    frame = select_frame(voyage.frames, voyage.ctx(3))
    view = voyage.store.view()
    statuses = compute_status(frame, fixtures.EVE, view, voyage.ctx(3))
    bundle = compute_bundle(frame, statuses, fixtures.EVE, view, voyage.ctx(3))
    assert _names(bundle) == {"enter_sauna_ok", "sauna_fee_settled"}


# --- required_eligibilities -----------------------------------------------------------

def test_required_set_ship_frame(voyage):
    frame = voyage.frames[0]
    ctx = voyage.ctx(2)
    assert _names(required_eligibilities(frame, ctx)) == {
        "enter_sauna_ok", "sauna_fee_settled"}


def test_required_set_iran_frame(voyage):
    frame = voyage.frames[1]
    ctx = voyage.ctx(5)
    assert _names(required_eligibilities(frame, ctx)) == {
        "sauna_entry_iran_ok", "sauna_fee_settled"}


def test_unknown_request_kind(voyage):
    frame = voyage.frames[0]
    ctx = make_context(voyage.day(2), fixtures.SHIP_TAGS, "launch_missiles")
    with pytest.raises(UnknownRequestKind):
        required_eligibilities(frame, ctx)


def test_no_context_match_is_default_deny(voyage):
    # A governed kind whose rules cover only part of the context space:
    # outside that part nothing matches, which is an explicit error, never a
    # silent permit through an empty required set.
    from ssgov.conditions import TRUE, cmp
    from ssgov.frames import LegalFrame, RequestRule

    frame = LegalFrame(
        frame_id="partial", community_id="c", version=1,
        valid_from=utc("2026-01-01T00:00:00"), valid_to=utc("2027-01-01T00:00:00"),
        jurisdiction_tags=frozenset({"t"}), priority=1, subject_registry="pax",
        atom_vocabulary=frozenset({"go_ok"}),
        request_vocabulary=frozenset({"go"}),
        request_rules=(
            RequestRule("rq_weekend", "go", cmp("context.mode", "=", "weekend"),
                        frozenset({atom("go_ok")})),
        ),
    )
    with pytest.raises(NoApplicableRule):
        required_eligibilities(frame, make_context(
            utc("2026-06-01T00:00:00"), {"t"}, "go", {"mode": "weekday"}))
    required = required_eligibilities(frame, make_context(
        utc("2026-06-01T00:00:00"), {"t"}, "go", {"mode": "weekend"}))
    assert _names(required) == {"go_ok"}


def test_rc_read_rules_partition_context_space(support):
    # Self-read frees no atoms; foreign keyed reads and broad reads demand
    # their own eligibility.
    frame = support.frames[0]
    combos = (
        ({"key": "PA1", "requester": "PA1"}, set()),
        ({"key": "C1", "requester": "PA1"}, {"rc_read_other_ok"}),
        ({"requester": "PA1"}, {"rc_read_all_ok"}),
    )
    for params, expected in combos:
        required = required_eligibilities(frame, make_context(
            support.now, fixtures.SI_SOCIAL_TAGS, "read(rc)", params))
        assert _names(required) == expected


# --- decide ------------------------------------------------------------------------------

def test_empty_required_always_permits():
    for bundle in (frozenset(), frozenset({atom("a")}), frozenset({atom("a"), atom("b")})):
        assert decide(bundle, frozenset()).permit is True


def test_eve_day_two_missing_entry_atom(voyage):
    decision = evaluate(voyage.frames, voyage.store.view(), fixtures.EVE, voyage.ctx(2))
    assert decision.permit is False
    assert _names(decision.missing_atoms) == {"enter_sauna_ok"}


def test_day_five_companion_outcomes(voyage):
    view = voyage.store.view()
    with_father = evaluate(voyage.frames, view, fixtures.EVE,
                           voyage.ctx(5, fixtures.FATHER))
    with_mother = evaluate(voyage.frames, view, fixtures.EVE,
                           voyage.ctx(5, fixtures.MOTHER))
    assert with_father.permit is False
    assert _names(with_father.missing_atoms) == {"sauna_entry_iran_ok"}
    assert with_mother.permit is True


def test_exact_bundle_equality_permits():
    # Non-strict containment: demanding exactly what the bundle holds permits.
    required = frozenset({atom("x"), atom("y")})
    assert decide(required, required).permit is True


def test_atom_params_distinguish_atoms():
    granted = frozenset({atom("enter", zone="pool")})
    required = frozenset({atom("enter", zone="sauna")})
    decision = decide(granted, required)
    assert decision.permit is False
    assert decision.missing_atoms == required


# --- evaluate ---------------------------------------------------------------------------

def test_child_support_evaluate_permits_eligible_child(support):
    decision = evaluate(support.frames, support.store.view(), fixtures.PARENT,
                        support.claim_ctx("C1"))
    assert decision.permit is True
    assert decision.frame_id == "si-child-support"


def test_evaluate_empty_frames_is_no_applicable_frame(voyage):
    with pytest.raises(NoApplicableFrame):
        evaluate([], voyage.store.view(), fixtures.EVE, voyage.ctx(1))


def test_trace_lists_rules_in_declaration_order(voyage):
    decision = evaluate(voyage.frames, voyage.store.view(), fixtures.EVE, voyage.ctx(2))
    stages = [(r.stage, r.rule_id) for r in decision.fired_rules]
    frame = voyage.frames[0]
    expected_status_order = [r.rule_id for r in frame.status_rules]
    seen_status_order = [rid for stage, rid in stages if stage == "status"]
    assert seen_status_order == expected_status_order
    assert stages[0] == ("frame", "ship-house-rules@1")
    assert stages[-1] == ("decide", "containment")
    assert decision.frame_digest == frame.digest()


def test_determinism_byte_identical_decisions(voyage):
    view = voyage.store.view()
    first = evaluate(voyage.frames, view, fixtures.EVE, voyage.ctx(5, fixtures.MOTHER))
    for _ in range(10):
        again = evaluate(voyage.frames, view, fixtures.EVE,
                         voyage.ctx(5, fixtures.MOTHER))
        assert again.digest() == first.digest()
        assert again.to_dict() == first.to_dict()


def test_evaluate_never_mutates_the_view(voyage):
    view = voyage.store.view()
    before = view.digest
    for day in range(1, 6):
        for companion in (None, fixtures.MOTHER, fixtures.FATHER):
            evaluate(voyage.frames, view, fixtures.EVE, voyage.ctx(day, companion))
    assert view.digest == before
    assert voyage.store.view().digest == before


# --- containment properties ------------------------------------------------------------------

UNIVERSE = tuple(atom(name) for name in ("a1", "a2", "a3", "a4", "a5"))


def _subsets(universe):
    for mask in range(2 ** len(universe)):
        yield frozenset(a for i, a in enumerate(universe) if mask >> i & 1)


def test_containment_matches_bruteforce_set_difference():
    # Oracle: elementwise set difference, written out by hand.
    for bundle, required in itertools.product(_subsets(UNIVERSE), repeat=2):
        missing = frozenset(a for a in required if a not in bundle)
        decision = decide(bundle, required)
        assert decision.missing_atoms == missing
        assert decision.permit is (len(missing) == 0)


def test_monotonicity_growing_bundle_never_revokes():
    rng = random.Random(20260615)
    subsets = list(_subsets(UNIVERSE))
    for _ in range(500):
        small = rng.choice(subsets)
        grown = small | rng.choice(subsets)
        required = rng.choice(subsets)
        if decide(small, required).permit:
            assert decide(grown, required).permit
