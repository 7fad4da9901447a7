from __future__ import annotations

from datetime import timedelta

import pytest

from ssgov import fixtures
from ssgov.conditions import (
    TRUE,
    age_at,
    all_of,
    any_of,
    cmp,
    condition_from_dict,
    condition_to_dict,
    eval_condition,
    exists,
    has_status,
    make_context,
    negate,
    validate_condition,
)
from ssgov.errors import MissingContextParam, UnresolvableField
from ssgov.fixtures import utc


@pytest.fixture(scope="module")
def voyage():
    return fixtures.ship_voyage()


@pytest.fixture(scope="module")
def support():
    return fixtures.child_support()


def test_age_turns_on_birthday():
    # 14th birthday lands exactly on day 3 of the voyage.
    dob = "2012-06-03"
    assert age_at(dob, utc("2026-06-02T12:00:00")) == 13
    assert age_at(dob, utc("2026-06-03T00:00:00")) == 14
    assert age_at(dob, utc("2026-06-03T12:00:00")) == 14


def test_age_leap_day_birthday():
    assert age_at("2012-02-29", utc("2026-02-28T12:00:00")) == 13
    assert age_at("2012-02-29", utc("2026-03-01T00:00:00")) == 14


def test_child_below_fourteen_on_day_two(voyage):
    # The child is 13 on day 2 and turns 14 the next day.
    ctx = voyage.ctx(2)
    cond = cmp("derived.age", "<", 14)
    assert eval_condition(cond, fixtures.EVE, voyage.store.view(), ctx, "pax") is True
    assert eval_condition(cond, fixtures.EVE, voyage.store.view(), voyage.ctx(3),
                          "pax") is False


def test_empty_conjunction_is_true(voyage):
    assert eval_condition(TRUE, fixtures.EVE, voyage.store.view(), voyage.ctx(1),
                          "pax") is True


def test_empty_disjunction_is_false(voyage):
    assert eval_condition(any_of(), fixtures.EVE, voyage.store.view(), voyage.ctx(1),
                          "pax") is False


def test_exists_unemployed_scan_matches_bruteforce(support):
    """exists(re, empl = subject.nin) against a brute-force row scan."""
    view = support.store.view()
    cond = exists("re", cmp("row.empl", "=", "@subject.nin"))
    ctx = support.base_ctx()
    for nin in (*fixtures.CHILDREN, fixtures.PARENT):
        # Oracle: scan every employment row by hand.
        expected = any(row["empl"] == nin for row in view.rows("re").values())
        assert eval_condition(cond, nin, view, ctx, "rc") is expected
    assert eval_condition(cond, "C1", view, ctx, "rc") is False  # unemployed child
    assert eval_condition(cond, "C5", view, ctx, "rc") is True   # employed child


def test_null_comparisons_are_false(support):
    view = support.store.view()
    ctx = support.base_ctx()
    # PA1.married_to is null: every comparison except the null checks is false.
    for op in ("=", "!=", "<", "<=", ">", ">="):
        cond = cmp("subject.married_to", op, "X9")
        assert eval_condition(cond, fixtures.PARENT, view, ctx, "rc") is False
    assert eval_condition(cmp("subject.married_to", "is-null"),
                          fixtures.PARENT, view, ctx, "rc") is True
    assert eval_condition(cmp("subject.married_to", "is-not-null"),
                          fixtures.PARENT, view, ctx, "rc") is False


def test_missing_subject_record_reads_as_null(voyage):
    view = voyage.store.view()
    ctx = voyage.ctx(1)
    assert eval_condition(cmp("subject.nin", "is-null"), "NOBODY", view, ctx,
                          "pax") is True
    assert eval_condition(cmp("derived.age", "<", 200), "NOBODY", view, ctx,
                          "pax") is False


def test_cross_type_comparison_semantics(voyage):
    view = voyage.store.view()
    ctx = voyage.ctx(1)
    # cabin_class is an integer; comparing against a string is never equal.
    assert eval_condition(cmp("subject.cabin_class", "=", "2"),
                          fixtures.EVE, view, ctx, "pax") is False
    assert eval_condition(cmp("subject.cabin_class", "!=", "2"),
                          fixtures.EVE, view, ctx, "pax") is True
    assert eval_condition(cmp("subject.cabin_class", "<", "9"),
                          fixtures.EVE, view, ctx, "pax") is False


def test_companion_reference_requires_param(voyage):
    view = voyage.store.view()
    bare = make_context(voyage.day(5), fixtures.IRAN_TAGS)
    with pytest.raises(MissingContextParam):
        eval_condition(cmp("companion.sex", "=", "f"), fixtures.EVE, view, bare, "pax")


def test_companion_guard_short_circuits(voyage):
    # The guard idiom frames use: absent companion never reaches companion.*.
    view = voyage.store.view()
    bare = make_context(voyage.day(5), fixtures.IRAN_TAGS)
    guarded = all_of(cmp("context.companion", "is-not-null"),
                     cmp("companion.sex", "=", "@subject.sex"))
    assert eval_condition(guarded, fixtures.EVE, view, bare, "pax") is False
    with_mother = bare.with_params({"companion": fixtures.MOTHER})
    assert eval_condition(guarded, fixtures.EVE, view, with_mother, "pax") is True


def test_absent_context_param_is_null(voyage):
    view = voyage.store.view()
    ctx = voyage.ctx(1)
    assert eval_condition(cmp("context.never_set", "is-null"), fixtures.EVE, view,
                          ctx, "pax") is True
    assert eval_condition(cmp("context.never_set", "=", "x"), fixtures.EVE, view,
                          ctx, "pax") is False


def test_unresolvable_field_is_loud(voyage):
    view = voyage.store.view()
    ctx = voyage.ctx(1)
    with pytest.raises(UnresolvableField):
        eval_condition(cmp("subject.no_such_field", "is-null"), fixtures.EVE, view,
                       ctx, "pax")
    with pytest.raises(UnresolvableField):
        eval_condition(exists("no_such_registry", TRUE), fixtures.EVE, view, ctx, "pax")


def test_has_status_outside_grant_rules_rejected(voyage):
    with pytest.raises(UnresolvableField):
        eval_condition(has_status("adult"), fixtures.EVE, voyage.store.view(),
                       voyage.ctx(1), "pax")


def test_condition_json_roundtrip(support):
    cond = all_of(
        cmp("companion.adr", ">=", "SI:"),
        negate(exists("re", cmp("row.empl", "=", "@companion.nin"))),
        any_of(cmp("derived.companion_age", "<", 27),
               cmp("context.waiver", "=", True)),
        cmp("subject.married_to", "is-null"),
    )
    assert condition_from_dict(condition_to_dict(cond)) == cond


def test_validate_condition_scope_restrictions():
    with pytest.raises(UnresolvableField):
        validate_condition(cmp("subject.nin", "is-null"), allowed_scopes=("context",))
    with pytest.raises(UnresolvableField):
        validate_condition(exists("re", TRUE), allowed_scopes=("context",))
    validate_condition(cmp("context.key", "=", "@context.requester"),
                       allowed_scopes=("context",))


def test_determinism_repeated_evaluation(voyage):
    view = voyage.store.view()
    cond = all_of(cmp("derived.age", ">=", 14),
                  exists("sauna_fees", cmp("row.nin", "=", "@subject.nin")))
    results = {eval_condition(cond, fixtures.EVE, view, voyage.ctx(3), "pax")
               for _ in range(25)}
    assert results == {True}
