from __future__ import annotations

import random
from datetime import timedelta

import pytest

from ssgov.conditions import TRUE, all_of, any_of, cmp, negate
from ssgov.errors import (
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
from ssgov.fixtures import utc
from ssgov.store import RegistryStore, query, read_event_log, replay, schema

T0 = utc("2026-06-01T00:00:00")


def _rc_schema():
    return schema("rc", "nin",
                  ("nin", "national-id", False),
                  ("date_of_birth", "date", False),
                  ("adr", "string", False),
                  ("child_of", "national-id"),
                  ("married_to", "national-id"))


def _store_with_rc() -> RegistryStore:
    store = RegistryStore()
    store.define_registry(_rc_schema(), requester="GOV", at=T0)
    return store


def _insert(store, key, **values):
    row = {"nin": key, "date_of_birth": "2000-01-01", "adr": "SI:X:1",
           "child_of": None, "married_to": None}
    row.update(values)
    return store.apply_write("insert", "rc", key, row, requester="GOV", at=T0,
                             receipt_id="genesis")


# --- define_registry -----------------------------------------------------------

def test_define_civil_and_employment_registries():
    store = RegistryStore()
    ack = store.define_registry(_rc_schema(), requester="GOV", at=T0)
    assert ack.kind == "define" and ack.seq == 1
    ack2 = store.define_registry(
        schema("re", "empl", ("boss", "national-id", False),
               ("empl", "national-id", False)),
        requester="GOV", at=T0)
    assert ack2.seq == 2
    assert store.view().registries() == ("rc", "re")


def test_redefine_is_duplicate():
    store = _store_with_rc()
    with pytest.raises(DuplicateRegistry):
        store.define_registry(_rc_schema(), requester="GOV", at=T0)


def test_invalid_schemas_rejected():
    store = RegistryStore()
    with pytest.raises(InvalidSchema):  # key must be non-nullable national-id
        store.define_registry(schema("x", "k", ("k", "string", False)),
                              requester="GOV", at=T0)
    with pytest.raises(InvalidSchema):  # reserved field name
        store.define_registry(schema("x", "k", ("k", "national-id", False),
                                     ("requester", "string")),
                              requester="GOV", at=T0)
    with pytest.raises(InvalidSchema):  # duplicate field
        store.define_registry(schema("x", "k", ("k", "national-id", False),
                                     ("a", "string"), ("a", "string")),
                              requester="GOV", at=T0)


# --- apply_write ------------------------------------------------------------------

def test_insert_update_delete_lifecycle():
    store = _store_with_rc()
    event = _insert(store, "E1")
    assert event.seq == 2 and event.before is None
    updated = store.apply_write("update", "rc", "E1", {"adr": "SI:Y:2"},
                                requester="GOV", at=T0, receipt_id="r2")
    assert dict(updated.before)["adr"] == "SI:X:1"
    assert dict(updated.after)["adr"] == "SI:Y:2"
    deleted = store.apply_write("delete", "rc", "E1", None,
                                requester="GOV", at=T0, receipt_id="r3")
    assert deleted.after is None
    assert store.view().row("rc", "E1") is None


def test_digest_changes_iff_state_changes():
    store = _store_with_rc()
    _insert(store, "E1")
    before = store.view().digest
    # A no-op update appends an event but leaves the canonical state alone.
    store.apply_write("update", "rc", "E1", {"adr": "SI:X:1"},
                      requester="GOV", at=T0, receipt_id="r")
    assert store.view().digest == before
    store.apply_write("update", "rc", "E1", {"adr": "SI:Z:9"},
                      requester="GOV", at=T0, receipt_id="r")
    assert store.view().digest != before


def test_stale_before_conflict():
    store = _store_with_rc()
    _insert(store, "E1")
    with pytest.raises(StaleBefore):
        store.apply_write("update", "rc", "E1", {"adr": "SI:Y:2"},
                          requester="GOV", at=T0, receipt_id="r",
                          expected_before={"nin": "E1", "adr": "WRONG"})


def test_update_delete_absent_key():
    store = _store_with_rc()
    with pytest.raises(UnknownKey):
        store.apply_write("update", "rc", "GHOST", {"adr": "SI"},
                          requester="GOV", at=T0, receipt_id="r")
    with pytest.raises(UnknownKey):
        store.apply_write("delete", "rc", "GHOST", None,
                          requester="GOV", at=T0, receipt_id="r")


def test_schema_violations():
    store = _store_with_rc()
    _insert(store, "E1")
    with pytest.raises(SchemaViolation):  # duplicate key insert
        _insert(store, "E1")
    with pytest.raises(SchemaViolation):  # unknown field
        store.apply_write("update", "rc", "E1", {"nope": 1},
                          requester="GOV", at=T0, receipt_id="r")
    with pytest.raises(SchemaViolation):  # type mismatch
        store.apply_write("update", "rc", "E1", {"adr": 5},
                          requester="GOV", at=T0, receipt_id="r")
    with pytest.raises(SchemaViolation):  # bad date
        store.apply_write("update", "rc", "E1", {"date_of_birth": "junk"},
                          requester="GOV", at=T0, receipt_id="r")
    with pytest.raises(SchemaViolation):  # key field immutable
        store.apply_write("update", "rc", "E1", {"nin": "E2"},
                          requester="GOV", at=T0, receipt_id="r")
    with pytest.raises(SchemaViolation):  # null in non-nullable
        store.apply_write("update", "rc", "E1", {"adr": None},
                          requester="GOV", at=T0, receipt_id="r")
    with pytest.raises(UnknownRegistry):
        store.apply_write("insert", "ghosts", "E1", {}, requester="GOV", at=T0,
                          receipt_id="r")


# --- query ----------------------------------------------------------------------------

def test_query_true_on_empty_registry():
    store = _store_with_rc()
    assert query("rc", TRUE, ["nin"], store.view()) == []


def test_query_unknown_registry_and_field():
    store = _store_with_rc()
    with pytest.raises(UnknownRegistry):
        query("ghosts", TRUE, [], store.view())
    with pytest.raises(UnknownField):
        query("rc", TRUE, ["nope"], store.view())
    with pytest.raises(UnknownField):
        query("rc", cmp("row.nope", "is-null"), ["nin"], store.view())


def test_not_exists_employment_check():
    # "not employed" is the absence of any employment row, not a null join.
    store = _store_with_rc()
    store.define_registry(schema("re", "empl", ("boss", "national-id", False),
                                 ("empl", "national-id", False)),
                          requester="GOV", at=T0)
    _insert(store, "C1")
    _insert(store, "C5")
    store.apply_write("insert", "re", "C5", {"boss": "B1", "empl": "C5"},
                      requester="GOV", at=T0, receipt_id="genesis")
    from ssgov.conditions import exists
    unemployed = negate(exists("re", cmp("row.empl", "=", "@row.nin")))
    rows = query("rc", unemployed, ["nin"], store.view())
    assert rows == [{"nin": "C1"}]


def test_rows_ordered_by_key_and_projected():
    store = _store_with_rc()
    for key in ("E3", "E1", "E2"):
        _insert(store, key)
    rows = query("rc", TRUE, ["nin", "adr"], store.view())
    assert [r["nin"] for r in rows] == ["E1", "E2", "E3"]
    assert set(rows[0]) == {"nin", "adr"}


def _random_condition(rng: random.Random, depth: int = 0):
    fields = ("a", "b", "c")
    if depth < 2 and rng.random() < 0.4:
        parts = tuple(_random_condition(rng, depth + 1)
                      for _ in range(rng.randint(1, 3)))
        combinator = rng.choice((all_of, any_of))
        return combinator(*parts)
    if rng.random() < 0.15:
        return negate(_random_condition(rng, depth + 1))
    name = rng.choice(fields)
    op = rng.choice(("=", "!=", "<", "<=", ">", ">=", "is-null", "is-not-null"))
    if op in ("is-null", "is-not-null"):
        return cmp(f"row.{name}", op)
    if rng.random() < 0.25:
        return cmp(f"row.{name}", op, f"@row.{rng.choice(fields)}")
    literal = rng.choice((rng.randint(0, 5), rng.choice(("x", "y", "z")), None))
    return cmp(f"row.{name}", op, literal)


def _oracle_resolve(row, operand):
    if isinstance(operand, tuple) and operand[0] == "field":
        return row.get(operand[1])
    return operand[1]


def _oracle_eval(cond, row):
    """Independent evaluator over plain dicts, from the documented semantics."""
    from ssgov.conditions import And, Cmp, FieldRef, Lit, Not, Or

    if isinstance(cond, And):
        return all(_oracle_eval(a, row) for a in cond.args)
    if isinstance(cond, Or):
        return any(_oracle_eval(a, row) for a in cond.args)
    if isinstance(cond, Not):
        return not _oracle_eval(cond.arg, row)
    assert isinstance(cond, Cmp)
    left = row.get(cond.lhs.name)
    if cond.op == "is_null":
        return left is None
    if cond.op == "is_not_null":
        return left is not None
    right = (row.get(cond.rhs.name) if isinstance(cond.rhs, FieldRef)
             else cond.rhs.value)
    if left is None or right is None:
        return False
    same_type = (type(left) is type(right)
                 and not isinstance(left, bool) and not isinstance(right, bool)) \
        or (isinstance(left, bool) and isinstance(right, bool))
    if cond.op == "eq":
        return same_type and left == right
    if cond.op == "ne":
        return not (same_type and left == right)
    if not same_type or isinstance(left, bool) or not isinstance(left, (int, str)):
        return False
    return {"lt": left < right, "le": left <= right,
            "gt": left > right, "ge": left >= right}[cond.op]


def test_query_equals_bruteforce_oracle_on_random_registries():
    rng = random.Random(42)
    for round_no in range(30):
        store = RegistryStore()
        store.define_registry(
            schema("t", "k", ("k", "national-id", False), ("a", "integer"),
                   ("b", "string"), ("c", "integer")),
            requester="GOV", at=T0)
        rows = {}
        for i in range(rng.randint(0, 50)):
            key = f"K{i:03d}"
            row = {"k": key,
                   "a": rng.choice((None, rng.randint(0, 5))),
                   "b": rng.choice((None, "x", "y", "z")),
                   "c": rng.choice((None, rng.randint(0, 5)))}
            store.apply_write("insert", "t", key, row, requester="GOV", at=T0,
                              receipt_id="genesis")
            rows[key] = row
        for _ in range(10):
            cond = _random_condition(rng)
            got = query("t", cond, ["k"], store.view())
            expected = [{"k": key} for key in sorted(rows)
                        if _oracle_eval(cond, rows[key])]
            assert got == expected, f"round {round_no}: {cond}"


# --- as_of / replay -------------------------------------------------------------------

def test_as_of_zero_is_empty_store():
    store = _store_with_rc()
    _insert(store, "E1")
    empty = store.as_of(0)
    assert empty.registries() == ()
    assert empty.digest == RegistryStore().view().digest


def test_as_of_latest_equals_live():
    store = _store_with_rc()
    _insert(store, "E1")
    assert store.as_of(store.latest_seq()).digest == store.view().digest


def test_as_of_future_seq_rejected():
    store = _store_with_rc()
    with pytest.raises(FutureSeq):
        store.as_of(99)


def test_as_of_before_delete_still_shows_row():
    store = _store_with_rc()
    _insert(store, "E1")
    seq_before_delete = store.latest_seq()
    store.apply_write("delete", "rc", "E1", None, requester="GOV", at=T0,
                      receipt_id="r")
    historic = store.as_of(seq_before_delete)
    assert historic.row("rc", "E1") is not None
    assert store.view().row("rc", "E1") is None
    # Oracle: replaying the log prefix reproduces the same digest.
    prefix = store.events()[:seq_before_delete]
    assert replay(prefix).digest == historic.digest


def test_as_of_instant():
    store = _store_with_rc()
    _insert(store, "E1")
    later = T0 + timedelta(days=2)
    store.apply_write("update", "rc", "E1", {"adr": "SI:Moved:1"},
                      requester="GOV", at=later, receipt_id="r")
    view_day1 = store.as_of(T0 + timedelta(days=1))
    assert view_day1.row("rc", "E1")["adr"] == "SI:X:1"


def test_replay_empty_log_is_empty_store():
    assert replay([]).digest == RegistryStore().view().digest


def test_replay_full_log_matches_live():
    store = _store_with_rc()
    for i in range(10):
        _insert(store, f"E{i}")
    store.apply_write("delete", "rc", "E3", None, requester="GOV", at=T0,
                      receipt_id="r")
    assert replay(store.events()).digest == store.view().digest


def test_replay_detects_gap():
    store = _store_with_rc()
    _insert(store, "E1")
    _insert(store, "E2")
    _insert(store, "E3")
    events = list(store.events())
    del events[2]  # remove seq 3
    with pytest.raises(GapDetected):
        replay(events)


def test_replay_detects_chain_tampering():
    store = _store_with_rc()
    _insert(store, "E1")
    _insert(store, "E2")
    events = list(store.events())
    tampered = events[1]
    from dataclasses import replace
    events[1] = replace(tampered, after=tuple(sorted(
        {**dict(tampered.after), "adr": "TAMPERED"}.items())))
    with pytest.raises(DigestMismatch):
        replay(events)


def test_append_only_events_never_rewritten():
    store = _store_with_rc()
    _insert(store, "E1")
    snapshot = store.events()
    digests = [e.record_digest() for e in snapshot]
    _insert(store, "E2")
    store.apply_write("update", "rc", "E1", {"adr": "SI:New:1"},
                      requester="GOV", at=T0, receipt_id="r")
    after = store.events()
    assert after[:len(snapshot)] == snapshot
    assert [e.record_digest() for e in after[:len(snapshot)]] == digests
    assert [e.seq for e in after] == list(range(1, len(after) + 1))


# --- persistence -----------------------------------------------------------------------

def test_log_file_roundtrip(tmp_path):
    path = tmp_path / "events.ndjson"
    store = RegistryStore(path)
    store.define_registry(_rc_schema(), requester="GOV", at=T0)
    _insert(store, "E1")
    reopened = RegistryStore(path)
    assert reopened.view().digest == store.view().digest
    assert reopened.latest_seq() == store.latest_seq()
    assert read_event_log(path) == list(store.events())


def test_log_file_chain_verified_on_load(tmp_path):
    path = tmp_path / "events.ndjson"
    store = RegistryStore(path)
    store.define_registry(_rc_schema(), requester="GOV", at=T0)
    _insert(store, "E1")
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    path.write_text("\n".join([lines[0], lines[1].replace("E1", "EX")]) + "\n",
                    encoding="utf-8")
    with pytest.raises(DigestMismatch):
        RegistryStore(path)


def test_snapshot_dump_and_digest(tmp_path):
    store = _store_with_rc()
    _insert(store, "E1")
    dump_path = store.snapshot(tmp_path)
    digest_path = dump_path.with_suffix(".digest")
    assert dump_path.exists() and digest_path.exists()
    import hashlib
    payload = dump_path.read_bytes().rstrip(b"\n")
    assert hashlib.sha256(payload).hexdigest() == digest_path.read_text().strip()
