"""Ready-made scenario fixtures: frames, registries and people.

These builders assemble complete, validated scenarios used by the test suite
and the demo scripts. Each returns a fresh store preloaded with genesis data
(receipt id ``genesis`` marks sovereign bootstrap writes that precede any
gated traffic) plus the frames governing it.

Scenarios:

* :func:`ship_voyage` — a five-day passage with a sauna whose entry rules
  change when the ship reaches a stricter jurisdiction on day 5; exercises
  time-dependent age statuses, fee settlement from payment records, and
  companion checks (same-sex close relative).
* :func:`child_support` — periodic payments gated on a constellation over a
  civil registry and an employment registry, including the claimant-is-parent
  and adult-child-claims-for-self paths and a per-period payment uniqueness
  rule.
* :func:`driver_license` — permission to drive derived from an exam registry
  writable only by the commission president and deletable only by the
  inspectorate.
* :func:`land_registry` — parcel ownership transfers whose receipts third
  parties (an escrow bank) verify offline.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from .conditions import TRUE, all_of, any_of, cmp, exists, has_status, make_context, negate
from .frames import GrantRule, LegalFrame, RequestRule, StatusRule, atom, validate_frame
from .store import RegistryStore, schema

GENESIS = "genesis"


def utc(text: str) -> datetime:
    return datetime.fromisoformat(text).replace(tzinfo=timezone.utc)


def _grants(*names: str) -> frozenset:
    return frozenset(atom(n) for n in names)


# --- ship voyage -----------------------------------------------------------------

EVE = "E1"
MOTHER = "M1"
FATHER = "F1"

SHIP_TAGS = frozenset({"international", "ship"})
IRAN_TAGS = frozenset({"iran", "ship"})


@dataclass
class ShipVoyage:
    frames: tuple[LegalFrame, ...]
    store: RegistryStore
    day1: datetime
    arrival_day: int = 5  # first day in the stricter jurisdiction

    def day(self, n: int) -> datetime:
        """Midday of voyage day n (day 1 = first day at sea)."""
        return self.day1 + timedelta(days=n - 1, hours=12)

    def tags(self, n: int) -> frozenset[str]:
        return IRAN_TAGS if n >= self.arrival_day else SHIP_TAGS

    def ctx(self, n: int, companion: str | None = None):
        params = {"companion": companion} if companion else {}
        return make_context(self.day(n), self.tags(n), "enter_sauna", params)


def ship_voyage(day1: str = "2026-06-01T00:00:00", log_path=None) -> ShipVoyage:
    """The family passage: Eve turns 14 on day 3; arrival in the stricter
    jurisdiction on day 5 changes the sauna rules while the data stays put."""
    start = utc(day1)
    horizon = start + timedelta(days=365)
    arrival = start + timedelta(days=4)  # day 5, 00:00

    store = RegistryStore(log_path)
    store.define_registry(
        schema("pax", "nin",
               ("nin", "national-id", False),
               ("sex", "string", False),
               ("date_of_birth", "date", False),
               ("cabin_class", "integer", False),
               ("mother", "national-id"),
               ("father", "national-id")),
        requester="GOV", at=start)
    store.define_registry(
        schema("sauna_fees", "nin",
               ("nin", "national-id", False),
               ("paid_on", "date", False)),
        requester="GOV", at=start)

    eve_dob = (start + timedelta(days=2)).date().replace(year=start.year - 14)
    people = [
        {"nin": EVE, "sex": "f", "date_of_birth": eve_dob.isoformat(),
         "cabin_class": 2, "mother": MOTHER, "father": FATHER},
        {"nin": MOTHER, "sex": "f", "date_of_birth": "1990-09-22",
         "cabin_class": 2, "mother": None, "father": None},
        {"nin": FATHER, "sex": "m", "date_of_birth": "1988-03-10",
         "cabin_class": 2, "mother": None, "father": None},
    ]
    for row in people:
        store.apply_write("insert", "pax", row["nin"], row,
                          requester="GOV", at=start, receipt_id=GENESIS)
    for nin in (EVE, MOTHER, FATHER):
        store.apply_write("insert", "sauna_fees", nin,
                          {"nin": nin, "paid_on": start.date().isoformat()},
                          requester="GOV", at=start, receipt_id=GENESIS)

    fee_paid = exists("sauna_fees", cmp("row.nin", "=", "@subject.nin"))

    ship = LegalFrame(
        frame_id="ship-house-rules", community_id="ship", version=1,
        valid_from=start, valid_to=horizon,
        jurisdiction_tags=SHIP_TAGS, priority=10,
        subject_registry="pax",
        atom_vocabulary=frozenset({"enter_sauna_ok", "sauna_fee_settled"}),
        request_vocabulary=frozenset({"enter_sauna"}),
        status_rules=(
            StatusRule("st_passenger", "passenger", cmp("subject.nin", "is-not-null")),
            StatusRule("st_class_1", "class_1", cmp("subject.cabin_class", "=", 1)),
            StatusRule("st_class_2", "class_2", cmp("subject.cabin_class", "=", 2)),
            StatusRule("st_under_14", "under_14", cmp("derived.age", "<", 14)),
            StatusRule("st_age_14_plus", "age_14_plus", cmp("derived.age", ">=", 14)),
        ),
        grant_rules=(
            GrantRule("gr_adult_entry", has_status("age_14_plus"),
                      _grants("enter_sauna_ok")),
            GrantRule("gr_fee_first_class", has_status("class_1"),
                      _grants("sauna_fee_settled")),
            GrantRule("gr_fee_paid", fee_paid, _grants("sauna_fee_settled")),
        ),
        request_rules=(
            RequestRule("rq_enter_sauna", "enter_sauna", TRUE,
                        _grants("enter_sauna_ok", "sauna_fee_settled")),
        ),
    )

    companion_present = cmp("context.companion", "is-not-null")
    iran = LegalFrame(
        frame_id="iran-sauna-rules", community_id="iran", version=1,
        valid_from=arrival, valid_to=horizon,
        jurisdiction_tags=IRAN_TAGS, priority=20,
        subject_registry="pax",
        atom_vocabulary=frozenset({"sauna_entry_iran_ok", "sauna_fee_settled"}),
        request_vocabulary=frozenset({"enter_sauna"}),
        status_rules=(
            StatusRule("st_passenger", "passenger", cmp("subject.nin", "is-not-null")),
            StatusRule("st_class_1", "class_1", cmp("subject.cabin_class", "=", 1)),
            StatusRule("st_class_2", "class_2", cmp("subject.cabin_class", "=", 2)),
            StatusRule("st_age_20_plus", "age_20_plus", cmp("derived.age", ">=", 20)),
            # Single-sex usage without occupancy modeling: entry always takes a
            # same-sex companion; under 20 the companion must be a close relative.
            StatusRule("st_same_sex_companion", "same_sex_companion",
                       all_of(companion_present,
                              cmp("companion.sex", "=", "@subject.sex"))),
            StatusRule("st_close_relative_companion", "close_relative_companion",
                       all_of(companion_present,
                              any_of(cmp("subject.mother", "=", "@companion.nin"),
                                     cmp("subject.father", "=", "@companion.nin"),
                                     cmp("companion.mother", "=", "@subject.nin"),
                                     cmp("companion.father", "=", "@subject.nin")))),
        ),
        grant_rules=(
            GrantRule("gr_adult_same_sex",
                      all_of(has_status("age_20_plus"), has_status("same_sex_companion")),
                      _grants("sauna_entry_iran_ok")),
            GrantRule("gr_minor_with_relative",
                      all_of(has_status("same_sex_companion"),
                             has_status("close_relative_companion")),
                      _grants("sauna_entry_iran_ok")),
            GrantRule("gr_fee_first_class", has_status("class_1"),
                      _grants("sauna_fee_settled")),
            GrantRule("gr_fee_paid", fee_paid, _grants("sauna_fee_settled")),
        ),
        request_rules=(
            RequestRule("rq_enter_sauna", "enter_sauna", TRUE,
                        _grants("sauna_entry_iran_ok", "sauna_fee_settled")),
        ),
    )

    schemas = {rid: store.view().schema(rid) for rid in store.view().registries()}
    validate_frame(ship, schemas)
    validate_frame(iran, schemas)
    return ShipVoyage(frames=(ship, iran), store=store, day1=start)


# --- child support ------------------------------------------------------------------

SI_SOCIAL_TAGS = frozenset({"si-social"})

PARENT = "PA1"
OTHER_PARENT = "PB1"
CHILDREN = ("C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "C9")


@dataclass
class ChildSupport:
    frames: tuple[LegalFrame, ...]
    store: RegistryStore
    now: datetime
    people: dict[str, dict]

    def claim_ctx(self, claimant_child: str):
        return make_context(self.now, SI_SOCIAL_TAGS, "claim_child_support",
                            {"companion": claimant_child})

    def base_ctx(self):
        return make_context(self.now, SI_SOCIAL_TAGS)


def child_support(now: str = "2026-06-15T09:00:00", log_path=None) -> ChildSupport:
    """Civil + employment registries and the support-eligibility frame.

    The children cover each condition boundary: C1 plainly eligible, C2 just
    27, C3 still 26, C4 married, C5 employed, C6 resident abroad, C7 child of
    the other parent, C8 adult child in a separate household (self-claim),
    C9 adult child still living with the parent.
    """
    at = utc(now)
    store = RegistryStore(log_path)
    store.define_registry(
        schema("rc", "nin",
               ("nin", "national-id", False),
               ("date_of_birth", "date", False),
               ("adr", "string", False),
               ("child_of", "national-id"),
               ("married_to", "national-id")),
        requester="GOV", at=at)
    store.define_registry(
        schema("re", "empl",
               ("boss", "national-id", False),
               ("empl", "national-id", False)),
        requester="GOV", at=at)
    store.define_registry(
        schema("cs_payments", "child",
               ("child", "national-id", False),
               ("period", "string", False),
               ("amount", "integer", False)),
        requester="GOV", at=at)
    store.define_registry(
        schema("cs_officials", "nin",
               ("nin", "national-id", False),
               ("role", "string", False)),
        requester="GOV", at=at)

    home = "SI:Ljubljana:Trg-1"
    abroad = "AT:Wien:Ring-3"
    people = {
        PARENT: {"nin": PARENT, "date_of_birth": "1975-02-11", "adr": home,
                 "child_of": None, "married_to": None},
        OTHER_PARENT: {"nin": OTHER_PARENT, "date_of_birth": "1972-09-30",
                       "adr": "SI:Celje:Cesta-9", "child_of": None, "married_to": None},
        "C1": {"nin": "C1", "date_of_birth": "2006-01-20", "adr": home,
               "child_of": PARENT, "married_to": None},
        "C2": {"nin": "C2", "date_of_birth": "1999-05-01", "adr": home,
               "child_of": PARENT, "married_to": None},   # 27: too old
        "C3": {"nin": "C3", "date_of_birth": "1999-07-01", "adr": home,
               "child_of": PARENT, "married_to": None},   # 26: boundary, eligible
        "C4": {"nin": "C4", "date_of_birth": "2004-03-03", "adr": home,
               "child_of": PARENT, "married_to": "X9"},   # married
        "C5": {"nin": "C5", "date_of_birth": "2003-08-08", "adr": home,
               "child_of": PARENT, "married_to": None},   # employed (re row)
        "C6": {"nin": "C6", "date_of_birth": "2005-12-12", "adr": abroad,
               "child_of": PARENT, "married_to": None},   # abroad
        "C7": {"nin": "C7", "date_of_birth": "2007-04-04", "adr": home,
               "child_of": OTHER_PARENT, "married_to": None},  # other parent's child
        "C8": {"nin": "C8", "date_of_birth": "2005-06-06", "adr": "SI:Maribor:Glavni-5",
               "child_of": PARENT, "married_to": None},   # separate household
        "C9": {"nin": "C9", "date_of_birth": "2004-10-10", "adr": home,
               "child_of": PARENT, "married_to": None},   # still at home
        "SO1": {"nin": "SO1", "date_of_birth": "1980-01-01", "adr": home,
                "child_of": None, "married_to": None},    # social officer
    }
    for nin, row in people.items():
        store.apply_write("insert", "rc", nin, row, requester="GOV", at=at,
                          receipt_id=GENESIS)
    store.apply_write("insert", "re", "C5", {"boss": "B7", "empl": "C5"},
                      requester="GOV", at=at, receipt_id=GENESIS)
    store.apply_write("insert", "cs_officials", "SO1", {"nin": "SO1", "role": "officer"},
                      requester="GOV", at=at, receipt_id=GENESIS)

    child_given = cmp("context.companion", "is-not-null")
    # Residence in Slovenia: addresses carry an ISO country prefix, so the
    # check is a lexicographic prefix range over "SI:".
    child_resident = all_of(cmp("companion.adr", ">=", "SI:"),
                            cmp("companion.adr", "<", "SI;"))
    child_unemployed = negate(exists("re", cmp("row.empl", "=", "@companion.nin")))
    separate_household = negate(exists(
        "rc", all_of(cmp("row.nin", "=", "@subject.child_of"),
                     cmp("row.adr", "=", "@subject.adr"))))

    frame = LegalFrame(
        frame_id="si-child-support", community_id="si", version=1,
        valid_from=utc("2026-01-01T00:00:00"), valid_to=utc("2030-01-01T00:00:00"),
        jurisdiction_tags=SI_SOCIAL_TAGS, priority=10,
        subject_registry="rc",
        atom_vocabulary=frozenset({"child_support_ok", "cs_period_free_ok",
                                   "rc_read_other_ok", "rc_read_all_ok"}),
        request_vocabulary=frozenset({"claim_child_support", "insert(cs_payments)",
                                      "write(cs_payments,period)",
                                      "write(cs_payments,amount)", "read(rc)",
                                      "read(cs_payments)"}),
        status_rules=(
            StatusRule("st_child_conditions", "cs_child_ok",
                       all_of(child_given,
                              child_resident,
                              cmp("companion.married_to", "is-null"),
                              child_unemployed,
                              cmp("derived.companion_age", "<", 27))),
            StatusRule("st_claimant_parent", "cs_claimant_parent",
                       all_of(child_given,
                              cmp("companion.child_of", "=", "@subject.nin"))),
            StatusRule("st_claimant_self", "cs_claimant_self",
                       all_of(child_given,
                              cmp("companion.nin", "=", "@subject.nin"),
                              cmp("derived.age", ">=", 18),
                              separate_household)),
            StatusRule("st_period_free", "cs_period_free",
                       all_of(cmp("context.period", "is-not-null"),
                              negate(exists("cs_payments",
                                            all_of(cmp("row.child", "=", "@context.companion"),
                                                   cmp("row.period", "=", "@context.period")))))),
            StatusRule("st_officer", "cs_officer",
                       exists("cs_officials", cmp("row.nin", "=", "@subject.nin"))),
        ),
        grant_rules=(
            GrantRule("gr_support",
                      all_of(has_status("cs_child_ok"),
                             any_of(has_status("cs_claimant_parent"),
                                    has_status("cs_claimant_self"))),
                      _grants("child_support_ok")),
            GrantRule("gr_period", has_status("cs_period_free"),
                      _grants("cs_period_free_ok")),
            GrantRule("gr_officer_reads", has_status("cs_officer"),
                      _grants("rc_read_other_ok", "rc_read_all_ok")),
        ),
        request_rules=(
            RequestRule("rq_claim", "claim_child_support", TRUE,
                        _grants("child_support_ok")),
        ),
        access_rules=(
            RequestRule("ar_pay_insert", "insert(cs_payments)", TRUE,
                        _grants("child_support_ok", "cs_period_free_ok")),
            RequestRule("ar_pay_update_period", "write(cs_payments,period)", TRUE,
                        _grants("child_support_ok", "cs_period_free_ok")),
            RequestRule("ar_pay_update_amount", "write(cs_payments,amount)", TRUE,
                        _grants("child_support_ok", "cs_period_free_ok")),
            RequestRule("ar_rc_read_self", "read(rc)",
                        cmp("context.key", "=", "@context.requester"),
                        frozenset()),
            RequestRule("ar_rc_read_other", "read(rc)",
                        all_of(cmp("context.key", "is-not-null"),
                               cmp("context.key", "!=", "@context.requester")),
                        _grants("rc_read_other_ok")),
            RequestRule("ar_rc_read_all", "read(rc)",
                        cmp("context.key", "is-null"),
                        _grants("rc_read_all_ok")),
            RequestRule("ar_pay_read", "read(cs_payments)", TRUE, frozenset()),
        ),
    )
    schemas = {rid: store.view().schema(rid) for rid in store.view().registries()}
    validate_frame(frame, schemas)
    return ChildSupport(frames=(frame,), store=store, now=at, people=people)


# --- driver's license ------------------------------------------------------------------

SI_TRAFFIC_TAGS = frozenset({"si-traffic"})

CANDIDATE = "D1"
PRESIDENT = "P1"
INSPECTOR = "I1"


@dataclass
class DriverLicense:
    frames: tuple[LegalFrame, ...]
    store: RegistryStore
    now: datetime

    def drive_ctx(self, at: datetime | None = None):
        return make_context(at or self.now, SI_TRAFFIC_TAGS, "drive")

    def base_ctx(self, at: datetime | None = None):
        return make_context(at or self.now, SI_TRAFFIC_TAGS)


def driver_license(now: str = "2026-06-15T08:00:00", log_path=None) -> DriverLicense:
    at = utc(now)
    store = RegistryStore(log_path)
    store.define_registry(
        schema("rc", "nin",
               ("nin", "national-id", False),
               ("date_of_birth", "date", False),
               ("adr", "string", False),
               ("child_of", "national-id"),
               ("married_to", "national-id")),
        requester="GOV", at=at)
    store.define_registry(
        schema("exam_register", "candidate",
               ("candidate", "national-id", False),
               ("passed_at", "date", False),
               ("by", "national-id", False)),
        requester="GOV", at=at)
    store.define_registry(
        schema("commission", "nin",
               ("nin", "national-id", False),
               ("role", "string", False)),
        requester="GOV", at=at)
    store.define_registry(
        schema("med_fitness", "nin",
               ("nin", "national-id", False),
               ("fit", "boolean", False)),
        requester="GOV", at=at)

    for nin, dob in ((CANDIDATE, "2000-05-05"), (PRESIDENT, "1970-01-15"),
                     (INSPECTOR, "1968-11-02")):
        store.apply_write("insert", "rc", nin,
                          {"nin": nin, "date_of_birth": dob, "adr": "SI:Ljubljana:Trg-2",
                           "child_of": None, "married_to": None},
                          requester="GOV", at=at, receipt_id=GENESIS)
    store.apply_write("insert", "commission", PRESIDENT,
                      {"nin": PRESIDENT, "role": "president"},
                      requester="GOV", at=at, receipt_id=GENESIS)
    store.apply_write("insert", "commission", INSPECTOR,
                      {"nin": INSPECTOR, "role": "inspector"},
                      requester="GOV", at=at, receipt_id=GENESIS)
    store.apply_write("insert", "med_fitness", CANDIDATE,
                      {"nin": CANDIDATE, "fit": True},
                      requester="GOV", at=at, receipt_id=GENESIS)

    frame = LegalFrame(
        frame_id="si-traffic", community_id="si", version=1,
        valid_from=utc("2026-01-01T00:00:00"), valid_to=utc("2030-01-01T00:00:00"),
        jurisdiction_tags=SI_TRAFFIC_TAGS, priority=10,
        subject_registry="rc",
        atom_vocabulary=frozenset({"drive_ok", "exam_insert_ok", "exam_delete_ok",
                                   "exam_read_ok"}),
        request_vocabulary=frozenset({"drive", "insert(exam_register)",
                                      "delete(exam_register)", "read(exam_register)"}),
        status_rules=(
            StatusRule("st_exam_passed", "exam_passed",
                       exists("exam_register", cmp("row.candidate", "=", "@subject.nin"))),
            StatusRule("st_adult", "adult", cmp("derived.age", ">=", 18)),
            StatusRule("st_fit", "fit",
                       exists("med_fitness", all_of(cmp("row.nin", "=", "@subject.nin"),
                                                    cmp("row.fit", "=", True)))),
            StatusRule("st_president", "commission_president",
                       exists("commission", all_of(cmp("row.nin", "=", "@subject.nin"),
                                                   cmp("row.role", "=", "president")))),
            StatusRule("st_inspector", "inspector",
                       exists("commission", all_of(cmp("row.nin", "=", "@subject.nin"),
                                                   cmp("row.role", "=", "inspector")))),
        ),
        grant_rules=(
            GrantRule("gr_drive",
                      all_of(has_status("exam_passed"), has_status("adult"),
                             has_status("fit")),
                      _grants("drive_ok")),
            GrantRule("gr_exam_insert", has_status("commission_president"),
                      _grants("exam_insert_ok")),
            GrantRule("gr_exam_delete", has_status("inspector"),
                      _grants("exam_delete_ok")),
            GrantRule("gr_exam_read",
                      any_of(has_status("commission_president"), has_status("inspector")),
                      _grants("exam_read_ok")),
        ),
        request_rules=(
            RequestRule("rq_drive", "drive", TRUE, _grants("drive_ok")),
        ),
        access_rules=(
            RequestRule("ar_exam_insert", "insert(exam_register)", TRUE,
                        _grants("exam_insert_ok")),
            RequestRule("ar_exam_delete", "delete(exam_register)", TRUE,
                        _grants("exam_delete_ok")),
            RequestRule("ar_exam_read", "read(exam_register)", TRUE,
                        _grants("exam_read_ok")),
        ),
    )
    schemas = {rid: store.view().schema(rid) for rid in store.view().registries()}
    validate_frame(frame, schemas)
    return DriverLicense(frames=(frame,), store=store, now=at)


# --- land registry / escrow ----------------------------------------------------------

SI_LAND_TAGS = frozenset({"si-land"})

SELLER = "S1"
BUYER = "B1"
PARCEL = "P100"


@dataclass
class LandRegistry:
    frames: tuple[LegalFrame, ...]
    store: RegistryStore
    now: datetime

    def transfer_ctx(self, at: datetime | None = None):
        return make_context(at or self.now, SI_LAND_TAGS)


def land_registry(now: str = "2026-06-20T10:00:00", log_path=None) -> LandRegistry:
    at = utc(now)
    store = RegistryStore(log_path)
    store.define_registry(
        schema("land", "parcel",
               ("parcel", "national-id", False),
               ("owner", "national-id", False)),
        requester="GOV", at=at)
    store.apply_write("insert", "land", PARCEL, {"parcel": PARCEL, "owner": SELLER},
                      requester="GOV", at=at, receipt_id=GENESIS)

    frame = LegalFrame(
        frame_id="si-land", community_id="si", version=1,
        valid_from=utc("2026-01-01T00:00:00"), valid_to=utc("2030-01-01T00:00:00"),
        jurisdiction_tags=SI_LAND_TAGS, priority=10,
        subject_registry="land",
        atom_vocabulary=frozenset({"land_transfer_ok", "land_read_ok"}),
        request_vocabulary=frozenset({"write(land,owner)", "read(land)"}),
        grant_rules=(
            # Only the current owner of the targeted parcel may transfer it.
            GrantRule("gr_owner",
                      exists("land", all_of(cmp("row.parcel", "=", "@context.key"),
                                            cmp("row.owner", "=", "@context.requester"))),
                      _grants("land_transfer_ok")),
            GrantRule("gr_public_read", TRUE, _grants("land_read_ok")),
        ),
        access_rules=(
            RequestRule("ar_transfer", "write(land,owner)", TRUE,
                        _grants("land_transfer_ok")),
            RequestRule("ar_read", "read(land)", TRUE, _grants("land_read_ok")),
        ),
    )
    schemas = {rid: store.view().schema(rid) for rid in store.view().registries()}
    validate_frame(frame, schemas)
    return LandRegistry(frames=(frame,), store=store, now=at)
