"""Deterministic generator for the loan-application benchmark log.

The original BPI Challenge 2012 log is not redistributable, so the
toolkit ships a synthetic stand-in that reproduces its published
summary statistics exactly: 13,087 cases, 262,200 events, 24 distinct
activities, and the per-activity occurrence counts (with worker tasks
counted in state COMPLETE; the never-completed contract-change task
appears only as SCHEDULE events). Case compositions are additionally
calibrated so that the mined control network reproduces the published
baseline inference column.

Generation is fully deterministic: no RNG is involved anywhere.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

from .eventlog import EventLog, EventRecord, Lifecycle
from .procmine import MergeRule

# activity names (A_ = automatic application states, O_ = offers,
# W_ = manual worker tasks)
A_SUBMITTED = "A_SUBMITTED"
A_PARTLYSUBMITTED = "A_PARTLYSUBMITTED"
A_PREACCEPTED = "A_PREACCEPTED"
A_ACCEPTED = "A_ACCEPTED"
A_FINALIZED = "A_FINALIZED"
A_CANCELLED = "A_CANCELLED"
A_DECLINED = "A_DECLINED"
A_APPROVED = "A_APPROVED"
A_REGISTERED = "A_REGISTERED"
A_ACTIVATED = "A_ACTIVATED"
O_SELECTED = "O_SELECTED"
O_CREATED = "O_CREATED"
O_SENT = "O_SENT"
O_SENT_BACK = "O_SENT_BACK"
O_ACCEPTED = "O_ACCEPTED"
O_CANCELLED = "O_CANCELLED"
O_DECLINED = "O_DECLINED"
W_CALL_AFTER_OFFERS = "W_Calling after sent offers"
W_ASSESS_APPLICATION = "W_Assessing the application"
W_FILL_INFORMATION = "W_Filling in information"
W_FIX_INCOMING_LEAD = "W_Fixing incoming lead"
W_CALL_MISSING_INFO = "W_Calling to add missing information"
W_RATE_FRAUD = "W_Rate fraud"
W_CHANGE_CONTRACT = "W_Change contract details"

A_START_APPLICATION = "A_START_APPLICATION"
A_CREDIT_APPROVED = "A_CREDIT_APPROVED"
O_OFFER_SENT = "O_OFFER_SENT"

N_CASES = 13_087
N_EVENTS = 262_200

# published per-activity occurrence counts (W_ tasks: COMPLETE state)
OCCURRENCE_TARGETS = {
    A_SUBMITTED: 13_087,
    A_PARTLYSUBMITTED: 13_087,
    A_PREACCEPTED: 7_367,
    A_ACCEPTED: 5_113,
    A_FINALIZED: 5_015,
    A_CANCELLED: 2_807,
    A_DECLINED: 7_635,
    A_APPROVED: 2_246,
    A_REGISTERED: 2_246,
    A_ACTIVATED: 2_246,
    O_SELECTED: 7_030,
    O_CREATED: 7_030,
    O_SENT: 7_030,
    O_SENT_BACK: 3_454,
    O_ACCEPTED: 2_243,
    O_CANCELLED: 3_655,
    O_DECLINED: 802,
    W_CALL_AFTER_OFFERS: 52_016,
    W_ASSESS_APPLICATION: 20_809,
    W_FILL_INFORMATION: 54_850,
    W_FIX_INCOMING_LEAD: 16_566,
    W_CALL_MISSING_INFO: 25_190,
    W_RATE_FRAUD: 664,
    W_CHANGE_CONTRACT: 0,
}

# the contract-change task exists only as scheduled work; these events
# pad the raw total to 262,200 and vanish under the COMPLETE filter
N_SCHEDULED_CONTRACT_CHANGES = 12

# redundant-task groups identified by the analysis
DEFAULT_MERGE_RULES = (
    MergeRule(members=(A_SUBMITTED, A_PARTLYSUBMITTED), merged_name=A_START_APPLICATION),
    MergeRule(
        members=(A_APPROVED, A_ACTIVATED, A_REGISTERED), merged_name=A_CREDIT_APPROVED
    ),
    MergeRule(members=(O_SELECTED, O_CREATED, O_SENT), merged_name=O_OFFER_SENT),
)

# presence-frequency calibration targets for the post-merge variables
# (the baseline inference column the control network should reproduce)
CONTROL_MARGINAL_TARGETS = {
    A_PREACCEPTED: 0.0673,
    A_ACCEPTED: 0.0460,
    A_DECLINED: 0.0401,
    O_SENT_BACK: 0.0287,
    O_CANCELLED: 0.0416,
    O_DECLINED: 0.0115,
    W_ASSESS_APPLICATION: 0.0443,
    W_FILL_INFORMATION: 0.3228,
    W_CALL_AFTER_OFFERS: 0.0441,
    W_CALL_MISSING_INFO: 0.0227,
    A_CREDIT_APPROVED: 0.0288,
    O_ACCEPTED: 0.0288,
    O_OFFER_SENT: 0.0443,
    W_RATE_FRAUD: 0.0074,
    A_FINALIZED: 0.0452,
    A_CANCELLED: 0.0399,
    W_FIX_INCOMING_LEAD: 0.3881,
}

# case-archetype id ranges (1-based, inclusive); see _build_case
_APPROVED = (1, 377)
_APPROVED_CANCEL_TAIL = (1, 20)
_APPROVED_ASSESS_FIRST = (21, 189)
_APPROVED_CALL_FIRST = (190, 377)
_OFFER_LOST = (378, 580)
_OFFER_LOST_DECLINED = (378, 527)
_FIN_CANCELLED = (581, 592)
_ACC_CANCELLED = (593, 602)
_FIX_PRE_CANCELLED = (603, 881)
_DECLINED = (882, 1406)
_DECLINED_FRAUD_BEFORE = (882, 929)
_DECLINED_FRAUD_AFTER = (930, 978)
_FILL_ONLY = (1407, 4771)
_FILL_CALL_MISSING = (1407, 1703)
_FILL_CANCELLED = (1704, 1924)
_FILL_OFFER_CANCELLED = (1925, 2265)
_FIX_ONLY = (4772, 9046)
_IDLE = (9047, 13087)
_IDLE_SCHEDULED = (9047, 9058)

_EPOCH = datetime(2011, 10, 1, tzinfo=timezone.utc)


def _in(case: int, span) -> bool:
    return span[0] <= case <= span[1]


def _members(*spans):
    ids = []
    for lo, hi in spans:
        ids.extend(range(lo, hi + 1))
    return ids


def _quotas(total: int, member_ids) -> dict:
    """Split ``total`` events across members: ascending ids, the first
    (total mod n) members receive one extra event."""
    n = len(member_ids)
    base, extra = divmod(total, n)
    return {cid: base + (1 if k < extra else 0) for k, cid in enumerate(member_ids)}


def _activity_quotas() -> dict:
    spans = {
        A_PREACCEPTED: (_APPROVED, _OFFER_LOST, _FIN_CANCELLED, _ACC_CANCELLED, _FIX_PRE_CANCELLED),
        A_ACCEPTED: (_APPROVED, _OFFER_LOST, _FIN_CANCELLED, _ACC_CANCELLED),
        A_FINALIZED: (_APPROVED, _OFFER_LOST, _FIN_CANCELLED),
        A_CANCELLED: (_FIN_CANCELLED, _ACC_CANCELLED, _FIX_PRE_CANCELLED, _FILL_CANCELLED),
        A_DECLINED: (_DECLINED,),
        O_SELECTED: (_APPROVED, _OFFER_LOST),
        O_SENT_BACK: (_OFFER_LOST,),
        O_ACCEPTED: (_APPROVED,),
        O_CANCELLED: (_APPROVED_CANCEL_TAIL, _OFFER_LOST, _FILL_OFFER_CANCELLED),
        O_DECLINED: (_OFFER_LOST_DECLINED,),
        A_APPROVED: (_APPROVED,),
        W_CALL_AFTER_OFFERS: (_APPROVED, _OFFER_LOST),
        W_ASSESS_APPLICATION: (_APPROVED, _OFFER_LOST),
        W_FILL_INFORMATION: (_APPROVED, _OFFER_LOST, _FIX_PRE_CANCELLED, _FILL_ONLY),
        W_FIX_INCOMING_LEAD: (_FIX_PRE_CANCELLED, _DECLINED, _FIX_ONLY),
        W_CALL_MISSING_INFO: (_FILL_CALL_MISSING,),
        W_RATE_FRAUD: (_DECLINED_FRAUD_BEFORE, _DECLINED_FRAUD_AFTER),
    }
    quotas = {}
    for activity, member_spans in spans.items():
        quotas[activity] = _quotas(
            OCCURRENCE_TARGETS[activity], _members(*member_spans)
        )
    return quotas


def _tail_zone(q_call: int, q_fill: int):
    """Alternating call/fill tail: q_fill single fill events separate
    q_call calling events, starting with calls and ending with a fill."""
    base, extra = divmod(q_call, q_fill)
    seq = []
    for run in range(q_fill):
        seq.extend([W_CALL_AFTER_OFFERS] * (base + (1 if run < extra else 0)))
        seq.append(W_FILL_INFORMATION)
    return seq


def _build_case(case: int, q: dict) -> list[str]:
    def reps(activity):
        return [activity] * q[activity][case]

    def triples(first, second, third, count):
        seq = []
        for _ in range(count):
            seq.extend((first, second, third))
        return seq

    seq = [A_SUBMITTED, A_PARTLYSUBMITTED]

    if _in(case, _APPROVED) or _in(case, _OFFER_LOST):
        seq += reps(A_PREACCEPTED) + reps(A_ACCEPTED) + reps(A_FINALIZED)
        seq += triples(O_SELECTED, O_CREATED, O_SENT, q[O_SELECTED][case])
        if _in(case, _APPROVED):
            seq += reps(O_ACCEPTED)
            seq += triples(A_APPROVED, A_ACTIVATED, A_REGISTERED, q[A_APPROVED][case])
            zone = _tail_zone(q[W_CALL_AFTER_OFFERS][case], q[W_FILL_INFORMATION][case])
            if _in(case, _APPROVED_CANCEL_TAIL):
                seq += reps(O_CANCELLED) + reps(W_ASSESS_APPLICATION) + zone
            elif _in(case, _APPROVED_ASSESS_FIRST):
                seq += reps(W_ASSESS_APPLICATION) + zone
            else:
                seq += zone + reps(W_ASSESS_APPLICATION)
        else:
            seq += reps(O_SENT_BACK)
            if _in(case, _OFFER_LOST_DECLINED):
                seq += reps(O_DECLINED)
            seq += reps(O_CANCELLED) + reps(W_ASSESS_APPLICATION)
            seq += _tail_zone(q[W_CALL_AFTER_OFFERS][case], q[W_FILL_INFORMATION][case])
    elif _in(case, _FIN_CANCELLED):
        seq += reps(A_PREACCEPTED) + reps(A_ACCEPTED) + reps(A_FINALIZED) + reps(A_CANCELLED)
    elif _in(case, _ACC_CANCELLED):
        seq += reps(A_PREACCEPTED) + reps(A_ACCEPTED) + reps(A_CANCELLED)
    elif _in(case, _FIX_PRE_CANCELLED):
        seq += (
            reps(W_FIX_INCOMING_LEAD)
            + reps(A_PREACCEPTED)
            + reps(W_FILL_INFORMATION)
            + reps(A_CANCELLED)
        )
    elif _in(case, _DECLINED):
        seq += reps(W_FIX_INCOMING_LEAD)
        if _in(case, _DECLINED_FRAUD_BEFORE):
            seq += reps(W_RATE_FRAUD) + reps(A_DECLINED)
        elif _in(case, _DECLINED_FRAUD_AFTER):
            seq += reps(A_DECLINED) + reps(W_RATE_FRAUD)
        else:
            seq += reps(A_DECLINED)
    elif _in(case, _FILL_ONLY):
        seq += reps(W_FILL_INFORMATION)
        if _in(case, _FILL_CALL_MISSING):
            seq += reps(W_CALL_MISSING_INFO)
        elif _in(case, _FILL_CANCELLED):
            seq += reps(A_CANCELLED)
        elif _in(case, _FILL_OFFER_CANCELLED):
            seq += reps(O_CANCELLED)
    elif _in(case, _FIX_ONLY):
        seq += reps(W_FIX_INCOMING_LEAD)
    # _IDLE cases stop after submission

    return seq


def generate_loan_log() -> EventLog:
    """Build the benchmark event log (deterministic)."""
    quotas = _activity_quotas()
    log = EventLog()
    for case in range(1, N_CASES + 1):
        case_id = f"case_{case:05d}"
        start = _EPOCH + timedelta(minutes=case - 1)
        seq = _build_case(case, quotas)
        step = 0
        for activity in seq:
            lifecycle = (
                Lifecycle.COMPLETE if activity.startswith("W_") else Lifecycle.NONE
            )
            log.add(
                EventRecord(
                    case_id, activity, lifecycle, start + timedelta(seconds=step)
                )
            )
            step += 1
        if _in(case, _IDLE_SCHEDULED):
            log.add(
                EventRecord(
                    case_id,
                    W_CHANGE_CONTRACT,
                    Lifecycle.SCHEDULE,
                    start + timedelta(seconds=step),
                )
            )
    log.sort_cases()
    return log
