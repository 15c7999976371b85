"""Authoritative payment state machine with actor authority and evidence gates.

The transition table is enforced at the ERP layer: every state change flows
through :func:`apply_transition`, which appends exactly one audit record per
call whether the event was applied or rejected.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional


class PaymentState(enum.Enum):
    CREATED = "Created"
    PAYMENT_INITIATED = "PaymentInitiated"
    AUTHORIZATION_PENDING = "AuthorizationPending"
    AUTHORIZED = "Authorized"
    CAPTURED = "Captured"
    SETTLED = "Settled"
    FAILED = "Failed"
    CANCELED = "Canceled"


TERMINAL_STATES = frozenset(
    {PaymentState.SETTLED, PaymentState.FAILED, PaymentState.CANCELED}
)

#: States that confer durable benefit and therefore require gateway evidence
#: somewhere on every path that reaches them.
PAID_STATES = frozenset({PaymentState.CAPTURED, PaymentState.SETTLED})


class EventKind(enum.Enum):
    INITIATE_PAYMENT = "InitiatePayment"
    FORWARD_TO_GATEWAY = "ForwardToGateway"
    AUTHORIZE_OK = "AuthorizeOk"
    AUTHORIZE_FAIL = "AuthorizeFail"
    CAPTURE = "Capture"
    SETTLE = "Settle"
    CANCEL = "Cancel"
    TIMEOUT = "Timeout"


class ActorKind(enum.Enum):
    CLIENT = "Client"
    PORTAL = "Portal"
    GATEWAY = "Gateway"
    ERP = "Erp"


#: Event kinds that must carry evidence; all others must carry none.
EVIDENCE_REQUIRED_KINDS = frozenset({EventKind.AUTHORIZE_OK, EventKind.CAPTURE})


@dataclass(frozen=True)
class Actor:
    kind: ActorKind
    identity: str = ""


@dataclass(frozen=True)
class TransitionEvent:
    kind: EventKind
    object_id: str
    attempt_id: int
    issuer: Actor
    evidence: Optional[object] = None
    logical_time: int = 0


@dataclass(frozen=True)
class BusinessObject:
    object_id: str
    owner_user_id: str
    amount: int  # minor currency units
    currency: str
    state: PaymentState = PaymentState.CREATED
    attempt_id: int = 1

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError(f"amount must be positive, got {self.amount}")


@dataclass(frozen=True)
class Rule:
    from_state: PaymentState
    event_kind: EventKind
    required_issuer: ActorKind
    evidence_required: bool
    to_state: PaymentState


TRANSITION_RULES: tuple[Rule, ...] = (
    Rule(PaymentState.CREATED, EventKind.INITIATE_PAYMENT,
         ActorKind.PORTAL, False, PaymentState.PAYMENT_INITIATED),
    Rule(PaymentState.PAYMENT_INITIATED, EventKind.FORWARD_TO_GATEWAY,
         ActorKind.PORTAL, False, PaymentState.AUTHORIZATION_PENDING),
    Rule(PaymentState.AUTHORIZATION_PENDING, EventKind.AUTHORIZE_OK,
         ActorKind.GATEWAY, True, PaymentState.AUTHORIZED),
    Rule(PaymentState.AUTHORIZATION_PENDING, EventKind.AUTHORIZE_FAIL,
         ActorKind.GATEWAY, False, PaymentState.FAILED),
    Rule(PaymentState.AUTHORIZATION_PENDING, EventKind.TIMEOUT,
         ActorKind.ERP, False, PaymentState.FAILED),
    Rule(PaymentState.AUTHORIZED, EventKind.CAPTURE,
         ActorKind.GATEWAY, True, PaymentState.CAPTURED),
    Rule(PaymentState.CAPTURED, EventKind.SETTLE,
         ActorKind.ERP, False, PaymentState.SETTLED),
    Rule(PaymentState.CREATED, EventKind.CANCEL,
         ActorKind.PORTAL, False, PaymentState.CANCELED),
    Rule(PaymentState.PAYMENT_INITIATED, EventKind.CANCEL,
         ActorKind.PORTAL, False, PaymentState.CANCELED),
)


class TransitionTable:
    """Deterministic rule set: at most one rule per (state, event kind)."""

    def __init__(self, rules: Iterable[Rule] = TRANSITION_RULES):
        self._rules: dict[tuple[PaymentState, EventKind], Rule] = {}
        for rule in rules:
            key = (rule.from_state, rule.event_kind)
            if key in self._rules:
                raise ValueError(f"duplicate rule for {key}")
            if rule.from_state in TERMINAL_STATES:
                raise ValueError(f"rule leaves terminal state {rule.from_state}")
            self._rules[key] = rule

    def lookup(self, state: PaymentState, kind: EventKind) -> Optional[Rule]:
        return self._rules.get((state, kind))

    def rules(self) -> tuple[Rule, ...]:
        return tuple(self._rules.values())


DEFAULT_TABLE = TransitionTable()


class Decision(enum.Enum):
    ALLOWED = "Allowed"
    REJECTED_ILLEGAL_TRANSITION = "RejectedIllegalTransition"
    REJECTED_WRONG_ACTOR = "RejectedWrongActor"
    REJECTED_MISSING_EVIDENCE = "RejectedMissingEvidence"
    REJECTED_INVALID_EVIDENCE = "RejectedInvalidEvidence"


@dataclass(frozen=True)
class AuditRecord:
    logical_time: int
    object_id: str
    event: TransitionEvent
    decision: Decision
    resulting_state: PaymentState


class ObjectIdMismatch(ValueError):
    """Caller error: event routed to the wrong business object."""


class AuditCorruption(Exception):
    """An Applied audit record contradicts the transition table."""


# An evidence verifier receives (evidence, object) and returns True to accept.
# Verifiers may have side effects (nonce consumption); validate_event calls
# the verifier at most once.
EvidenceVerifier = Callable[[object, BusinessObject], bool]


def allowed_transitions(
    state: PaymentState, table: TransitionTable = DEFAULT_TABLE
) -> set[tuple[EventKind, ActorKind, bool]]:
    """All (event kind, required issuer, evidence required) rules leaving `state`."""
    return {
        (r.event_kind, r.required_issuer, r.evidence_required)
        for r in table.rules()
        if r.from_state == state
    }


def validate_event(
    obj: BusinessObject,
    event: TransitionEvent,
    evidence_verifier: EvidenceVerifier,
    table: TransitionTable = DEFAULT_TABLE,
) -> Decision:
    """Decide an event against the table; rejections ordered most-specific-first.

    Ordering: illegal transition > wrong actor > missing evidence > invalid
    evidence. Evidence attached to a kind that must not carry any is treated
    as invalid evidence, so only exact table tuples can be Allowed.
    """
    if event.object_id != obj.object_id:
        raise ObjectIdMismatch(
            f"event for {event.object_id!r} applied to {obj.object_id!r}"
        )
    rule = table.lookup(obj.state, event.kind)
    if rule is None:
        return Decision.REJECTED_ILLEGAL_TRANSITION
    if event.issuer.kind != rule.required_issuer:
        return Decision.REJECTED_WRONG_ACTOR
    if rule.evidence_required:
        if event.evidence is None:
            return Decision.REJECTED_MISSING_EVIDENCE
        if not evidence_verifier(event.evidence, obj):
            return Decision.REJECTED_INVALID_EVIDENCE
    elif event.evidence is not None:
        return Decision.REJECTED_INVALID_EVIDENCE
    return Decision.ALLOWED


def apply_transition(
    obj: BusinessObject,
    event: TransitionEvent,
    evidence_verifier: EvidenceVerifier,
    table: TransitionTable = DEFAULT_TABLE,
) -> tuple[BusinessObject, AuditRecord]:
    """Apply or reject an event; always produces exactly one audit record."""
    decision = validate_event(obj, event, evidence_verifier, table)
    if decision is Decision.ALLOWED:
        rule = table.lookup(obj.state, event.kind)
        new_obj = replace(obj, state=rule.to_state)
    else:
        new_obj = obj
    record = AuditRecord(
        logical_time=event.logical_time,
        object_id=obj.object_id,
        event=event,
        decision=decision,
        resulting_state=new_obj.state,
    )
    return new_obj, record


def replay_audit(
    records: Iterable[AuditRecord],
    initial: BusinessObject,
    table: TransitionTable = DEFAULT_TABLE,
) -> PaymentState:
    """Fold Applied records for the initial object's attempt through the table."""
    state = initial.state
    for record in records:
        if record.object_id != initial.object_id:
            raise ObjectIdMismatch(
                f"record for {record.object_id!r} in audit of {initial.object_id!r}"
            )
        if record.decision is not Decision.ALLOWED:
            continue
        if record.event.attempt_id != initial.attempt_id:
            continue
        rule = table.lookup(state, record.event.kind)
        if rule is None:
            raise AuditCorruption(
                f"applied {record.event.kind.value} has no rule from {state.value}"
            )
        if rule.to_state != record.resulting_state:
            raise AuditCorruption(
                f"applied {record.event.kind.value} recorded "
                f"{record.resulting_state.value}, table says {rule.to_state.value}"
            )
        state = rule.to_state
    return state
