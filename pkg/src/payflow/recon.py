"""Ledger reconciliation and transcript anomaly scanning.

Both are pure functions over immutable snapshots: reconcile compares the
portal's believed payment states against the ERP ledger, and scan_transcript
flags suspicious request patterns after a run.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

from .actors import ErpStore, PortalRecord, PortalViewState, TranscriptRecord
from .fsm import PAID_STATES, PaymentState
from .http_model import parse_request


class DiscrepancyKind(enum.Enum):
    PORTAL_AHEAD_OF_ERP = "PortalAheadOfErp"
    ERP_AHEAD_OF_PORTAL = "ErpAheadOfPortal"
    MISSING_IN_PORTAL = "MissingInPortal"
    MISSING_IN_ERP = "MissingInErp"


@dataclass(frozen=True)
class Discrepancy:
    object_id: str
    portal_view_state: str
    erp_state: str
    kind: DiscrepancyKind
    detected_at: int

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "portal_view_state": self.portal_view_state,
            "erp_state": self.erp_state,
            "kind": self.kind.value,
            "detected_at": self.detected_at,
        }


class AnomalyKind(enum.Enum):
    PARTIAL_FLOW_REPEAT = "PartialFlowRepeat"
    UNEXPECTED_PARAM = "UnexpectedParam"
    OUT_OF_ORDER_ENDPOINT = "OutOfOrderEndpoint"
    DUPLICATE_REQUEST = "DuplicateRequest"


@dataclass(frozen=True)
class AnomalyEvent:
    kind: AnomalyKind
    session_id: str
    evidence: tuple[int, ...]  # transcript indices, always >= 1
    tick: int

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "session_id": self.session_id,
            "evidence": list(self.evidence),
            "tick": self.tick,
        }


@dataclass(frozen=True)
class ScanConfig:
    #: payment starts without completion in one session before flagging
    partial_flow_threshold: int = 3
    #: window (ticks) within which a byte-identical repeat is suspicious
    duplicate_window: int = 10


def _erp_states(erp: Union[ErpStore, Mapping[str, PaymentState]]):
    if isinstance(erp, ErpStore):
        return {oid: obj.state for oid, obj in erp.objects.items()}
    return dict(erp)


def reconcile(
    portal_records: Mapping[str, PortalRecord],
    erp: Union[ErpStore, Mapping[str, PaymentState]],
    detected_at: int = 0,
) -> list[Discrepancy]:
    """One discrepancy per object whose paid-ness differs between the sides."""
    erp_states = _erp_states(erp)
    out = []
    for oid in sorted(set(portal_records) | set(erp_states)):
        rec = portal_records.get(oid)
        state = erp_states.get(oid)
        if rec is None:
            out.append(Discrepancy(oid, "-", state.value,
                                   DiscrepancyKind.MISSING_IN_PORTAL, detected_at))
            continue
        if state is None:
            out.append(Discrepancy(oid, rec.view_state.value, "-",
                                   DiscrepancyKind.MISSING_IN_ERP, detected_at))
            continue
        portal_paid = (rec.view_state is PortalViewState.PAID_VIEW
                       or rec.access_granted)
        erp_paid = state in PAID_STATES
        if portal_paid and not erp_paid:
            out.append(Discrepancy(oid, rec.view_state.value, state.value,
                                   DiscrepancyKind.PORTAL_AHEAD_OF_ERP,
                                   detected_at))
        elif erp_paid and not portal_paid:
            out.append(Discrepancy(oid, rec.view_state.value, state.value,
                                   DiscrepancyKind.ERP_AHEAD_OF_PORTAL,
                                   detected_at))
    return out


def _as_dicts(transcript: Iterable) -> list[dict]:
    out = []
    for rec in transcript:
        if isinstance(rec, TranscriptRecord):
            out.append({"tick": rec.tick, "direction": rec.direction,
                        "wire": rec.wire, "summary": rec.summary})
        else:
            out.append(rec)
    return out


def scan_transcript(
    transcript: Iterable,
    vocabulary: frozenset[str] = frozenset({"obj", "user", "password"}),
    config: ScanConfig = ScanConfig(),
) -> list[AnomalyEvent]:
    """Flag suspicious client request patterns in a tick-ordered transcript."""
    records = _as_dicts(transcript)
    last_tick = None
    for rec in records:
        if last_tick is not None and rec["tick"] < last_tick:
            raise ValueError("transcript is not tick-ordered")
        last_tick = rec["tick"]

    events: list[AnomalyEvent] = []
    seen_wires: dict[bytes, tuple[int, int]] = {}
    paid_objects: dict[str, set[str]] = {}    # session -> objects with /pay seen
    pay_requests: dict[str, list[tuple[int, str]]] = {}  # session -> (idx, obj)
    completed: dict[str, set[str]] = {}       # session -> objects shown paid

    for idx, rec in enumerate(records):
        summary = rec.get("summary", {})
        if rec["direction"] == "portal->client":
            if summary.get("view") == "paid" and summary.get("object"):
                completed.setdefault(summary.get("session", "?"), set()).add(
                    summary["object"])
            continue
        if rec["direction"] != "client->portal":
            continue
        sid = summary.get("session", "?")
        tick = rec["tick"]
        path = summary.get("path", "")
        query = {k: v for k, v in summary.get("query", [])}

        wire = rec["wire"]
        if isinstance(wire, bytes):
            prev = seen_wires.get(wire)
            if prev is not None and tick - prev[0] <= config.duplicate_window:
                events.append(AnomalyEvent(AnomalyKind.DUPLICATE_REQUEST, sid,
                                           (prev[1], idx), tick))
            seen_wires[wire] = (tick, idx)

        param_names = set(query)
        if isinstance(wire, bytes):
            try:
                param_names |= {k for k, _ in parse_request(wire).form()}
            except ValueError:
                pass
        unexpected = sorted(param_names - vocabulary)
        if unexpected:
            events.append(AnomalyEvent(AnomalyKind.UNEXPECTED_PARAM, sid,
                                       (idx,), tick))

        if path.startswith("/pay/") and path != "/pay/return":
            obj = path[len("/pay/"):]
            paid_objects.setdefault(sid, set()).add(obj)
            pay_requests.setdefault(sid, []).append((idx, obj))
        elif path == "/pay/return":
            obj = query.get("obj")
            if obj is not None and obj not in paid_objects.get(sid, set()):
                events.append(AnomalyEvent(AnomalyKind.OUT_OF_ORDER_ENDPOINT,
                                           sid, (idx,), tick))

    for sid, pays in pay_requests.items():
        done = completed.get(sid, set())
        incomplete = [idx for idx, obj in pays if obj not in done]
        if len(incomplete) >= config.partial_flow_threshold:
            last_idx = incomplete[-1]
            events.append(AnomalyEvent(AnomalyKind.PARTIAL_FLOW_REPEAT, sid,
                                       tuple(incomplete),
                                       records[last_idx]["tick"]))

    events.sort(key=lambda e: (e.tick, e.kind.value, e.evidence))
    return events
