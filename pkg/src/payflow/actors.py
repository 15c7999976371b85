"""The four simulated components wired over an in-process bus.

Client, portal (vulnerable or hardened), gateway, and ERP all share one
logical clock; every message is recorded into a transcript, so identical
(scenario, seed, config) inputs produce byte-identical transcripts.

The portal is the only component that differs between variants. The ERP
enforces the payment state machine with gateway-evidence verification in
both variants: the historical flaw pattern lives entirely in the portal.
"""
from __future__ import annotations

import base64
import enum
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import fsm, tokens
from .fsm import (
    Actor, ActorKind, AuditRecord, BusinessObject, Decision, EventKind,
    PAID_STATES, PaymentState, TransitionEvent,
)
from .http_model import (
    HttpRequest, HttpResponse, Session, serialize_request, serialize_response,
)
from .scenario import Scenario
from .tokens import (
    EvidenceOutcome, GatewayEvidence, KeyPurpose, Verdict, derive_key,
    evidence_from_wire, evidence_to_wire, mint_client_token, sign_evidence,
    token_from_cookie, token_to_cookie, verify_client_token, verify_evidence,
)


class Variant(enum.Enum):
    VULNERABLE = "vulnerable"
    HARDENED = "hardened"


@dataclass(frozen=True)
class PortalConfig:
    """Portal variant plus the independently toggleable flaws.

    F1: trust client-supplied success signals (header/cookie).
    F2: success inferred from dispersed session flags, settable out of order.
    F3: portal round-trips payment state through a client-visible cookie.
    F4: access granted without querying the ERP at all.
    F4b: access granted first, ERP verified a few ticks later (timing window).
    """

    variant: Variant
    f1: bool = False
    f2: bool = False
    f3: bool = False
    f4: bool = False
    f4b: bool = False
    f4b_verify_delay: int = 3

    def __post_init__(self):
        if self.variant is Variant.HARDENED and any(
            (self.f1, self.f2, self.f3, self.f4, self.f4b)
        ):
            raise ValueError("hardened variant cannot enable flaws")

    @classmethod
    def hardened(cls) -> "PortalConfig":
        return cls(Variant.HARDENED)

    @classmethod
    def vulnerable(cls, flaws: Optional[set[str]] = None) -> "PortalConfig":
        if flaws is None:
            flaws = {"F1", "F2", "F3", "F4", "F4b"}
        flaws = {f.upper() if f.lower() != "f4b" else "F4b" for f in flaws}
        unknown = flaws - {"F1", "F2", "F3", "F4", "F4b"}
        if unknown:
            raise ValueError(f"unknown flaws: {sorted(unknown)}")
        return cls(
            Variant.VULNERABLE,
            f1="F1" in flaws, f2="F2" in flaws, f3="F3" in flaws,
            f4="F4" in flaws, f4b="F4b" in flaws,
        )

    def enabled_flaws(self) -> tuple[str, ...]:
        out = []
        for name, on in (("F1", self.f1), ("F2", self.f2), ("F3", self.f3),
                         ("F4", self.f4), ("F4b", self.f4b)):
            if on:
                out.append(name)
        return tuple(out)


class PortalViewState(enum.Enum):
    UNPAID = "Unpaid"
    PAYMENT_IN_FLIGHT = "PaymentInFlight"
    PAID_VIEW = "PaidView"


@dataclass
class PortalRecord:
    object_id: str
    owner_user_id: str
    view_state: PortalViewState = PortalViewState.UNPAID
    access_granted: bool = False
    last_update: int = 0


class UnknownObjectError(KeyError):
    pass


class ErpStore:
    """System of record: business objects, audit log, consumed nonces."""

    def __init__(self, gateway_key: tokens.SigningKey, timeout_ticks: int = 100):
        self.objects: dict[str, BusinessObject] = {}
        self.audit_log: list[AuditRecord] = []
        self.nonce_store = tokens.NonceStore()
        self.gateway_key = gateway_key
        self.timeout_ticks = timeout_ticks

    def create(self, obj: BusinessObject) -> None:
        self.objects[obj.object_id] = obj

    def status(self, object_id: str) -> PaymentState:
        if object_id not in self.objects:
            raise UnknownObjectError(object_id)
        return self.objects[object_id].state

    def _verifier(self, evidence, obj: BusinessObject) -> bool:
        if not isinstance(evidence, GatewayEvidence):
            return False
        verdict = verify_evidence(
            self.gateway_key, evidence,
            (obj.object_id, obj.attempt_id, obj.amount, obj.currency),
            self.nonce_store,
        )
        return verdict is Verdict.VERIFIED

    def apply(self, event: TransitionEvent) -> tuple[Decision, AuditRecord]:
        if event.object_id not in self.objects:
            raise UnknownObjectError(event.object_id)
        obj = self.objects[event.object_id]
        new_obj, record = fsm.apply_transition(obj, event, self._verifier)
        self.objects[event.object_id] = new_obj
        self.audit_log.append(record)
        return record.decision, record

    def retry_failed(self, object_id: str) -> BusinessObject:
        """Administrative retry: same object, fresh attempt, back to Created."""
        obj = self.objects[object_id]
        if obj.state is not PaymentState.FAILED:
            raise ValueError(f"{object_id} is {obj.state.value}, not Failed")
        fresh = BusinessObject(
            obj.object_id, obj.owner_user_id, obj.amount, obj.currency,
            state=PaymentState.CREATED, attempt_id=obj.attempt_id + 1,
        )
        self.objects[object_id] = fresh
        return fresh

    def replay_current(self, object_id: str) -> PaymentState:
        obj = self.objects[object_id]
        baseline = BusinessObject(
            obj.object_id, obj.owner_user_id, obj.amount, obj.currency,
            state=PaymentState.CREATED, attempt_id=obj.attempt_id,
        )
        records = [r for r in self.audit_log if r.object_id == object_id]
        return fsm.replay_audit(records, baseline)

    def applied_evidence(self, object_id: str) -> list[GatewayEvidence]:
        obj = self.objects[object_id]
        return [
            r.event.evidence for r in self.audit_log
            if r.object_id == object_id
            and r.decision is Decision.ALLOWED
            and r.event.attempt_id == obj.attempt_id
            and isinstance(r.event.evidence, GatewayEvidence)
        ]

    def snapshot(self) -> dict:
        return {
            "objects": {
                oid: {
                    "owner": o.owner_user_id,
                    "amount": o.amount,
                    "currency": o.currency,
                    "state": o.state.value,
                    "attempt_id": o.attempt_id,
                }
                for oid, o in sorted(self.objects.items())
            },
            "audit_records": len(self.audit_log),
            "consumed_nonces": self.nonce_store.snapshot(),
        }


class Gateway:
    """Scripted gateway: approves, declines, or stalls per attempt."""

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.key = sim.gateway_key
        self.spec = sim.scenario.gateway
        self.attempts: dict[str, int] = {}
        #: every evidence object this gateway legitimately minted
        self.ledger: list[GatewayEvidence] = []

    def _outcome_for(self, object_id: str) -> str:
        idx = self.attempts.get(object_id, 0)
        self.attempts[object_id] = idx + 1
        script = self.spec.script
        return script[min(idx, len(script) - 1)]

    def begin(self, obj: BusinessObject) -> None:
        outcome = self._outcome_for(obj.object_id)
        if outcome == "approve":
            self.sim.schedule(self.spec.latency,
                              lambda: self._authorize(obj))
        elif outcome == "decline":
            self.sim.schedule(self.spec.latency,
                              lambda: self._decline(obj))
        # "stall": deliver nothing and let the ERP timeout fire

    def _mint(self, obj: BusinessObject, outcome: EvidenceOutcome) -> GatewayEvidence:
        ev = sign_evidence(
            self.key, gateway_id="gw-1", object_id=obj.object_id,
            attempt_id=obj.attempt_id, amount=obj.amount, currency=obj.currency,
            outcome=outcome, logical_time=self.sim.clock, rng=self.sim.rng,
        )
        self.ledger.append(ev)
        return ev

    def _authorize(self, obj: BusinessObject) -> None:
        ev = self._mint(obj, EvidenceOutcome.AUTHORIZED)
        decision = self.sim.deliver_gateway_callback(evidence_to_wire(ev),
                                                     source="gateway")
        if decision is Decision.ALLOWED:
            self.sim.schedule(1, lambda: self._capture(obj))

    def _capture(self, obj: BusinessObject) -> None:
        ev = self._mint(obj, EvidenceOutcome.CAPTURED)
        self.sim.deliver_gateway_callback(evidence_to_wire(ev), source="gateway")

    def _decline(self, obj: BusinessObject) -> None:
        wire = json.dumps({"event": "AuthorizeFail", "object": obj.object_id,
                           "attempt": obj.attempt_id}, sort_keys=True).encode()
        self.sim.record("gateway->erp", "gateway", wire,
                        {"event": "AuthorizeFail", "object": obj.object_id})
        self.sim.erp_apply(EventKind.AUTHORIZE_FAIL, obj.object_id,
                           Actor(ActorKind.GATEWAY, "gw-1"))


class Portal:
    """Web portal; the flaw toggles only change how /pay/return and /service
    decide that a payment succeeded — ownership checks are always on."""

    AUTH_COOKIE = "auth"

    def __init__(self, sim: "Simulation", config: PortalConfig):
        self.sim = sim
        self.config = config
        self.token_key = sim.token_key
        self.sessions: dict[str, str] = {}  # session_id -> user_id
        self.flags: dict[str, dict] = {}
        self.records: dict[str, PortalRecord] = {
            o.object_id: PortalRecord(o.object_id, o.owner)
            for o in sim.scenario.objects
        }

    # -- helpers -----------------------------------------------------------

    def _authenticate(self, req: HttpRequest):
        raw = req.cookies().get(self.AUTH_COOKIE)
        if raw is None:
            return None
        try:
            token = token_from_cookie(raw)
        except Exception:
            return None
        if verify_client_token(self.token_key, token) is not Verdict.VERIFIED:
            return None
        if self.sessions.get(token.session_id) != token.user_id:
            return None
        return token

    def _session_flags(self, sid: str) -> dict:
        return self.flags.setdefault(
            sid, {"initiated": False, "returned": False, "initiated_objects": set()}
        )

    def _check_object(self, object_id: str, user_id: str):
        """404 for unknown, 403 for foreign objects; None when OK."""
        rec = self.records.get(object_id)
        if rec is None:
            return _resp(404, body=b"unknown object")
        if rec.owner_user_id != user_id:
            return _resp(403, body=b"not your object")
        return None

    def _mark_paid(self, object_id: str) -> None:
        rec = self.records[object_id]
        rec.view_state = PortalViewState.PAID_VIEW
        rec.access_granted = True
        rec.last_update = self.sim.clock

    def _sync_from_erp(self, object_id: str) -> str:
        """Update the record from authoritative ERP state; returns the view."""
        state = self.sim.erp.status(object_id)
        rec = self.records[object_id]
        rec.last_update = self.sim.clock
        if state in PAID_STATES:
            rec.view_state = PortalViewState.PAID_VIEW
            rec.access_granted = True
            return "paid"
        rec.access_granted = False
        if state in (PaymentState.PAYMENT_INITIATED,
                     PaymentState.AUTHORIZATION_PENDING,
                     PaymentState.AUTHORIZED):
            rec.view_state = PortalViewState.PAYMENT_IN_FLIGHT
            return "pending"
        rec.view_state = PortalViewState.UNPAID
        return "unpaid"

    # -- routes ------------------------------------------------------------

    def handle(self, req: HttpRequest) -> HttpResponse:
        if req.method == "POST" and req.path == "/login":
            return self._login(req)
        token = self._authenticate(req)
        if token is None:
            return _resp(401, body=b"authentication required")
        user, sid = token.user_id, token.session_id
        if req.method == "GET" and req.path == "/invoices":
            return self._invoices(user)
        if req.method == "POST" and req.path.startswith("/pay/") \
                and req.path != "/pay/return":
            return self._pay(req.path[len("/pay/"):], user, sid)
        if req.method == "GET" and req.path == "/pay/return":
            return self._pay_return(req, user, sid)
        if req.method == "GET" and req.path.startswith("/status/"):
            return self._status(req.path[len("/status/"):], user)
        if req.method == "GET" and req.path.startswith("/service/"):
            return self._service(req.path[len("/service/"):], user)
        return _resp(404, body=b"no such endpoint")

    def _login(self, req: HttpRequest) -> HttpResponse:
        form = dict(req.form())
        user = self.sim.scenario.user(form.get("user", ""))
        if user is None or user.password != form.get("password", ""):
            return _resp(401, body=b"bad credentials")
        sid = f"{self.sim.rng.getrandbits(128):032x}"
        self.sessions[sid] = user.user_id
        token = mint_client_token(self.token_key, user.user_id, sid,
                                  self.sim.clock)
        return _resp(
            200,
            headers=(("Set-Cookie", f"{self.AUTH_COOKIE}={token_to_cookie(token)}"),),
            body=b"welcome",
        )

    def _invoices(self, user: str) -> HttpResponse:
        rows = [
            {"object": r.object_id, "view": r.view_state.value}
            for r in sorted(self.records.values(), key=lambda r: r.object_id)
            if r.owner_user_id == user
        ]
        return _resp(200, body=json.dumps(rows, sort_keys=True).encode())

    def _pay(self, object_id: str, user: str, sid: str) -> HttpResponse:
        err = self._check_object(object_id, user)
        if err is not None:
            return err
        if self.config.variant is Variant.HARDENED \
                and self.sim.erp.status(object_id) is not PaymentState.CREATED:
            return _resp(409, body=b"object not payable in current state")
        obj = self.sim.erp.objects[object_id]
        portal_actor = Actor(ActorKind.PORTAL, "portal")
        decision, _ = self.sim.erp_apply(EventKind.INITIATE_PAYMENT, object_id,
                                         portal_actor)
        if decision is Decision.ALLOWED:
            decision, _ = self.sim.erp_apply(EventKind.FORWARD_TO_GATEWAY,
                                             object_id, portal_actor)
            if decision is Decision.ALLOWED:
                self.sim.gateway.begin(self.sim.erp.objects[object_id])
        rec = self.records[object_id]
        if rec.view_state is not PortalViewState.PAID_VIEW:
            rec.view_state = PortalViewState.PAYMENT_IN_FLIGHT
            rec.last_update = self.sim.clock
        fl = self._session_flags(sid)
        fl["initiated"] = True
        fl["initiated_objects"].add(object_id)
        headers = [("Location", f"/gateway/checkout?obj={object_id}")]
        if self.config.f3:
            # the flaw: payment progress round-tripped through the client
            headers.append(("Set-Cookie", "pf=1"))
        return _resp(302, headers=tuple(headers), body=b"redirecting to gateway")

    def _pay_return(self, req: HttpRequest, user: str, sid: str) -> HttpResponse:
        object_id = req.query_get("obj")
        if object_id is None:
            return _resp(400, body=b"missing obj parameter")
        err = self._check_object(object_id, user)
        if err is not None:
            return err
        cfg = self.config
        fl = self._session_flags(sid)
        fl["returned"] = True
        granted_via = None
        if cfg.variant is Variant.VULNERABLE:
            cookies = req.cookies()
            if cfg.f1 and (req.header("X-Payment-Status") == "complete"
                           or cookies.get("pf") == "1"):
                granted_via = "F1"
            elif cfg.f3 and cookies.get("pf") == "1":
                granted_via = "F3"
            elif cfg.f2 and fl["initiated"] and fl["returned"]:
                granted_via = "F2"
            elif cfg.f4 and object_id in fl["initiated_objects"]:
                granted_via = "F4"
            elif cfg.f4b and object_id in fl["initiated_objects"]:
                granted_via = "F4b"
                self.sim.schedule(cfg.f4b_verify_delay,
                                  lambda: self._f4b_verify(object_id))
        if granted_via is not None:
            self._mark_paid(object_id)
            view = "paid"
        else:
            view = self._sync_from_erp(object_id)
        return _resp(200, body=_view_body(object_id, view))

    def _f4b_verify(self, object_id: str) -> None:
        # grant-first-reconcile-later: revoke if the ERP never confirmed
        if self.sim.erp.status(object_id) not in PAID_STATES:
            self._sync_from_erp(object_id)

    def _status(self, object_id: str, user: str) -> HttpResponse:
        err = self._check_object(object_id, user)
        if err is not None:
            return err
        if self.config.variant is Variant.HARDENED:
            view = self._sync_from_erp(object_id)
        else:
            view = {
                PortalViewState.PAID_VIEW: "paid",
                PortalViewState.PAYMENT_IN_FLIGHT: "pending",
                PortalViewState.UNPAID: "unpaid",
            }[self.records[object_id].view_state]
        return _resp(200, body=_view_body(object_id, view))

    def _service(self, object_id: str, user: str) -> HttpResponse:
        err = self._check_object(object_id, user)
        if err is not None:
            return err
        if self.config.variant is Variant.HARDENED:
            if self._sync_from_erp(object_id) != "paid":
                return _resp(409, body=b"payment required")
            return _resp(200, body=b"service content for " + object_id.encode())
        if not self.records[object_id].access_granted:
            return _resp(403, body=b"access denied")
        return _resp(200, body=b"service content for " + object_id.encode())


def _resp(status: int, headers=(), body: bytes = b"") -> HttpResponse:
    return HttpResponse(status, tuple(headers), body)


def _view_body(object_id: str, view: str) -> bytes:
    return json.dumps({"object": object_id, "view": view},
                      sort_keys=True).encode()


@dataclass
class TranscriptRecord:
    tick: int
    direction: str
    actor: str
    wire: bytes
    summary: dict

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "direction": self.direction,
            "actor": self.actor,
            "wire": base64.b64encode(self.wire).decode(),
            "summary": self.summary,
        }


class Simulation:
    """Single-threaded event loop; all actor state mutates only from here."""

    def __init__(self, scenario: Scenario, config: PortalConfig, seed: int = 0):
        self.scenario = scenario
        self.config = config
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock = 0
        self._queue: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0
        self.transcript: list[TranscriptRecord] = []
        self.gateway_key = derive_key("gw-erp", KeyPurpose.GATEWAY_TO_ERP,
                                      f"sim-{seed}")
        self.token_key = derive_key("client-token",
                                    KeyPurpose.PORTAL_CLIENT_TOKEN, f"sim-{seed}")
        self.erp = ErpStore(self.gateway_key, timeout_ticks=scenario.timeout_ticks)
        for o in scenario.objects:
            self.erp.create(BusinessObject(o.object_id, o.owner, o.amount,
                                           o.currency))
        self.gateway = Gateway(self)
        self.portal = Portal(self, config)
        self._pending_since: dict[str, int] = {}
        self._anon_counter = 0
        self.observers: list[Callable[["Simulation"], None]] = []
        self.authority_violations: list[dict] = []
        if config.variant is Variant.HARDENED:
            self.observers.append(_hardened_authority_check)

    # -- clock and scheduling ---------------------------------------------

    def schedule(self, delay: int, fn: Callable[[], None]) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (self.clock + delay, self._seq, fn))

    def advance(self, ticks: int = 1) -> None:
        for _ in range(ticks):
            self.clock += 1
            while self._queue and self._queue[0][0] <= self.clock:
                _, _, fn = heapq.heappop(self._queue)
                fn()
            self._fire_timeouts()
            for obs in list(self.observers):
                obs(self)

    def drain(self, max_ticks: int = 2000) -> None:
        """Advance until no scheduled work and no payment can still time out."""
        for _ in range(max_ticks):
            if not self._queue and not self._pending_since:
                return
            self.advance(1)

    def _fire_timeouts(self) -> None:
        due = [oid for oid, since in self._pending_since.items()
               if self.clock - since >= self.erp.timeout_ticks]
        for oid in sorted(due):
            wire = json.dumps({"event": "Timeout", "object": oid},
                              sort_keys=True).encode()
            self.record("erp", "erp", wire, {"event": "Timeout", "object": oid})
            self.erp_apply(EventKind.TIMEOUT, oid, Actor(ActorKind.ERP, "erp"))

    # -- transcript --------------------------------------------------------

    def record(self, direction: str, actor: str, wire: bytes, summary: dict) -> None:
        self.transcript.append(
            TranscriptRecord(self.clock, direction, actor, wire, summary)
        )

    # -- ERP event entry points -------------------------------------------

    def erp_apply(
        self,
        kind: EventKind,
        object_id: str,
        issuer: Actor,
        evidence: Optional[GatewayEvidence] = None,
    ) -> tuple[Decision, AuditRecord]:
        obj = self.erp.objects[object_id]
        event = TransitionEvent(
            kind=kind, object_id=object_id, attempt_id=obj.attempt_id,
            issuer=issuer, evidence=evidence, logical_time=self.clock,
        )
        decision, record = self.erp.apply(event)
        new_state = self.erp.objects[object_id].state
        if decision is Decision.ALLOWED:
            if new_state is PaymentState.AUTHORIZATION_PENDING:
                self._pending_since[object_id] = self.clock
            else:
                self._pending_since.pop(object_id, None)
            if new_state is PaymentState.CAPTURED:
                # settlement runs automatically on the next tick
                self.schedule(1, lambda: self._settle(object_id))
        return decision, record

    def _settle(self, object_id: str) -> None:
        wire = json.dumps({"event": "Settle", "object": object_id},
                          sort_keys=True).encode()
        self.record("erp", "erp", wire, {"event": "Settle", "object": object_id})
        self.erp_apply(EventKind.SETTLE, object_id, Actor(ActorKind.ERP, "erp"))

    def deliver_gateway_callback(self, wire: bytes, source: str) -> Decision:
        """G→E channel; also the replay surface an attacker can target with
        captured transcript bytes (it cannot mint fresh evidence)."""
        direction = "gateway->erp" if source == "gateway" else f"{source}->erp"
        try:
            ev = evidence_from_wire(wire)
        except Exception:
            self.record(direction, source, wire, {"event": "callback",
                                                  "error": "malformed"})
            return Decision.REJECTED_INVALID_EVIDENCE
        kind = {
            EvidenceOutcome.AUTHORIZED: EventKind.AUTHORIZE_OK,
            EvidenceOutcome.CAPTURED: EventKind.CAPTURE,
            EvidenceOutcome.DECLINED: EventKind.AUTHORIZE_FAIL,
        }[ev.outcome]
        if ev.object_id not in self.erp.objects:
            self.record(direction, source, wire,
                        {"event": kind.value, "error": "unknown object"})
            return Decision.REJECTED_INVALID_EVIDENCE
        decision, _ = self.erp_apply(
            kind, ev.object_id, Actor(ActorKind.GATEWAY, ev.gateway_id),
            evidence=ev if kind in fsm.EVIDENCE_REQUIRED_KINDS else None,
        )
        self.record(direction, source, wire, {
            "event": kind.value, "object": ev.object_id,
            "decision": decision.value,
        })
        return decision

    # -- client side -------------------------------------------------------

    def new_session(self) -> Session:
        self._anon_counter += 1
        return Session(session_id=f"anon-{self._anon_counter}")

    def submit(self, req: HttpRequest, session: Session) -> HttpResponse:
        sid = session.session_id
        raw = req.cookies().get(Portal.AUTH_COOKIE)
        if raw is not None:
            try:
                sid = token_from_cookie(raw).session_id
            except Exception:
                pass
        self.record("client->portal", "client", serialize_request(req), {
            "method": req.method, "path": req.path,
            "query": [list(kv) for kv in req.query], "session": sid,
        })
        resp = self.portal.handle(req)
        session.absorb(resp)
        auth = session.cookies.get(Portal.AUTH_COOKIE)
        if auth is not None:
            try:
                token = token_from_cookie(auth)
                session.session_id = token.session_id
                session.owner_user_id = token.user_id
            except Exception:
                pass
        summary = {"status": resp.status, "session": sid}
        try:
            body = json.loads(resp.body)
            if isinstance(body, dict) and "view" in body:
                summary["view"] = body["view"]
                summary["object"] = body.get("object")
        except (ValueError, UnicodeDecodeError):
            pass
        self.record("portal->client", "portal", serialize_response(resp), summary)
        self.advance(1)
        return resp

    def build_request(self, step: dict, session: Session,
                      default_user: Optional[str] = None) -> HttpRequest:
        op = step["op"]
        headers: list[tuple[str, str]] = []
        cookies = dict(session.cookies)
        cookies.update(step.get("cookies", {}))
        if op == "login":
            user_id = step.get("user", default_user)
            user = self.scenario.user(user_id)
            password = step.get("password",
                                user.password if user else "")
            method, path, query = "POST", "/login", ()
            body = f"user={user_id}&password={password}".encode()
        elif op == "pay":
            method, path, query, body = "POST", f"/pay/{step['object']}", (), b""
        elif op == "return":
            method, path = "GET", "/pay/return"
            query, body = (("obj", step["object"]),), b""
        elif op == "status":
            method, path, query, body = "GET", f"/status/{step['object']}", (), b""
        elif op == "service":
            method, path, query, body = "GET", f"/service/{step['object']}", (), b""
        elif op == "invoices":
            method, path, query, body = "GET", "/invoices", (), b""
        elif op == "request":
            method = step.get("method", "GET")
            path = step["path"]
            query = tuple((k, v) for k, v in step.get("query", {}).items())
            body = step.get("body", "").encode()
        else:
            raise ValueError(f"op {op!r} does not produce a request")
        for n, v in step.get("headers", []):
            headers.append((n, v))
        if cookies:
            headers.append(
                ("Cookie", "; ".join(f"{k}={v}" for k, v in cookies.items()))
            )
        return HttpRequest(method, path, tuple(query), tuple(headers), body)

    def run_script(self, steps, session: Session,
                   default_user: Optional[str] = None) -> list[HttpResponse]:
        """Execute client steps in logical-clock order; everything is recorded
        in `self.transcript`."""
        for step in steps:
            ref = step.get("object")
            if ref is not None and self.scenario.object(ref) is None:
                raise ValueError(f"script references undefined object {ref!r}")
        responses = []
        for step in steps:
            op = step["op"]
            if op == "wait":
                self.advance(step.get("ticks", 1))
                continue
            req = self.build_request(step, session, default_user)
            if step.get("duplicate"):
                responses.append(self.submit(req, session))
            responses.append(self.submit(req, session))
        return responses


def _hardened_authority_check(sim: Simulation) -> None:
    """access_granted(u, B) must imply ERP state(B) in paid states, at every tick."""
    for rec in sim.portal.records.values():
        if rec.access_granted or rec.view_state is PortalViewState.PAID_VIEW:
            state = sim.erp.status(rec.object_id)
            if state not in PAID_STATES:
                sim.authority_violations.append({
                    "tick": sim.clock,
                    "object_id": rec.object_id,
                    "erp_state": state.value,
                })


def erp_unbacked_objects(erp: ErpStore, gateway_ledger) -> list[str]:
    """Objects in a benefit-conferring ERP state without gateway-minted,
    verifier-accepted evidence behind them. Must always be empty."""
    minted = {ev.nonce for ev in gateway_ledger}
    bad = []
    for oid, obj in erp.objects.items():
        if obj.state in (PaymentState.AUTHORIZED, PaymentState.CAPTURED,
                         PaymentState.SETTLED):
            nonces = {ev.nonce for ev in erp.applied_evidence(oid)}
            if not nonces or not nonces <= minted:
                bad.append(oid)
    return sorted(bad)
