"""End-to-end actor tests: the four components over the in-process bus.

Test categories mirror the threat framing:
  HAPPY_PATH   legitimate flows complete under both variants
  UNAUTHORIZED auth and ownership enforcement (both variants)
  FLAWS        each toggle changes portal behavior exactly as designed
  ERP          the system of record rejects everything but verified evidence
"""
import json

import pytest

from payflow.actors import (
    Actor, ActorKind, PortalConfig, PortalViewState, Simulation, Variant,
    erp_unbacked_objects,
)
from payflow.fsm import Decision, EventKind, PaymentState
from payflow.http_model import HttpRequest
from payflow.scenario import builtin_abandoned, builtin_default
from payflow.tokens import evidence_to_wire

SC = builtin_default()
HAPPY = list(SC.scripts[0].steps)


def run_happy(config, seed=0):
    sim = Simulation(SC, config, seed)
    session = sim.new_session()
    sim.run_script(HAPPY, session, default_user="alice")
    sim.drain()
    return sim


def login_session(sim, user="alice"):
    session = sim.new_session()
    sim.run_script([{"op": "login", "user": user}], session,
                   default_user=user)
    return session


def view_of(resp):
    return json.loads(resp.body)["view"]


class TestHappyPath:
    @pytest.mark.parametrize("config", [PortalConfig.hardened(),
                                        PortalConfig.vulnerable()],
                             ids=["hardened", "vulnerable"])
    def test_flow_settles_and_portal_shows_paid(self, config):
        sim = run_happy(config)
        assert sim.erp.objects["B1"].state is PaymentState.SETTLED
        rec = sim.portal.records["B1"]
        assert rec.view_state is PortalViewState.PAID_VIEW
        assert rec.access_granted

    def test_status_during_gateway_latency_window(self):
        sim = Simulation(SC, PortalConfig.hardened(), 0)
        session = login_session(sim)
        sim.run_script([{"op": "pay", "object": "B1"}], session, "alice")
        # gateway outcome not yet delivered
        assert sim.erp.objects["B1"].state is PaymentState.AUTHORIZATION_PENDING
        resp = sim.run_script([{"op": "status", "object": "B1"}],
                              session, "alice")[0]
        assert view_of(resp) == "pending"

    def test_audit_replay_matches_stored_state(self):
        sim = run_happy(PortalConfig.hardened())
        for oid in sim.erp.objects:
            assert sim.erp.replay_current(oid) is sim.erp.objects[oid].state

    def test_erp_integrity(self):
        sim = run_happy(PortalConfig.hardened())
        assert erp_unbacked_objects(sim.erp, sim.gateway.ledger) == []

    def test_hardened_authority_invariant_continuously(self):
        sim = run_happy(PortalConfig.hardened())
        assert sim.authority_violations == []


class TestGatewayOutcomes:
    def test_decline_leads_to_failed(self):
        sc = builtin_abandoned()
        sc = type(sc)(users=sc.users, objects=sc.objects,
                      gateway=type(sc.gateway)(script=("decline",), latency=2),
                      scripts=sc.scripts, vocabulary=sc.vocabulary,
                      attacker=sc.attacker, timeout_ticks=sc.timeout_ticks)
        sim = Simulation(sc, PortalConfig.hardened(), 0)
        session = login_session(sim)
        sim.run_script([{"op": "pay", "object": "B1"}], session, "alice")
        sim.drain()
        assert sim.erp.objects["B1"].state is PaymentState.FAILED

    def test_stall_leads_to_failed_by_timeout(self):
        sc = builtin_abandoned()
        sim = Simulation(sc, PortalConfig.hardened(), 0)
        session = login_session(sim)
        sim.run_script([{"op": "pay", "object": "B1"}], session, "alice")
        sim.drain()
        assert sim.erp.objects["B1"].state is PaymentState.FAILED
        timeout_rec = next(r for r in sim.erp.audit_log
                           if r.event.kind is EventKind.TIMEOUT
                           and r.decision is Decision.ALLOWED)
        # fires timeout_ticks after the payment became pending
        assert timeout_rec.logical_time >= sc.timeout_ticks
        assert sim.portal.records["B1"].view_state \
            is not PortalViewState.PAID_VIEW


class TestUnauthorized:
    @pytest.mark.parametrize("config", [PortalConfig.hardened(),
                                        PortalConfig.vulnerable()],
                             ids=["hardened", "vulnerable"])
    def test_foreign_object_is_403_everywhere(self, config):
        sim = Simulation(SC, config, 0)
        session = login_session(sim, "mallory")
        for step in ({"op": "pay", "object": "B1"},
                     {"op": "return", "object": "B1"},
                     {"op": "status", "object": "B1"},
                     {"op": "service", "object": "B1"}):
            req = sim.build_request(step, session, "mallory")
            assert sim.submit(req, session).status == 403

    def test_unauthenticated_is_401(self):
        sim = Simulation(SC, PortalConfig.hardened(), 0)
        session = sim.new_session()
        req = sim.build_request({"op": "invoices"}, session)
        assert sim.submit(req, session).status == 401

    def test_unknown_object_is_404(self):
        sim = Simulation(SC, PortalConfig.hardened(), 0)
        session = login_session(sim)
        req = HttpRequest("GET", "/status/NOPE", headers=(
            ("Cookie", f"auth={session.cookies['auth']}"),))
        assert sim.submit(req, session).status == 404

    def test_hardened_pay_in_wrong_state_is_409(self):
        sim = Simulation(SC, PortalConfig.hardened(), 0)
        session = login_session(sim)
        sim.run_script([{"op": "pay", "object": "B1"}], session, "alice")
        resp = sim.run_script([{"op": "pay", "object": "B1"}],
                              session, "alice")[0]
        assert resp.status == 409


class TestFlaws:
    def test_hardened_ignores_forged_cookie(self):
        sim = Simulation(SC, PortalConfig.hardened(), 0)
        session = login_session(sim)
        resp = sim.run_script(
            [{"op": "return", "object": "B1", "cookies": {"pf": "1"}}],
            session, "alice")[0]
        assert view_of(resp) == "unpaid"
        assert not sim.portal.records["B1"].access_granted

    def test_f1_trusts_client_header(self):
        sim = Simulation(SC, PortalConfig.vulnerable({"F1"}), 0)
        session = login_session(sim)
        resp = sim.run_script(
            [{"op": "return", "object": "B1",
              "headers": [["X-Payment-Status", "complete"]]}],
            session, "alice")[0]
        assert view_of(resp) == "paid"
        assert sim.portal.records["B1"].access_granted
        assert sim.erp.objects["B1"].state is PaymentState.CREATED

    def test_f2_flags_conjoin_out_of_order(self):
        sim = Simulation(SC, PortalConfig.vulnerable({"F2"}), 0)
        session = login_session(sim)
        resps = sim.run_script([
            {"op": "return", "object": "B1"},   # sets 'returned' first
            {"op": "pay", "object": "B1"},      # sets 'initiated'
            {"op": "return", "object": "B1"},   # conjunction -> paid
        ], session, "alice")
        assert view_of(resps[0]) == "unpaid"
        assert view_of(resps[2]) == "paid"

    def test_f3_portal_sets_and_trusts_its_own_cookie(self):
        sim = Simulation(SC, PortalConfig.vulnerable({"F3"}), 0)
        session = login_session(sim)
        resps = sim.run_script([
            {"op": "pay", "object": "B1"},
            {"op": "return", "object": "B1"},
        ], session, "alice")
        assert resps[0].header("Set-Cookie") == "pf=1"
        assert view_of(resps[1]) == "paid"
        assert sim.erp.objects["B1"].state \
            is not PaymentState.CAPTURED  # still in flight when granted

    def test_f4_grants_without_erp_query(self):
        sim = Simulation(SC, PortalConfig.vulnerable({"F4"}), 0)
        session = login_session(sim)
        resps = sim.run_script([
            {"op": "pay", "object": "B1"},
            {"op": "return", "object": "B1"},
        ], session, "alice")
        assert view_of(resps[1]) == "paid"
        assert sim.erp.objects["B1"].state \
            in (PaymentState.AUTHORIZATION_PENDING, PaymentState.AUTHORIZED)

    def test_f4b_grants_then_revokes_when_erp_never_confirms(self):
        sc = builtin_abandoned()  # stalling gateway: ERP never confirms
        sim = Simulation(sc, PortalConfig.vulnerable({"F4b"}), 0)
        session = login_session(sim)
        sim.run_script([
            {"op": "pay", "object": "B1"},
            {"op": "return", "object": "B1"},
        ], session, "alice")
        assert sim.portal.records["B1"].access_granted  # the window
        sim.advance(PortalConfig.vulnerable({"F4b"}).f4b_verify_delay + 1)
        assert not sim.portal.records["B1"].access_granted

    def test_hardened_config_cannot_enable_flaws(self):
        with pytest.raises(ValueError):
            PortalConfig(Variant.HARDENED, f1=True)


class TestErpAuthority:
    def test_portal_cannot_settle(self):
        sim = Simulation(SC, PortalConfig.hardened(), 0)
        decision, _ = sim.erp_apply(EventKind.SETTLE, "B1",
                                    Actor(ActorKind.PORTAL, "portal"))
        assert decision is Decision.REJECTED_ILLEGAL_TRANSITION
        sim.erp_apply(EventKind.INITIATE_PAYMENT, "B1",
                      Actor(ActorKind.PORTAL, "portal"))
        sim.erp_apply(EventKind.FORWARD_TO_GATEWAY, "B1",
                      Actor(ActorKind.PORTAL, "portal"))
        decision, _ = sim.erp_apply(EventKind.AUTHORIZE_FAIL, "B1",
                                    Actor(ActorKind.PORTAL, "portal"))
        assert decision is Decision.REJECTED_WRONG_ACTOR

    def test_replayed_gateway_callback_is_rejected(self):
        sim = run_happy(PortalConfig.hardened())
        ledger = sim.gateway.ledger
        assert ledger, "happy path should have minted evidence"
        before = {o: obj.state for o, obj in sim.erp.objects.items()}
        for ev in ledger:
            decision = sim.deliver_gateway_callback(evidence_to_wire(ev),
                                                    source="attacker")
            assert decision is not Decision.ALLOWED
        assert {o: obj.state for o, obj in sim.erp.objects.items()} == before

    def test_retry_after_failed_bumps_attempt(self):
        sc = builtin_abandoned()
        sim = Simulation(sc, PortalConfig.hardened(), 0)
        session = login_session(sim)
        sim.run_script([{"op": "pay", "object": "B1"}], session, "alice")
        sim.drain()
        assert sim.erp.objects["B1"].state is PaymentState.FAILED
        fresh = sim.erp.retry_failed("B1")
        assert fresh.attempt_id == 2
        assert fresh.state is PaymentState.CREATED
        assert sim.erp.replay_current("B1") is PaymentState.CREATED


class TestDeterminism:
    def test_identical_inputs_identical_transcripts(self):
        def run(seed):
            sim = run_happy(PortalConfig.vulnerable(), seed)
            return [(r.tick, r.direction, r.wire) for r in sim.transcript]
        assert run(11) == run(11)
        assert run(11) != run(12)

    def test_empty_script_empty_transcript(self):
        sim = Simulation(SC, PortalConfig.hardened(), 0)
        sim.run_script([], sim.new_session())
        assert sim.transcript == []

    def test_script_with_undefined_object_rejected_before_execution(self):
        sim = Simulation(SC, PortalConfig.hardened(), 0)
        with pytest.raises(ValueError, match="undefined object"):
            sim.run_script([{"op": "pay", "object": "GHOST"}],
                           sim.new_session(), "alice")
        assert sim.transcript == []
