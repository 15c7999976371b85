"""HTTP-level attack harness.

Every strategy plays an ordinary authenticated customer: it owns valid
credentials for one account and manipulates only what a client can touch
(its own requests, cookies, and captured transcript bytes). Strategies never
see gateway or ERP signing keys.

The attacker's goal is a payment-state divergence: the portal grants a paid
view or access while the ERP has no captured/settled payment, or the ERP
reaches a benefit-conferring state without gateway-minted evidence.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .actors import (
    ErpStore, PortalConfig, PortalRecord, PortalViewState, Simulation, Variant,
    erp_unbacked_objects,
)
from .fsm import PAID_STATES, PaymentState
from .recon import reconcile, scan_transcript
from .scenario import Scenario

STRATEGY_IDS = ("S1", "S2", "S3", "S4", "S5", "S6", "S7")

STRATEGY_NAMES = {
    "S1": "HeaderTamper",
    "S2": "CookieForge",
    "S3": "ReturnReplay",
    "S4": "SequenceSkip",
    "S5": "ParamSwap",
    "S6": "TokenTamper",
    "S7": "CallbackReplay",
}

DEFAULT_BUDGET = 500

_HEADER_NAMES = ("X-Payment-Status", "X-Paid", "X-Payment-Complete", "X-Status")
_HEADER_VALUES = ("complete", "1", "true", "success", "paid")
_COOKIE_NAMES = ("pf", "paid", "payment_complete", "pstat")
_COOKIE_VALUES = ("1", "true", "complete", "yes")


@dataclass(frozen=True)
class AttackPlan:
    label: str
    steps: tuple[dict, ...]


@dataclass
class AttackResult:
    strategy_id: str
    variant: str
    flaws: tuple[str, ...]
    seed: int
    success: bool
    attempts: int
    witness: Optional[dict] = None
    erp_violation_count: int = 0
    findings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "strategy_id": self.strategy_id,
            "strategy_name": STRATEGY_NAMES[self.strategy_id],
            "variant": self.variant,
            "flaws": list(self.flaws),
            "seed": self.seed,
            "success": self.success,
            "attempts": self.attempts,
            "witness": self.witness,
            "erp_violation_count": self.erp_violation_count,
            "findings": self.findings,
        }


def goal_violations(
    portal_records: Mapping[str, PortalRecord],
    erp: ErpStore,
    gateway_ledger: Iterable,
) -> list[dict]:
    """Concrete witnesses for the attacker's goal predicate, if any."""
    gateway_ledger = list(gateway_ledger)
    out = []
    for oid in sorted(portal_records):
        rec = portal_records[oid]
        if oid not in erp.objects:
            continue
        state = erp.status(oid)
        if (rec.access_granted or rec.view_state is PortalViewState.PAID_VIEW) \
                and state not in PAID_STATES:
            out.append({
                "kind": "portal_divergence",
                "object_id": oid,
                "portal_view": rec.view_state.value,
                "access_granted": rec.access_granted,
                "erp_state": state.value,
            })
    for oid in erp_unbacked_objects(erp, gateway_ledger):
        out.append({
            "kind": "erp_unbacked",
            "object_id": oid,
            "erp_state": erp.status(oid).value,
        })
    return out


def goal_predicate(portal_records, erp, gateway_ledger) -> bool:
    return bool(goal_violations(portal_records, erp, gateway_ledger))


def verify_witness(witness: dict) -> bool:
    """Re-check a success witness from its own snapshot; no simulation needed."""
    if not witness or not witness.get("transcript"):
        return False
    if witness["kind"] == "portal_divergence":
        return (
            (witness["access_granted"] or witness["portal_view"] == "PaidView")
            and witness["erp_state"] not in ("Captured", "Settled")
        )
    if witness["kind"] == "erp_unbacked":
        return witness["erp_state"] in ("Authorized", "Captured", "Settled")
    return False


# -- parameter spaces ------------------------------------------------------

def build_plans(strategy_id: str, scenario: Scenario) -> list[AttackPlan]:
    """Finite, deterministic dictionary of attempts, breadth-first by length."""
    attacker = scenario.attacker
    if attacker is None:
        raise ValueError("scenario declares no attacker account")
    own = attacker.objects[0]
    other = attacker.objects[1] if len(attacker.objects) > 1 else own
    login = {"op": "login", "user": attacker.user, "password": attacker.password}

    if strategy_id == "S1":
        return [
            AttackPlan(f"S1 {name}={value}", (
                login,
                {"op": "return", "object": own, "headers": [[name, value]]},
                {"op": "service", "object": own},
            ))
            for name in _HEADER_NAMES for value in _HEADER_VALUES
        ]

    if strategy_id == "S2":
        return [
            AttackPlan(f"S2 {name}={value}", (
                login,
                {"op": "return", "object": own, "cookies": {name: value}},
                {"op": "service", "object": own},
            ))
            for name in _COOKIE_NAMES for value in _COOKIE_VALUES
        ]

    if strategy_id == "S3":
        # replay recorded flow requests out of their original sequence
        dup_return = {"op": "return", "object": own, "duplicate": True}
        ret = {"op": "return", "object": own}
        pay = {"op": "pay", "object": own}
        sequences = [
            (dup_return,),
            (ret, dup_return),
            (ret, pay, dup_return),
            (pay, dup_return),
            (pay, dup_return, {"op": "service", "object": own}),
            (ret, pay, ret, {"op": "status", "object": own}),
            (pay, ret, ret, dup_return),
        ]
        return [
            AttackPlan(f"S3 replay #{i}", (login, *seq))
            for i, seq in enumerate(sequences)
        ]

    if strategy_id == "S4":
        actions = (
            {"op": "pay", "object": own},
            {"op": "return", "object": own},
            {"op": "status", "object": own},
            {"op": "service", "object": own},
        )
        plans = []
        frontier: list[tuple] = [()]
        for _length in range(3):
            frontier = [seq + (a,) for seq in frontier for a in actions]
            plans.extend(frontier)
        plans.extend([
            (actions[0], actions[1], actions[2], actions[3]),
            (actions[1], actions[0], actions[1], actions[3]),
            (actions[0], actions[0], actions[0], actions[1]),
            (actions[0], actions[1], actions[1], actions[3], actions[2]),
        ])
        return [
            AttackPlan(f"S4 seq #{i} len {len(seq)}", (login, *seq))
            for i, seq in enumerate(plans)
        ]

    if strategy_id == "S5":
        targets = [other]
        if attacker.foreign_object is not None:
            targets.append(attacker.foreign_object)
        plans = []
        for target in targets:
            plans.append(AttackPlan(f"S5 pay {own} claim {target}", (
                login,
                {"op": "pay", "object": own},
                {"op": "return", "object": target},
                {"op": "status", "object": target},
                {"op": "service", "object": target},
            )))
            plans.append(AttackPlan(f"S5 direct claim {target}", (
                login,
                {"op": "return", "object": target},
                {"op": "service", "object": target},
            )))
        return plans

    if strategy_id == "S6":
        return [
            AttackPlan(f"S6 flip bit {bit}", (
                login,
                {"op": "tamper_auth", "bit": bit},
                {"op": "service", "object": own},
            ))
            for bit in range(0, 512, 8)
        ]

    if strategy_id == "S7":
        wait = {"op": "wait", "ticks": scenario.gateway.latency + 4}
        return [
            AttackPlan("S7 replay callbacks against own object", (
                login,
                {"op": "pay", "object": own},
                wait,
                {"op": "replay_callbacks"},
                {"op": "replay_callbacks"},
                {"op": "status", "object": own},
            )),
            AttackPlan("S7 replay callbacks hoping to pay another object", (
                login,
                {"op": "pay", "object": own},
                wait,
                {"op": "replay_callbacks"},
                {"op": "status", "object": other},
                {"op": "service", "object": other},
            )),
        ]

    raise ValueError(f"unknown strategy id {strategy_id!r}")


# -- execution -------------------------------------------------------------

def _tamper_auth_cookie(session, bit: int) -> None:
    raw = session.cookies.get("auth")
    if raw is None:
        return
    data = bytearray(base64.b64decode(raw))
    if not data:
        return
    bit %= len(data) * 8
    data[bit // 8] ^= 1 << (bit % 8)
    session.cookies["auth"] = base64.b64encode(bytes(data)).decode()


def _execute_plan(sim: Simulation, plan: AttackPlan,
                  attacker_user: str) -> Optional[dict]:
    """Run the plan, checking the goal predicate after every step; returns the
    first witness or None."""
    session = sim.new_session()
    for step_no, step in enumerate(plan.steps):
        op = step["op"]
        if op == "wait":
            sim.advance(step.get("ticks", 1))
        elif op == "tamper_auth":
            _tamper_auth_cookie(session, step["bit"])
            continue
        elif op == "replay_callbacks":
            wires = [r.wire for r in sim.transcript
                     if r.direction == "gateway->erp"]
            for wire in wires:
                sim.deliver_gateway_callback(wire, source="attacker")
            sim.advance(1)
        else:
            req = sim.build_request(step, session, attacker_user)
            if step.get("duplicate"):
                sim.submit(req, session)
            sim.submit(req, session)
        violations = goal_violations(sim.portal.records, sim.erp,
                                     sim.gateway.ledger)
        if violations:
            v = violations[0]
            return {
                **v,
                "tick": sim.clock,
                "plan": plan.label,
                "step": step_no,
                "transcript": [r.to_dict() for r in sim.transcript[-8:]],
            }
    return None


def run_attack(
    strategy_id: str,
    config: PortalConfig,
    scenario: Scenario,
    seed: int = 0,
    budget: int = DEFAULT_BUDGET,
) -> AttackResult:
    """Explore the strategy's dictionary breadth-first; stop at first success."""
    plans = build_plans(strategy_id, scenario)
    attempts = 0
    erp_violation_count = 0
    for plan in plans[:budget]:
        attempts += 1
        sim = Simulation(scenario, config, seed)
        witness = _execute_plan(sim, plan, scenario.attacker.user)
        erp_violation_count += len(
            erp_unbacked_objects(sim.erp, sim.gateway.ledger)
        )
        if witness is not None:
            discrepancies = reconcile(sim.portal.records, sim.erp,
                                      detected_at=sim.clock)
            anomalies = scan_transcript(sim.transcript, scenario.vocabulary)
            return AttackResult(
                strategy_id=strategy_id,
                variant=config.variant.value,
                flaws=config.enabled_flaws(),
                seed=seed,
                success=True,
                attempts=attempts,
                witness=witness,
                erp_violation_count=erp_violation_count,
                findings={
                    "discrepancies": len(discrepancies),
                    "anomalies": len(anomalies),
                    "flagged_objects": sorted(
                        {d.object_id for d in discrepancies}),
                },
            )
    return AttackResult(
        strategy_id=strategy_id,
        variant=config.variant.value,
        flaws=config.enabled_flaws(),
        seed=seed,
        success=False,
        attempts=attempts,
        erp_violation_count=erp_violation_count,
    )


@dataclass
class SuiteResult:
    cells: list[AttackResult]
    coverage: dict[str, list[str]]
    erp_violation_count: int

    @property
    def successes(self) -> list[AttackResult]:
        return [c for c in self.cells if c.success]

    def to_dict(self) -> dict:
        return {
            "cells": [c.to_dict() for c in self.cells],
            "coverage": {k: list(v) for k, v in sorted(self.coverage.items())},
            "erp_violation_count": self.erp_violation_count,
            "success_count": len(self.successes),
        }


def run_suite(
    config: PortalConfig,
    scenario: Scenario,
    seeds: Iterable[int],
    budget: int = DEFAULT_BUDGET,
    with_coverage: bool = True,
) -> SuiteResult:
    """Full strategy x seed matrix, plus per-flaw coverage for the vulnerable
    variant (which strategies defeat each flaw enabled alone)."""
    seeds = list(seeds)
    cells = [
        run_attack(sid, config, scenario, seed, budget)
        for sid in STRATEGY_IDS
        for seed in seeds
    ]
    coverage: dict[str, list[str]] = {}
    if with_coverage and config.variant is Variant.VULNERABLE and seeds:
        for flaw in config.enabled_flaws():
            solo = PortalConfig.vulnerable({flaw})
            coverage[flaw] = [
                sid for sid in STRATEGY_IDS
                if run_attack(sid, solo, scenario, seeds[0], budget).success
            ]
    return SuiteResult(
        cells=cells,
        coverage=coverage,
        erp_violation_count=sum(c.erp_violation_count for c in cells),
    )
