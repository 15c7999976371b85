"""payflow: a deterministic web-to-ERP payment flow simulator.

The package models a four-actor payment architecture (client, web portal,
payment gateway, ERP system of record) with an authority-enforced payment
state machine, signed gateway evidence, a vulnerable and a hardened portal
variant, an HTTP-level attack harness, and reconciliation tooling.
"""

from .actors import (
    ErpStore, Gateway, Portal, PortalConfig, PortalRecord, PortalViewState,
    Simulation, Variant,
)
from .attacks import (
    STRATEGY_IDS, AttackResult, SuiteResult, goal_predicate, run_attack,
    run_suite, verify_witness,
)
from .fsm import (
    Actor, ActorKind, BusinessObject, Decision, EventKind, PaymentState,
    TransitionEvent, TransitionTable, allowed_transitions, apply_transition,
    replay_audit, validate_event,
)
from .http_model import (
    HttpRequest, HttpResponse, Mutation, MutationKind, Session,
    apply_mutation, parse_request, serialize_request,
)
from .recon import (
    AnomalyEvent, Discrepancy, ScanConfig, reconcile, scan_transcript,
)
from .scenario import Scenario, load as load_scenario
from .tokens import (
    ClientToken, GatewayEvidence, NonceStore, SigningKey, Verdict,
    mint_client_token, sign_evidence, verify_client_token, verify_evidence,
)

__version__ = "0.1.0"
