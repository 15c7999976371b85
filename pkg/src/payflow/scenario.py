"""Scenario fixtures: users, invoices, gateway script, client scripts.

Scenarios are plain JSON so runs are diffable and reproducible. A scenario
never contains wall-clock data; all timing is in logical ticks.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

VALID_STEP_OPS = {
    "login", "pay", "return", "status", "service", "invoices", "wait",
    "request",
}


@dataclass(frozen=True)
class UserSpec:
    user_id: str
    password: str


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    owner: str
    amount: int
    currency: str = "EUR"


@dataclass(frozen=True)
class GatewaySpec:
    #: per-attempt outcomes; the last entry repeats for later attempts
    script: tuple[str, ...] = ("approve",)
    latency: int = 2


@dataclass(frozen=True)
class ScriptSpec:
    name: str
    user: str
    steps: tuple[dict, ...]
    expect: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AttackerSpec:
    user: str
    password: str
    objects: tuple[str, ...]
    foreign_object: Optional[str] = None


@dataclass(frozen=True)
class Scenario:
    users: tuple[UserSpec, ...]
    objects: tuple[ObjectSpec, ...]
    gateway: GatewaySpec
    scripts: tuple[ScriptSpec, ...] = ()
    vocabulary: frozenset[str] = frozenset({"obj", "user", "password"})
    attacker: Optional[AttackerSpec] = None
    timeout_ticks: int = 100

    def user(self, user_id: str) -> Optional[UserSpec]:
        return next((u for u in self.users if u.user_id == user_id), None)

    def object(self, object_id: str) -> Optional[ObjectSpec]:
        return next((o for o in self.objects if o.object_id == object_id), None)


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


def validate(sc: Scenario) -> list[str]:
    """All invariant violations, each with the offending location."""
    diags = []
    user_ids = {u.user_id for u in sc.users}
    if len(user_ids) != len(sc.users):
        diags.append("users: duplicate user id")
    obj_ids = set()
    for obj in sc.objects:
        if obj.object_id in obj_ids:
            diags.append(f"objects[{obj.object_id}]: duplicate object id")
        obj_ids.add(obj.object_id)
        if obj.owner not in user_ids:
            diags.append(f"objects[{obj.object_id}]: owner {obj.owner!r} undefined")
        if obj.amount <= 0:
            diags.append(f"objects[{obj.object_id}]: amount must be > 0")
    for outcome in sc.gateway.script:
        if outcome not in ("approve", "decline", "stall"):
            diags.append(f"gateway.script: unknown outcome {outcome!r}")
    if sc.gateway.latency < 1:
        diags.append("gateway.latency: must be >= 1")
    for script in sc.scripts:
        loc = f"scripts[{script.name}]"
        if script.user not in user_ids:
            diags.append(f"{loc}: user {script.user!r} undefined")
        for i, step in enumerate(script.steps):
            op = step.get("op")
            if op not in VALID_STEP_OPS:
                diags.append(f"{loc}.steps[{i}]: unknown op {op!r}")
                continue
            ref = step.get("object")
            if ref is not None and ref not in obj_ids:
                diags.append(f"{loc}.steps[{i}]: object {ref!r} undefined")
    if sc.attacker is not None:
        if sc.attacker.user not in user_ids:
            diags.append(f"attacker: user {sc.attacker.user!r} undefined")
        for oid in sc.attacker.objects:
            if oid not in obj_ids:
                diags.append(f"attacker: object {oid!r} undefined")
        if sc.attacker.foreign_object is not None \
                and sc.attacker.foreign_object not in obj_ids:
            diags.append(f"attacker: foreign object undefined")
    return diags


def from_dict(data: dict) -> Scenario:
    attacker = None
    if "attacker" in data:
        a = data["attacker"]
        attacker = AttackerSpec(
            user=a["user"], password=a["password"],
            objects=tuple(a.get("objects", ())),
            foreign_object=a.get("foreign_object"),
        )
    gw = data.get("gateway", {})
    sc = Scenario(
        users=tuple(UserSpec(u["id"], u["password"]) for u in data.get("users", ())),
        objects=tuple(
            ObjectSpec(o["id"], o["owner"], o["amount"], o.get("currency", "EUR"))
            for o in data.get("objects", ())
        ),
        gateway=GatewaySpec(
            script=tuple(gw.get("script", ("approve",))),
            latency=gw.get("latency", 2),
        ),
        scripts=tuple(
            ScriptSpec(name, s["user"], tuple(s["steps"]), s.get("expect", {}))
            for name, s in data.get("scripts", {}).items()
        ),
        vocabulary=frozenset(data.get("vocabulary", ("obj", "user", "password"))),
        attacker=attacker,
        timeout_ticks=data.get("timeout_ticks", 100),
    )
    return sc


def load(path: str | Path) -> Scenario:
    """Load and validate; raises ScenarioError with line-anchored diagnostics."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError([f"{path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}:{exc.lineno}: {exc.msg}"]) from exc
    try:
        sc = from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError([f"{path}: malformed scenario: {exc!r}"]) from exc
    diags = validate(sc)
    if diags:
        raise ScenarioError([f"{path}: {d}" for d in diags])
    return sc


def builtin_default() -> Scenario:
    """Bundled scenario: one legitimate user, one attacker account."""
    return from_dict({
        "users": [
            {"id": "alice", "password": "alice-pw"},
            {"id": "mallory", "password": "mallory-pw"},
        ],
        "objects": [
            {"id": "B1", "owner": "alice", "amount": 4999, "currency": "EUR"},
            {"id": "M1", "owner": "mallory", "amount": 100, "currency": "EUR"},
            {"id": "M2", "owner": "mallory", "amount": 25000, "currency": "EUR"},
        ],
        "gateway": {"script": ["approve"], "latency": 2},
        "vocabulary": ["obj", "user", "password"],
        "scripts": {
            "happy_path": {
                "user": "alice",
                "steps": [
                    {"op": "login"},
                    {"op": "invoices"},
                    {"op": "pay", "object": "B1"},
                    {"op": "wait", "ticks": 6},
                    {"op": "return", "object": "B1"},
                    {"op": "status", "object": "B1"},
                    {"op": "service", "object": "B1"},
                ],
                "expect": {
                    "erp": {"B1": "Settled"},
                    "portal_paid": {"B1": True},
                },
            },
        },
        "attacker": {
            "user": "mallory",
            "password": "mallory-pw",
            "objects": ["M1", "M2"],
            "foreign_object": "B1",
        },
    })


def builtin_abandoned() -> Scenario:
    """Payment started then abandoned; the gateway stalls, the ERP times out."""
    return from_dict({
        "users": [{"id": "alice", "password": "alice-pw"}],
        "objects": [{"id": "B1", "owner": "alice", "amount": 4999}],
        "gateway": {"script": ["stall"], "latency": 2},
        "scripts": {
            "abandoned": {
                "user": "alice",
                "steps": [
                    {"op": "login"},
                    {"op": "pay", "object": "B1"},
                ],
                "expect": {"erp": {"B1": "Failed"}, "portal_paid": {"B1": False}},
            },
        },
    })
