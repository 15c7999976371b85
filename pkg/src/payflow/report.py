"""Run reports: assembly, deterministic serialization, and re-verification.

Reports contain only logical-tick timestamps, and JSON is emitted with sorted
keys, so identical invocations produce byte-identical files. Every attack
success carries its witness, which `verify_report` re-checks without
re-running any simulation.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

from .attacks import STRATEGY_IDS, SuiteResult, verify_witness


def build_report(
    *,
    config: dict,
    seed: int,
    scenario_outcomes: list[dict],
    suite: Optional[SuiteResult] = None,
    discrepancies: Optional[list] = None,
    anomalies: Optional[list] = None,
    periodic_reconcile: Optional[list] = None,
    erp_snapshot: Optional[dict] = None,
    invariants: Optional[dict] = None,
) -> dict:
    report = {
        "config": config,
        "seed": seed,
        "scenarios": scenario_outcomes,
        "reconciliation": {
            "discrepancies": [d.to_dict() for d in (discrepancies or [])],
            "anomalies": [a.to_dict() for a in (anomalies or [])],
            "periodic": periodic_reconcile or [],
        },
        "erp_snapshot": erp_snapshot or {},
        "invariants": invariants or {},
    }
    if suite is not None:
        report["attacks"] = suite.to_dict()
    return report


def dump_json(report: dict) -> bytes:
    return json.dumps(report, sort_keys=True, indent=2).encode() + b"\n"


def dump_text(report: dict) -> str:
    lines = [
        f"variant: {report['config'].get('variant')}",
        f"flaws: {','.join(report['config'].get('flaws', [])) or '-'}",
        f"seed: {report['seed']}",
        "",
    ]
    for sc in report["scenarios"]:
        status = "ok" if sc["expectations_ok"] else "FAILED"
        lines.append(f"scenario {sc['name']}: {status}")
        for oid, state in sorted(sc.get("final_erp", {}).items()):
            lines.append(f"  {oid}: erp={state} portal={sc['portal'].get(oid)}")
    attacks = report.get("attacks")
    if attacks:
        lines.append("")
        lines.append(f"attack suite: {attacks['success_count']} successes "
                     f"over {len(attacks['cells'])} cells")
        for flaw, sids in attacks.get("coverage", {}).items():
            lines.append(f"  {flaw} defeated by: {', '.join(sids) or 'nothing'}")
    rec = report["reconciliation"]
    lines.append("")
    lines.append(f"discrepancies: {len(rec['discrepancies'])}  "
                 f"anomalies: {len(rec['anomalies'])}")
    inv = report.get("invariants", {})
    for name, count in sorted(inv.items()):
        lines.append(f"invariant {name}: {count} violations")
    return "\n".join(lines) + "\n"


def write_matrix_csv(suite: SuiteResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy_id", "seed", "success", "attempts",
                         "erp_violations"])
        for cell in suite.cells:
            writer.writerow([cell.strategy_id, cell.seed,
                             int(cell.success), cell.attempts,
                             cell.erp_violation_count])


def write_transcript_jsonl(transcript, path: Path) -> None:
    with open(path, "w") as fh:
        for rec in transcript:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def verify_report(report: dict) -> list[str]:
    """Re-check every success witness in a report; returns problems found."""
    problems = []
    attacks = report.get("attacks")
    if attacks is None:
        return problems
    for i, cell in enumerate(attacks["cells"]):
        if cell["strategy_id"] not in STRATEGY_IDS:
            problems.append(f"cells[{i}]: unknown strategy {cell['strategy_id']}")
        if cell["success"]:
            if not cell.get("witness"):
                problems.append(f"cells[{i}]: success without witness")
            elif not verify_witness(cell["witness"]):
                problems.append(f"cells[{i}]: witness does not prove success")
        elif cell.get("witness"):
            problems.append(f"cells[{i}]: failed cell carries a witness")
    return problems
