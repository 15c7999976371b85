"""Command-line entry point.

Subcommands:
  run            simulate scenarios, optionally sweep the attack suite,
                 and emit a deterministic report (plus figures and CSV)
  validate       check a scenario file without executing it
  verify-report  re-check every attack witness inside a report file

Exit codes for `run`: 0 when all expectations hold (hardened runs must show
zero attack successes, vulnerable attack-suite runs must show at least one),
1 when an expectation fails, 2 on invalid input.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import attacks, recon, report as report_mod, scenario as scenario_mod
from .actors import PortalConfig, Simulation, Variant, erp_unbacked_objects
from .fsm import PaymentState
from .recon import reconcile, scan_transcript

EXIT_OK = 0
EXIT_EXPECTATION_FAILED = 1
EXIT_INVALID_INPUT = 2


def _parse_flaws(raw: str) -> set[str]:
    return {p.strip() for p in raw.split(",") if p.strip()}


def _default_seed() -> int:
    env = os.environ.get("PAYFLOW_SEED")
    return int(env) if env else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="payflow",
        description="Deterministic web-to-ERP payment flow simulator and "
                    "attack harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run scenarios and/or the attack suite")
    run.add_argument("--variant", choices=["vulnerable", "hardened"],
                     default="hardened")
    run.add_argument("--flaws", default=None,
                     help="comma list from F1,F2,F3,F4,F4b (vulnerable only; "
                          "default: all)")
    run.add_argument("--scenario", default=None, help="scenario JSON path "
                     "(default: bundled scenario)")
    run.add_argument("--attack-suite", action="store_true")
    run.add_argument("--seed", type=int, default=None,
                     help="base seed (env PAYFLOW_SEED as fallback, then 0)")
    run.add_argument("--suite-seeds", type=int, default=20,
                     help="number of seeds in the attack matrix")
    run.add_argument("--budget", type=int, default=attacks.DEFAULT_BUDGET,
                     help="attempt budget per attack cell")
    run.add_argument("--report", default=None, help="report file path")
    run.add_argument("--format", choices=["json", "text"], default="json")
    run.add_argument("--reconcile-every", type=int, default=None, metavar="N",
                     help="also reconcile every N ticks during scenario runs")
    run.add_argument("--no-figures", action="store_true",
                     help="skip matplotlib figure rendering")

    val = sub.add_parser("validate", help="validate a scenario file")
    val.add_argument("path")

    ver = sub.add_parser("verify-report",
                         help="re-check attack witnesses in a report")
    ver.add_argument("path")
    return parser


def _run_scenarios(sc, config, seed, reconcile_every):
    outcomes = []
    all_discrepancies = []
    all_anomalies = []
    periodic = []
    transcripts = {}
    authority_violations = 0
    unbacked = 0
    for script in sc.scripts:
        sim = Simulation(sc, config, seed)
        if reconcile_every:
            def _periodic(s, name=script.name):
                if s.clock % reconcile_every == 0:
                    found = reconcile(s.portal.records, s.erp,
                                      detected_at=s.clock)
                    periodic.append({"scenario": name, "tick": s.clock,
                                     "discrepancies": len(found)})
            sim.observers.append(_periodic)
        session = sim.new_session()
        sim.run_script(list(script.steps), session, default_user=script.user)
        sim.drain()
        final_erp = {oid: obj.state.value
                     for oid, obj in sorted(sim.erp.objects.items())}
        portal_view = {oid: rec.view_state.value
                       for oid, rec in sorted(sim.portal.records.items())}
        ok = True
        for oid, want in script.expect.get("erp", {}).items():
            ok = ok and final_erp.get(oid) == want
        for oid, want_paid in script.expect.get("portal_paid", {}).items():
            rec = sim.portal.records.get(oid)
            is_paid = rec is not None and (
                rec.view_state.value == "PaidView" or rec.access_granted)
            ok = ok and (is_paid == bool(want_paid))
        discrepancies = reconcile(sim.portal.records, sim.erp,
                                  detected_at=sim.clock)
        anomalies = scan_transcript(sim.transcript, sc.vocabulary)
        authority_violations += len(sim.authority_violations)
        unbacked += len(erp_unbacked_objects(sim.erp, sim.gateway.ledger))
        all_discrepancies.extend(discrepancies)
        all_anomalies.extend(anomalies)
        transcripts[script.name] = sim.transcript
        outcomes.append({
            "name": script.name,
            "user": script.user,
            "expectations_ok": ok,
            "final_erp": final_erp,
            "portal": portal_view,
            "transcript_records": len(sim.transcript),
            "discrepancies": len(discrepancies),
            "anomalies": len(anomalies),
        })
        last_snapshot = sim.erp.snapshot()
    snapshot = last_snapshot if sc.scripts else {}
    return (outcomes, all_discrepancies, all_anomalies, periodic, snapshot,
            authority_violations, unbacked, transcripts)


def cmd_run(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        if args.variant == "hardened":
            if args.flaws:
                print("error: --flaws applies to the vulnerable variant only",
                      file=sys.stderr)
                return EXIT_INVALID_INPUT
            config = PortalConfig.hardened()
        else:
            flaws = _parse_flaws(args.flaws) if args.flaws else None
            config = PortalConfig.vulnerable(flaws)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT

    try:
        sc = (scenario_mod.load(args.scenario) if args.scenario
              else scenario_mod.builtin_default())
    except scenario_mod.ScenarioError as exc:
        for diag in exc.diagnostics:
            print(f"error: {diag}", file=sys.stderr)
        return EXIT_INVALID_INPUT

    (outcomes, discrepancies, anomalies, periodic, snapshot,
     authority_violations, unbacked, transcripts) = _run_scenarios(
        sc, config, seed, args.reconcile_every)

    suite = None
    if args.attack_suite:
        if sc.attacker is None:
            print("error: scenario declares no attacker account",
                  file=sys.stderr)
            return EXIT_INVALID_INPUT
        seeds = [seed + i for i in range(args.suite_seeds)]
        suite = attacks.run_suite(config, sc, seeds, budget=args.budget)

    invariants = {
        "hardened_authority_violations": authority_violations,
        "erp_unbacked_objects": unbacked
        + (suite.erp_violation_count if suite else 0),
    }
    rep = report_mod.build_report(
        config={
            "variant": config.variant.value,
            "flaws": list(config.enabled_flaws()),
            "scenario": args.scenario or "builtin:default",
            "attack_suite": bool(args.attack_suite),
            "suite_seeds": args.suite_seeds if args.attack_suite else 0,
            "budget": args.budget,
            "reconcile_every": args.reconcile_every,
        },
        seed=seed,
        scenario_outcomes=outcomes,
        suite=suite,
        discrepancies=discrepancies,
        anomalies=anomalies,
        periodic_reconcile=periodic,
        erp_snapshot=snapshot,
        invariants=invariants,
    )

    if args.report:
        out = Path(args.report)
        out.parent.mkdir(parents=True, exist_ok=True)
        if args.format == "json":
            out.write_bytes(report_mod.dump_json(rep))
        else:
            out.write_text(report_mod.dump_text(rep))
        for name, transcript in transcripts.items():
            report_mod.write_transcript_jsonl(
                transcript, out.with_name(f"{out.stem}_{name}.transcript.jsonl"))
        if suite is not None:
            report_mod.write_matrix_csv(
                suite, out.with_name(f"{out.stem}_attack_matrix.csv"))
            if not args.no_figures:
                from . import plots
                plots.render_attack_matrix(
                    suite, out.with_name(f"{out.stem}_attack_matrix.png"))
                plots.render_flaw_coverage(
                    suite, out.with_name(f"{out.stem}_coverage.png"))
    else:
        sys.stdout.write(report_mod.dump_text(rep))

    ok = all(o["expectations_ok"] for o in outcomes)
    ok = ok and invariants["hardened_authority_violations"] == 0
    ok = ok and invariants["erp_unbacked_objects"] == 0
    if suite is not None:
        if config.variant is Variant.HARDENED:
            ok = ok and not suite.successes
        else:
            # the vulnerable variant exists to demonstrate the flaw
            ok = ok and bool(suite.successes)
    return EXIT_OK if ok else EXIT_EXPECTATION_FAILED


def cmd_validate(args) -> int:
    try:
        scenario_mod.load(args.path)
    except scenario_mod.ScenarioError as exc:
        for diag in exc.diagnostics:
            print(diag, file=sys.stderr)
        return EXIT_INVALID_INPUT
    print("ok")
    return EXIT_OK


def cmd_verify_report(args) -> int:
    try:
        rep = json.loads(Path(args.path).read_text())
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    problems = report_mod.verify_report(rep)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return EXIT_EXPECTATION_FAILED
    print("all witnesses verified")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "validate":
        return cmd_validate(args)
    return cmd_verify_report(args)


if __name__ == "__main__":
    sys.exit(main())
