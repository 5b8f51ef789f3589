"""Command line front end: scenario running, figure suites, live server."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .model import DescriptionError, motor_count, parse_description
from .ops import assembly_scenario, fig13_suite, fig14_task, run_scenario


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="modstack",
                                     description="teleoperation stack simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)

    p_fig13 = sub.add_parser("fig13", help="four-strategy comparison under link loss")
    p_fig13.add_argument("--out", required=True)

    p_fig14 = sub.add_parser("fig14", help="fine joint placement task")
    p_fig14.add_argument("--out", required=True)

    p_asm = sub.add_parser("assembly", help="scripted limb-grasps-wheel assembly")
    p_asm.add_argument("--out", required=True)

    p_serve = sub.add_parser("serve", help="live teleoperation server")
    p_serve.add_argument("--scenario", required=True)
    p_serve.add_argument("--port", type=int, default=8700)
    p_serve.add_argument("--host", default="127.0.0.1")

    p_val = sub.add_parser("validate", help="validate a robot description file")
    p_val.add_argument("--desc", required=True)

    args = parser.parse_args(argv)

    if args.command == "run":
        scenario = _load_json(args.scenario)
        if args.seed is not None:
            scenario["seed"] = args.seed
        record = run_scenario(scenario)
        record.write_to(args.out)
        print(f"final state hash {record.final_state_hash}")
        print(f"wrote traces to {args.out}")
        return 0

    if args.command == "fig13":
        result = fig13_suite(out_dir=args.out)
        for row in result["summary"]:
            print(f"{row['strategy']:>9}: moved_during_loss={row['moved_during_loss']} "
                  f"reconnect_jump={row['reconnect_jump']:.4f} final_error={row['final_error']:.4f}")
        return 0

    if args.command == "fig14":
        result = fig14_task(out_dir=args.out)
        report = result["report"]
        print(f"goal {report['goal']:.4f} rad, final {report['final']:.4f} rad, "
              f"error {report['final_error']:.5f} rad")
        for press in report["presses"]:
            print(f"  press {press['duration']:.2f}s -> {press['displacement']:+.5f} rad")
        return 0

    if args.command == "assembly":
        record = assembly_scenario(out_dir=args.out)
        print(json.dumps(record.assembly, indent=2))
        return 0 if record.assembly["attached"] else 1

    if args.command == "serve":
        from .server import serve
        serve(_load_json(args.scenario), port=args.port, host=args.host)
        return 0

    if args.command == "validate":
        try:
            desc = parse_description(Path(args.desc).read_text())
        except DescriptionError as e:
            print(f"invalid: {e}", file=sys.stderr)
            return 1
        chains = ", ".join(f"{limb} ({len(c.joints)} joints)" for limb, c in sorted(desc.chains.items()))
        print(f"ok: {desc.name!r}, {len(desc.modules)} modules, {motor_count(desc)} motors")
        if chains:
            print(f"chains: {chains}")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
