"""``cylflow`` command line.

Exit codes: 0 success, 1 solver failure, 2 falsified hypothesis or failed
accuracy check, 64 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .config import ConfigError, builtin_scenarios, load_config


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cylflow", description="Capillary graph flow over cylinders.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", help="config JSON path or built-in scenario name")
        s.add_argument("--out", help="output directory (default $CYLFLOW_OUTPUT_ROOT/<name>)")
        return s

    with_config("flow", "integrate the flow and classify the long-time behaviour")
    with_config("translator", "solve the translator problem by Newton's method")
    s = with_config("sweep", "flow plus classifier over a parameter list")
    s.add_argument("--param", choices=["A", "theta-offset"])
    s.add_argument("--values", type=_values)
    s.add_argument("--workers", type=int)
    s = with_config("refine", "translator convergence study under grid refinement")
    s.add_argument("--levels", type=int)
    s.add_argument("--workers", type=int)
    with_config("check-conditions", "evaluate the three structural hypotheses")
    sub.add_parser("list-scenarios", help="print the built-in scenario names")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "list-scenarios":
        print("\n".join(builtin_scenarios()))
        return harness.EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.command == "flow":
            code, summary = harness.run_flow_scenario(cfg, args.out)
        elif args.command == "translator":
            code, summary = harness.run_translator_scenario(cfg, args.out)
        elif args.command == "sweep":
            code, summary = harness.run_sweep(cfg, args.param, args.values, args.workers, args.out)
        elif args.command == "refine":
            code, summary = harness.run_refine(cfg, args.levels, args.workers, args.out)
        else:
            code, summary = harness.run_check_conditions(cfg, args.out)
    except ConfigError as exc:
        print(f"cylflow: config error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG
    print(json.dumps(_brief(args.command, summary), default=harness._jsonable, sort_keys=True))
    return code


def _brief(command: str, summary: dict) -> dict:
    """The headline numbers of a summary, for the terminal."""
    keys = {
        "flow": ("stop_reason", "t_final", "c_est", "I", "classification", "oracle", "acceptance", "error"),
        "translator": ("solution", "flux_identity", "speed_class", "oracle", "error"),
        "sweep": ("parameter", "monotone", "acceptance"),
        "refine": ("orders", "exact", "acceptance", "error"),
        "check-conditions": ("I", "conditions"),
    }[command]
    out = {k: summary[k] for k in keys if k in summary}
    if command == "sweep":
        out["verdicts"] = [(r["value"], r["verdict"]) for r in summary["rows"]]
    if "classification" in out:
        c = out["classification"]
        out["classification"] = {k: c[k] for k in ("verdict", "expected", "falsified")}
    return out


if __name__ == "__main__":
    sys.exit(main())
