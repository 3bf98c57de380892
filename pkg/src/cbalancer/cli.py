"""Command-line entry point: ``cbalancer {run,sweep-alpha,compare,validate}``.

Errors print ``error: <category>: <message>`` on stderr and exit with 2.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .contention import Strategy
from .errors import CBalancerError
from .experiments import alpha_sweep, compare, compare_csv, run, sweep_csv
from .objective import AlphaConvention
from .scenario import Scenario, bundled_scenario_path, bundled_scenarios, load_scenario

DEFAULT_ALPHAS = "0,0.25,0.5,0.75,0.85,1"


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _name_list(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    for name in names:
        if name not in {s.value for s in Strategy}:
            raise argparse.ArgumentTypeError(f"unknown strategy {name!r}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbalancer", description="Container rebalancing experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log control-plane activity")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_strategy=True):
        p.add_argument("--scenario", required=True, help="scenario file, or the name of a bundled scenario")
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--alpha-convention", choices=[c.value for c in AlphaConvention])
        if with_strategy:
            p.add_argument("--strategy", choices=[s.value for s in Strategy])
        p.add_argument("--report-out", type=Path, help="write the report here instead of stdout")

    common(sub.add_parser("run", help="simulate one scenario and emit a JSON-lines report"))
    p = sub.add_parser("sweep-alpha", help="rebalanced runs over several alpha values (CSV)")
    common(p, with_strategy=False)
    p.add_argument("--alphas", type=_float_list, default=_float_list(DEFAULT_ALPHAS))
    p = sub.add_parser("compare", help="compare strategies on one scenario (CSV)")
    common(p, with_strategy=False)
    p.add_argument("--strategies", type=_name_list, default=["spread", "cbalancer"])
    p = sub.add_parser("validate", help="parse and validate a scenario")
    p.add_argument("--scenario", required=True)
    return parser


def resolve_scenario(ref: str) -> Scenario:
    path = Path(ref)
    if not path.exists() and ref in bundled_scenarios():
        path = bundled_scenario_path(ref)
    return load_scenario(path)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        scenario = resolve_scenario(args.scenario)
        if args.command == "validate":
            n = len(scenario.containers())
            print(f"ok: {scenario.name}: {len(scenario.nodes)} nodes, {n} containers")
            return 0
        scenario = scenario.with_overrides(
            seed=args.seed,
            alpha=args.alpha,
            strategy=getattr(args, "strategy", None),
            alpha_convention=args.alpha_convention,
        )
        if args.command == "run":
            _emit(run(scenario).to_jsonl(), args.report_out)
        elif args.command == "sweep-alpha":
            _emit(sweep_csv(alpha_sweep(scenario, args.alphas)), args.report_out)
        else:
            _emit(compare_csv(compare(scenario, args.strategies)), args.report_out)
    except CBalancerError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
