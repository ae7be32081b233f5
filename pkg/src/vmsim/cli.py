"""Command-line front end.

Subcommands: ``validate`` a scenario file, ``run`` one scenario, ``compare``
several maintainer kinds on the same scenario, ``anomaly-demo`` (the built-in
interleaving schedule, exit 0 only if the uncompensated view is wrong and the
compensated one matches the oracle), and ``generate`` a workload file.

Writing a report with ``-o`` also renders comparison figures next to it;
``--no-figures`` turns that off. ``VMSIM_SEED`` overrides the file seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .costs import ComparisonTable, compare, measure
from .errors import VmsimError
from .generator import GeneratorSpec, anomaly_scenario, benchmark_view, generate
from .scenario_io import dumps, load_scenario
from .simulation import LatencyModel, Scenario, oracle_view, run as run_scenario
from .strategies import MaintainerKind
from .views import ViewHierarchy

DEFAULT_COMPARE_KINDS = "SMR,NSMR,SMI,NSMI_ECA"


def _seed_override() -> int | None:
    raw = os.environ.get("VMSIM_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise VmsimError(f"VMSIM_SEED must be an integer, got {raw!r}") from None


def _load(path: str) -> Scenario:
    return load_scenario(path, seed_override=_seed_override())


def _parse_kinds(raw: str) -> list[MaintainerKind]:
    kinds = []
    for name in raw.split(","):
        name = name.strip()
        try:
            kinds.append(MaintainerKind(name))
        except ValueError:
            raise VmsimError(
                f"unknown kind {name!r}; one of {[k.value for k in MaintainerKind]}"
            ) from None
    return kinds


def _emit_report(table: ComparisonTable, fmt: str, out: str | None,
                 figures: bool) -> None:
    text = table.to_csv() if fmt == "csv" else table.to_json()
    if out is None:
        sys.stdout.write(text)
        return
    out_path = Path(out)
    out_path.write_text(text, encoding="utf-8")
    sys.stdout.write(f"wrote {out_path}\n")
    if figures:
        from .figures import render_comparison_figures

        prefix = out_path.parent / out_path.stem
        for path in render_comparison_figures(table, prefix):
            sys.stdout.write(f"wrote {path}\n")


def _cmd_validate(args) -> int:
    scenario = _load(args.scenario)
    diagnostics = scenario.validate()
    if diagnostics:
        for diag in diagnostics:
            sys.stderr.write(f"{diag}\n")
        return 1
    sys.stdout.write("ok\n")
    return 0


def _cmd_run(args) -> int:
    scenario = _load(args.scenario)
    result = run_scenario(scenario)
    report = measure(result)
    if args.trace:
        Path(args.trace).write_text(result.trace.render(), encoding="utf-8")
    _emit_report(ComparisonTable((report,)), args.format, args.out,
                 figures=not args.no_figures)
    return 0


def _cmd_compare(args) -> int:
    scenario = _load(args.scenario)
    kinds = _parse_kinds(args.kinds)
    table = compare(scenario, kinds)
    _emit_report(table, args.format, args.out, figures=not args.no_figures)
    return 0


def _cmd_anomaly_demo(args) -> int:
    naive = run_scenario(anomaly_scenario(MaintainerKind.NSMI_NAIVE))
    compensated = run_scenario(anomaly_scenario(MaintainerKind.NSMI_ECA))
    oracle = oracle_view(anomaly_scenario())
    sys.stdout.write(
        "schedule: second append lands at the source while the first delta "
        "query is still unanswered\n")
    sys.stdout.write(f"oracle:      {oracle.canonical()}\n")
    sys.stdout.write(f"naive:       {naive.final_view.canonical()}\n")
    sys.stdout.write(f"compensated: {compensated.final_view.canonical()}\n")
    naive_wrong = naive.final_view != oracle
    eca_right = compensated.final_view == oracle
    if naive_wrong and eca_right:
        sys.stdout.write("anomaly reproduced: uncompensated view is wrong, "
                         "compensated view matches the oracle\n")
        return 0
    sys.stdout.write("anomaly NOT reproduced\n")
    return 1


def _cmd_generate(args) -> int:
    spec = GeneratorSpec(scale=args.scale, update_count=args.updates, seed=args.seed)
    initial, updates = generate(spec)
    hierarchy = ViewHierarchy([rel.schema for rel in initial.values()],
                              [benchmark_view()], "V")
    scenario = Scenario(initial=initial, hierarchy=hierarchy,
                        kind=MaintainerKind(args.maintainer),
                        replicate=frozenset(initial), updates=updates,
                        latency=LatencyModel(default=1), seed=args.seed)
    Path(args.out).write_text(dumps(scenario), encoding="utf-8")
    sys.stdout.write(f"wrote {args.out}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmsim",
        description="Deterministic warehouse view-maintenance simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse a scenario file and check it")
    p.add_argument("scenario")
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("run", help="run one scenario and report its costs")
    p.add_argument("scenario")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--trace", help="write the event trace to this file")
    p.add_argument("-o", "--out", help="write the report here instead of stdout")
    p.add_argument("--no-figures", action="store_true",
                   help="skip rendering figures next to the report file")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("compare", help="run several kinds on one scenario")
    p.add_argument("scenario")
    p.add_argument("--kinds", default=DEFAULT_COMPARE_KINDS,
                   help=f"comma-separated kinds (default {DEFAULT_COMPARE_KINDS})")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--out", help="write the report here instead of stdout")
    p.add_argument("--no-figures", action="store_true",
                   help="skip rendering figures next to the report file")
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("anomaly-demo",
                       help="reproduce the interleaving anomaly and its fix")
    p.set_defaults(fn=_cmd_anomaly_demo)

    p = sub.add_parser("generate", help="write a benchmark scenario file")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--updates", type=int, default=100)
    p.add_argument("--maintainer", default="SMI",
                   choices=[k.value for k in MaintainerKind])
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_generate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except VmsimError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
