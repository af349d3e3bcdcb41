"""Batch command-line interface: run, resume, validate, plot.

``run`` executes a scenario end to end with periodic checkpoints; ``resume``
continues the latest checkpoint of an interrupted run and reproduces exactly
the records an uninterrupted run would have written.  Flag overrides beat
SWARMCODESIGN_* environment variables, which beat the scenario file.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .errors import ScenarioError
from .evolution import init_state, step_generation
from .plots import PLOT_KINDS, render
from .runlog import RunLog
from .scenario import Scenario, load_scenario, resolved_dict, scenario_from_dict, validate_scenario


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--generations", type=int, help="generation count override")
    parser.add_argument("--threads", type=int, help="evaluation worker threads")
    parser.add_argument("--objective", choices=("fitness", "roi"), help="objective mode override")
    parser.add_argument("--budget", type=float, help="swarm budget override (currency)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmcodesign",
        description="Co-evolutionary co-design of heterogeneous robot swarms",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("--scenario", required=True, help="scenario YAML file")
    p_run.add_argument("--out", required=True, help="run output directory")
    _add_override_flags(p_run)

    p_resume = sub.add_parser("resume", help="continue a run from its latest checkpoint")
    p_resume.add_argument("--out", required=True, help="existing run directory")
    p_resume.add_argument("--generations", type=int, help="new total generation count")

    p_val = sub.add_parser("validate", help="validate a scenario file")
    p_val.add_argument("--scenario", required=True)

    p_plot = sub.add_parser("plot", help="render plots from a run log")
    p_plot.add_argument("--run", required=True, help="run directory")
    p_plot.add_argument("--kind", default="all", choices=(*PLOT_KINDS, "all"))
    p_plot.add_argument("--out", help="plot output directory (defaults to the run dir)")
    return parser


def _step(state, scenario: Scenario):
    return step_generation(
        state,
        scenario.env,
        scenario.params,
        scenario.fitness_weights,
        scenario.budget,
        scenario.evaluation,
        scenario.distance,
        scenario.evolution,
        scenario.mutation,
        threads=scenario.threads,
    )


def _drive(state, scenario: Scenario, log: RunLog, until: int) -> None:
    interval = scenario.checkpoint_interval
    while state.generation < until:
        state, report = _step(state, scenario)
        log.append(report)
        print(
            f"gen {report.generation:4d}  species {len(report.census):3d}  "
            f"best {report.best['fitness']:10.3f}  ({report.duration_s:.2f}s)",
            flush=True,
        )
        if state.generation % interval == 0 or state.generation == until:
            log.save_checkpoint(state)
    budget = scenario.budget.c_budget
    log.write_summary(None if math.isinf(budget) else budget)


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario, args=args)
    errors, warnings = validate_scenario(scenario)
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    if errors:
        for message in errors:
            print(f"error: {message}", file=sys.stderr)
        return 2
    log = RunLog(Path(args.out))
    log.start(resolved_dict(scenario), scenario.raw)
    state = init_state(scenario.genome_config, scenario.evolution, scenario.seed)
    _drive(state, scenario, log, scenario.generations)
    print(f"run complete: {log.directory}")
    return 0


def cmd_resume(args) -> int:
    log = RunLog(Path(args.out))
    manifest = log.manifest()
    raw = dict(manifest["scenario_input"])
    if args.generations is not None:
        raw["generations"] = args.generations
    scenario = scenario_from_dict(raw)

    generation, state = log.latest_checkpoint()
    if scenario.generations <= generation:
        print(f"nothing to do: checkpoint at generation {generation}", file=sys.stderr)
        return 0
    log.truncate_after(generation)
    _drive(state, scenario, log, scenario.generations)
    print(f"resumed run complete: {log.directory}")
    return 0


def cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    errors, warnings = validate_scenario(scenario)
    for message in warnings:
        print(f"warning: {message}")
    for message in errors:
        print(f"error: {message}")
    if errors:
        return 2
    print(f"{args.scenario}: OK ({scenario.name})")
    return 0


def cmd_plot(args) -> int:
    try:
        written = render(args.run, args.kind, args.out)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "resume": cmd_resume,
        "validate": cmd_validate,
        "plot": cmd_plot,
    }
    try:
        return handlers[args.command](args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
