"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import errors
from .runner import OUT_DIR_ENV, describe, resolve_out_dir, run_scenario
from .scenario import ENGINES, ExperimentScenario, load_preset, preset_names

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

NUMERICAL_ERRORS = (
    errors.NonConvergence,
    errors.NumericalFailure,
    errors.IonCollision,
    errors.StepTooLarge,
    errors.TruncationOverflow,
    errors.FitDiverged,
    errors.EmptyTrace,
)


def _add_source(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="scenario YAML file")
    src.add_argument("--preset", help="named preset (see 'presets list')")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--engine", action="append", choices=ENGINES,
                   help="override the engine list (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iontransport", description="Energy transport in trapped-ion chains.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write CSV traces plus a manifest",
                         epilog=f"Output directory: --out-dir, else ${OUT_DIR_ENV}/<name>, else runs/<name>.")
    _add_source(run)
    run.add_argument("--out-dir", help="directory for output files")

    desc = sub.add_parser("describe", help="print an intermediate result as JSON")
    desc.add_argument("target", choices=("equilibrium", "modes", "local-model"))
    _add_source(desc)
    desc.add_argument("--n-ions", type=int, help="chain length (default: every n_ions of the scenario)")

    presets = sub.add_parser("presets", help="inspect bundled presets")
    presets_sub = presets.add_subparsers(dest="presets_command", required=True)
    presets_sub.add_parser("list", help="list preset names")

    val = sub.add_parser("validate", help="check a scenario without running it")
    _add_source(val)
    return parser


def _load(args) -> ExperimentScenario:
    if args.config:
        try:
            scenario = ExperimentScenario.load(args.config)
        except OSError as exc:
            raise errors.IoFailure(f"cannot read {args.config}: {exc}") from exc
    else:
        scenario = load_preset(args.preset)
    return scenario.with_overrides(seed=args.seed, engines=args.engine)


def _dispatch(args) -> int:
    if args.command == "presets":
        for name in preset_names():
            print(f"{name}\t{load_preset(name).description}")
        return EXIT_OK
    scenario = _load(args)
    if args.command == "validate":
        print(f"ok: {scenario.name}")
        return EXIT_OK
    if args.command == "describe":
        sizes = [args.n_ions] if args.n_ions else list(scenario.n_ions)
        if any(n < 1 for n in sizes):
            raise errors.ConfigInvalid("--n-ions must be positive")
        reports = [describe(args.target, scenario, n) for n in sizes]
        print(json.dumps(reports[0] if len(reports) == 1 else reports, indent=2))
        return EXIT_OK
    result = run_scenario(scenario, resolve_out_dir(args.out_dir, scenario))
    for name in result.files:
        print(name)
    print(f"manifest: {result.manifest_path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (errors.ConfigInvalid, errors.BranchUnavailable) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (errors.IoFailure, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
