"""``ffg-explorer`` command line."""

from __future__ import annotations

import argparse
import sys

from .app_model import SpecError, load_spec_file
from .ffg import FFGError, deserialize, render_text
from .harness import EXIT_OK, EXIT_SPEC, RunConfig, run
from .oracle import DEFAULT_SEP_THRESHOLD, DEFAULT_SIM_THRESHOLD
from .scenarios import PHASES


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffg-explorer", description="Functional-flow-graph guided GUI testing on simulated apps")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="explore an app spec and report bugs")
    r.add_argument("--app", required=True)
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--max-actions", type=int, default=500)
    r.add_argument("--max-iterations", type=int, default=6)
    r.add_argument("--disable", action="append", default=[], choices=sorted(PHASES), metavar="PHASE",
                   help="skip a scenario phase: " + ", ".join(sorted(PHASES)))
    r.add_argument("--sim-threshold", type=float, default=DEFAULT_SIM_THRESHOLD)
    r.add_argument("--sep-threshold", type=float, default=DEFAULT_SEP_THRESHOLD)
    r.add_argument("--oracle", choices=("spec", "remote"), default="spec")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out-dir", required=True)

    v = sub.add_parser("validate", help="load and check an app spec")
    v.add_argument("--app", required=True)

    s = sub.add_parser("show-ffg", help="print an FFG file as text")
    s.add_argument("path")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        try:
            cfg = RunConfig(
                app=args.app,
                out_dir=args.out_dir,
                seed=args.seed,
                max_actions=args.max_actions,
                max_iterations=args.max_iterations,
                disabled=frozenset(args.disable),
                sim_threshold=args.sim_threshold,
                sep_threshold=args.sep_threshold,
                oracle=args.oracle,
                jobs=args.jobs,
            )
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_SPEC
        result = run(cfg)
        if result.exit_code == EXIT_OK:
            crash, functional = result.sink.counts()
            print(f"{len(result.sink.reports)} bugs ({crash} crash, {functional} functional), "
                  f"{result.actions} actions; artifacts in {cfg.out_dir}")
        else:
            print(f"run failed with exit code {result.exit_code}; see {cfg.out_dir}/run.log", file=sys.stderr)
        return result.exit_code
    if args.command == "validate":
        try:
            spec = load_spec_file(args.app)
        except SpecError as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return EXIT_SPEC
        print(f"{spec.name}: {len(spec.pages)} pages, {len(spec.rules)} rules, {len(spec.var_decls)} variables")
        return EXIT_OK
    try:
        with open(args.path, encoding="utf-8") as fh:
            ffg = deserialize(fh.read())
    except (OSError, ValueError, FFGError) as exc:
        print(f"cannot read FFG: {exc}", file=sys.stderr)
        return EXIT_SPEC
    sys.stdout.write(render_text(ffg))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
