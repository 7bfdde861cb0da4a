"""Iterative exploration loop: bootstrap, initialize, then generate/execute/update."""

from __future__ import annotations

import csv
import json
import logging
import os
import random
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence

from . import ltv, stv
from .app_model import ActionStep, AppSpec, DomainViolation, SimulatorSession, SpecError, clone_session, load_spec_file, perform, reset
from .executor import BugSink, ScenarioRun, candidate_actions, run_plan
from .ffg import FFG, ExecStep, ExecutionTrace, FFGError, initialize_ffg, serialize
from .oracle import DEFAULT_SEP_THRESHOLD, DEFAULT_SIM_THRESHOLD, OracleError, SpecOracle, make_oracle
from .scenarios import PHASES, TestScenario
from .updater import Thresholds, apply_iteration

log = logging.getLogger("ffg_explorer")

EXIT_OK, EXIT_SPEC, EXIT_INTERNAL = 0, 2, 3
SCENARIOS_PER_STRATEGY = 8
INVARIANT_ALPHAS_PER_FLOW = 2  # generator allows 4; two keep the default budget balanced
SCENARIO_ACTION_CAP = 60
SIMULATED_MILLIS_PER_ACTION = 250
METRIC_COLUMNS = ("iter", "flows", "functionalities", "scenarios", "bugs_crash", "bugs_functional", "actions", "millis")


@dataclass
class RunConfig:
    app: str
    out_dir: str
    seed: int = 1
    max_actions: int = 500
    max_iterations: int = 6
    disabled: FrozenSet[str] = frozenset()
    sim_threshold: float = DEFAULT_SIM_THRESHOLD
    sep_threshold: float = DEFAULT_SEP_THRESHOLD
    oracle: str = "spec"
    jobs: int = 1

    def __post_init__(self):
        if self.max_actions <= 0 or self.max_iterations < 0:
            raise ValueError("budgets must be positive")
        unknown = set(self.disabled) - set(PHASES)
        if unknown:
            raise ValueError(f"unknown phase(s): {', '.join(sorted(unknown))}")
        if self.jobs < 1:
            raise ValueError("--jobs must be at least 1")


@dataclass
class Metrics:
    iter: int
    flows: int
    functionalities: int
    scenarios: int
    bugs_crash: int
    bugs_functional: int
    actions: int
    millis: int

    def row(self) -> List[str]:
        return [str(getattr(self, c)) for c in METRIC_COLUMNS]


@dataclass
class RunResult:
    exit_code: int
    ffg: Optional[FFG] = None
    sink: BugSink = field(default_factory=BugSink)
    metrics: List[Metrics] = field(default_factory=list)
    scenarios: List[TestScenario] = field(default_factory=list)
    actions: int = 0


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------


def scripted_bootstrap(session: SimulatorSession, steps: Sequence[ActionStep]) -> ExecutionTrace:
    trace = ExecutionTrace(initial_state=dict(session.valuation))
    for i, s in enumerate(steps):
        out = perform(session, s)
        trace.append(s, out)
        if not out.ok:
            raise SpecError(f"bootstrap[{i}]", f"scripted step {s.render()} returned {out.status}")
    return trace


def bootstrap_explore(session: SimulatorSession, budget: int, seed: int) -> ExecutionTrace:
    """Systematic walk: unvisited widgets first, seeded tie-break, back when exhausted.

    Candidates are tried on a clone first, so the walk never records a
    failing or crashing step.
    """
    rng = random.Random(seed)
    trace = ExecutionTrace(initial_state=dict(session.valuation))
    visited = set()
    while len(trace.steps) < budget and not session.crashed:
        viable = []
        for c in candidate_actions(session):
            probe = clone_session(session)
            if perform(probe, c).ok:
                viable.append(c)
        if not viable:
            break
        fresh = [c for c in viable if c.action != "back" and (c.page, c.widget) not in visited]
        if fresh:
            step = fresh[rng.randrange(len(fresh))]
        else:
            backs = [c for c in viable if c.action == "back"]
            step = backs[0] if backs else viable[rng.randrange(len(viable))]
        visited.add((step.page, step.widget))
        trace.append(step, perform(session, step))
    return trace


# ---------------------------------------------------------------------------
# Scenario generation and scheduling
# ---------------------------------------------------------------------------


def generate_scenarios(ffg: FFG, spec: AppSpec, oracle: SpecOracle, cfg: RunConfig,
                       last_exercised: Dict[str, int]) -> List[TestScenario]:
    """Each strategy capped and ranked least-recently-exercised first, then interleaved LTV-first."""
    groups: Dict[str, List[TestScenario]] = {}

    def put(items):
        for sc in items:
            groups.setdefault(sc.strategy, []).append(sc)

    flows = [ffg.flows[k] for k in sorted(ffg.flows)]
    decls = spec.decls
    if "ltv-func" not in cfg.disabled:
        put(ltv.gen_completeness(ffg, spec, oracle))
        put(ltv.gen_independence(ffg, oracle, cfg.sep_threshold))
    if "ltv-flow" not in cfg.disabled:
        for f in flows:
            put(ltv.gen_condition_partition(f, ffg, decls))
        for f in flows:
            put(ltv.gen_minimal_violation(f, ffg, decls))
        for f in flows:
            put(ltv.gen_condition_invariant(f, ffg, spec, oracle, cfg.seed, INVARIANT_ALPHAS_PER_FLOW))
    if "stv-single" not in cfg.disabled:
        for f in flows:
            put(stv.gen_single_flow(f, ffg, spec, oracle, cfg.seed))
    if "stv-cross" not in cfg.disabled:
        put(stv.gen_cross_flow(ffg, spec))

    order = [s for phase in ("ltv-func", "ltv-flow", "stv-single", "stv-cross") for s in PHASES[phase]]
    queues = []
    for strategy in order:
        items = groups.get(strategy, [])
        ranked = sorted(enumerate(items), key=lambda p: (last_exercised.get(p[1].object, 0), p[0]))
        queues.append([sc for _, sc in ranked[:SCENARIOS_PER_STRATEGY]])
    # round-robin so a tight budget is shared across strategies instead of
    # being drained by whichever comes first
    out = []
    for rank in range(SCENARIOS_PER_STRATEGY):
        out.extend(q[rank] for q in queues if rank < len(q))
    return out


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_metrics(metrics: Sequence[Metrics], path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRIC_COLUMNS)
            for m in metrics:
                w.writerow(m.row())
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc.strerror}") from exc


def _setup_log(out_dir: str) -> logging.Handler:
    handler = logging.FileHandler(os.path.join(out_dir, "run.log"), mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------


def _execute_all(scenarios, ffg, spec, oracle, cfg, used) -> List[ScenarioRun]:
    """Run scenarios in order against the remaining action budget.

    With ``jobs > 1`` scenarios run speculatively in parallel under the
    per-scenario cap; any run that would overshoot the remaining budget is
    redone sequentially with the exact remainder, so results match ``jobs=1``.
    """

    def one(sc, budget):
        return run_plan(sc, reset(spec, cfg.seed), ffg, spec, oracle, budget)

    speculative = {}
    if cfg.jobs > 1 and scenarios:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {sc.id: pool.submit(one, sc, SCENARIO_ACTION_CAP) for sc in scenarios}
            speculative = {k: f.result() for k, f in sorted(futures.items())}
    runs = []
    for sc in scenarios:
        remaining = cfg.max_actions - used
        if remaining <= 0:
            log.info("action budget exhausted before %s", sc.id)
            break
        budget = min(SCENARIO_ACTION_CAP, remaining)
        run = speculative.get(sc.id)
        if run is None or (budget < SCENARIO_ACTION_CAP and run.actions >= budget):
            run = one(sc, budget)
        used += run.actions
        runs.append(run)
    return runs


def run(cfg: RunConfig) -> RunResult:
    os.makedirs(cfg.out_dir, exist_ok=True)
    os.makedirs(os.path.join(cfg.out_dir, "traces"), exist_ok=True)
    handler = _setup_log(cfg.out_dir)
    started = time.perf_counter()
    result = RunResult(EXIT_OK)
    try:
        try:
            spec = load_spec_file(cfg.app)
        except SpecError as exc:
            log.error("spec error: %s", exc)
            result.exit_code = EXIT_SPEC
            return result
        try:
            oracle = make_oracle(cfg.oracle, os.environ.get("ORACLE_ENDPOINT"))
        except OracleError as exc:
            log.error("oracle error: %s", exc)
            result.exit_code = EXIT_SPEC
            return result
        log.info("app %s, seed %d, max_actions %d, disabled %s", spec.name, cfg.seed, cfg.max_actions,
                 ",".join(sorted(cfg.disabled)) or "-")
        _loop(cfg, spec, oracle, result)
        log.info("finished: %d actions, %d bugs, %.3fs wall", result.actions, len(result.sink.reports),
                 time.perf_counter() - started)
    except SpecError as exc:
        log.error("spec error: %s", exc)
        result.exit_code = EXIT_SPEC
    except Exception as exc:  # noqa: BLE001 - any escape here is an internal invariant failure
        log.error("internal error: %s\n%s", exc, traceback.format_exc())
        result.exit_code = EXIT_INTERNAL
    finally:
        log.removeHandler(handler)
        handler.close()
    return result


def _loop(cfg: RunConfig, spec: AppSpec, oracle: SpecOracle, result: RunResult) -> None:
    th = Thresholds(sim=cfg.sim_threshold, sep=cfg.sep_threshold)
    session = reset(spec, cfg.seed)
    if spec.bootstrap:
        boot = scripted_bootstrap(session, spec.bootstrap)
    else:
        boot = bootstrap_explore(session, max(1, cfg.max_actions // 10), cfg.seed)
    used = len(boot.steps)
    log.info("bootstrap: %d actions", used)
    ffg = initialize_ffg(boot, spec, oracle, cfg.sim_threshold)
    result.ffg = ffg
    _write_json(os.path.join(cfg.out_dir, "traces", "bootstrap.json"), boot.to_json())
    with open(os.path.join(cfg.out_dir, f"ffg-r{ffg.revision:04d}.json"), "w", encoding="utf-8") as fh:
        fh.write(serialize(ffg))

    last_exercised: Dict[str, int] = {}
    scenario_total = 0
    for it in range(1, cfg.max_iterations + 1):
        if used >= cfg.max_actions:
            log.info("budget exhausted before iteration %d", it)
            break
        scenarios = generate_scenarios(ffg, spec, oracle, cfg, last_exercised)
        for k, sc in enumerate(scenarios):
            sc.id = f"it{it:02d}-{k + 1:03d}"
        _write_json(os.path.join(cfg.out_dir, f"scenarios-{it}.json"), [sc.to_json() for sc in scenarios])
        runs = _execute_all(scenarios, ffg, spec, oracle, cfg, used)
        executed = []
        for sc, r in zip(scenarios, runs):
            used += r.actions
            for b in r.bugs:
                if result.sink.add(b):
                    log.info("bug %s (%s) in %s: %s", b.id, b.kind, sc.id, b.violation.get("type"))
            tr = r.trace
            tr.infer_conditions = sc.flow_oriented
            tr.learn_flows = not r.bugs  # traces that exposed a bug are reported, not learned from
            executed.append(tr)
            last_exercised[sc.object] = it
            _write_json(os.path.join(cfg.out_dir, "traces", f"{sc.id}.json"), tr.to_json())
            log.info("%s %s %s: %d actions%s", sc.id, sc.strategy, sc.object, r.actions,
                     f" ({r.aborted})" if r.aborted else "")
        result.scenarios.extend(scenarios[: len(runs)])
        scenario_total += len(runs)
        summary = apply_iteration(ffg, executed, spec, oracle, th)
        ffg.check_integrity()
        for op in summary.ops:
            if op.kind.startswith("flow_"):
                # a refined condition is a new hypothesis: rank it as never exercised
                last_exercised.pop(op.after.get("flow"), None)
        _write_json(os.path.join(cfg.out_dir, f"updates-{it}.json"),
                    {"revision": summary.revision, "counts": summary.counts,
                     "ops": [op.to_json() for op in summary.ops]})
        with open(os.path.join(cfg.out_dir, f"ffg-r{ffg.revision:04d}.json"), "w", encoding="utf-8") as fh:
            fh.write(serialize(ffg))
        crash, functional = result.sink.counts()
        result.metrics.append(
            Metrics(it, len(ffg.flows), len(ffg.functionalities), scenario_total, crash, functional, used,
                    used * SIMULATED_MILLIS_PER_ACTION)
        )
        log.info("iteration %d: %d scenarios, ops %s, revision %d", it, len(runs),
                 {k: v for k, v in summary.counts.items() if v}, summary.revision)
    result.actions = used
    with open(os.path.join(cfg.out_dir, "ffg.json"), "w", encoding="utf-8") as fh:
        fh.write(serialize(ffg))
    _write_json(os.path.join(cfg.out_dir, "bugs.json"),
                {"app": spec.name, "seed": cfg.seed, "duplicates": result.sink.duplicates,
                 "bugs": [b.to_json() for b in result.sink.reports]})
    emit_metrics(result.metrics, os.path.join(cfg.out_dir, "metrics.csv"))
