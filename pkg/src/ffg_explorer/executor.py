"""Drives a simulator session through a scenario plan and reports bugs.

Navigation and condition establishment search over cloned sessions, so the
real session only ever sees the actions that were chosen.  The bug oracle is
the app's expected effects, crash events and metamorphic checks.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from . import conditions as C
from .app_model import (
    BACK_WIDGET,
    ActionStep,
    AppSpec,
    SimulatorSession,
    StepOutcome,
    clone_session,
    perform,
    widget_enabled,
    widget_visible,
)
from .conditions import Condition
from .ffg import FFG, ExecStep, ExecutionTrace, FFGError
from .scenarios import (
    ApplyVariant,
    EstablishCondition,
    ExecuteActions,
    ExecuteTrace,
    NavigateTo,
    Observe,
    TestScenario,
)

log = logging.getLogger(__name__)

MAX_RECOVERIES = 3
NAV_STATE_PENALTY = 100
NAV_MAX_EXPANSIONS = 3000
ESTABLISH_DEPTH = 3
ESTABLISH_MAX_EXPANSIONS = 40
WALK_LIMIT = 12


class BudgetExhausted(Exception):
    pass


class NavigationError(RuntimeError):
    def __init__(self, message: str, partial: ExecutionTrace):
        super().__init__(message)
        self.partial = partial


class ConditionUnreachable(RuntimeError):
    def __init__(self, message: str, partial: ExecutionTrace):
        super().__init__(message)
        self.partial = partial


def valuation_json(val: Mapping[str, Any]) -> dict:
    return {k: (sorted(v) if isinstance(v, frozenset) else v) for k, v in sorted(val.items())}


def _state_key(session: SimulatorSession):
    items = tuple(
        (k, tuple(sorted(v)) if isinstance(v, frozenset) else v) for k, v in sorted(session.valuation.items())
    )
    return session.current_page, items


# ---------------------------------------------------------------------------
# Bug reports
# ---------------------------------------------------------------------------


def make_dedup_key(kind: str, essence: Any, page: Optional[str]) -> str:
    blob = json.dumps([kind, essence, page], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class BugReport:
    id: str
    kind: str  # crash | functional
    scenario: str
    trace: ExecutionTrace
    violation: dict
    state_snapshot: dict
    dedup_key: str
    page: Optional[str] = None
    step_index: int = -1

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "scenario": self.scenario,
            "violation": self.violation,
            "page": self.page,
            "step_index": self.step_index,
            "state_snapshot": self.state_snapshot,
            "dedup_key": self.dedup_key,
            "trace": [s.step.to_json() for s in self.trace.steps[: self.step_index + 1]]
            if self.step_index >= 0
            else [s.step.to_json() for s in self.trace.steps],
        }


class BugSink:
    """Append-only, lock-protected collector; first occurrence of a key wins."""

    def __init__(self):
        self._lock = threading.Lock()
        self.reports: List[BugReport] = []
        self.duplicates = 0
        self._keys = set()

    def add(self, report: BugReport) -> bool:
        with self._lock:
            if report.dedup_key in self._keys:
                self.duplicates += 1
                return False
            self._keys.add(report.dedup_key)
            report.id = f"bug-{len(self.reports) + 1:03d}"
            self.reports.append(report)
            return True

    def counts(self) -> Tuple[int, int]:
        crash = sum(1 for r in self.reports if r.kind == "crash")
        return crash, len(self.reports) - crash


def detect_step(trace: ExecutionTrace, index: int, spec: AppSpec, scenario_id: str = "") -> List[BugReport]:
    """Crash and expected-effect checks for one recorded step."""
    s = trace.steps[index]
    out = s.outcome
    snap = valuation_json(out.state_after)
    reports = []
    if out.status == "crashed":
        signal = next(t for k, t in out.events if k == "crash")
        reports.append(
            BugReport(
                "", "crash", scenario_id, trace,
                {"type": "crash_signal", "signal": signal, "action": s.step.render()},
                snap, make_dedup_key("crash", signal, s.step.page), s.step.page, index,
            )
        )
    if out.abstract_op is not None:
        tag, args = out.abstract_op
        eff = spec.expected_effects.get(tag)
        if eff is not None:
            post = eff.instantiate(dict(args))
            if not C.evaluate(post, out.state_after):
                violation = {
                    "type": "expected_effect",
                    "op": tag,
                    "args": dict(args),
                    "postcondition": post.render(),
                    "observed": {v: snap[v] for v in sorted(post.variables())},
                }
                if out.toasts():
                    violation["toasts"] = out.toasts()
                reports.append(
                    BugReport(
                        "", "functional", scenario_id, trace, violation, snap,
                        make_dedup_key("functional", [tag, sorted(dict(args).items()), post.render()], s.step.page),
                        s.step.page, index,
                    )
                )
    return reports


def detect(trace: ExecutionTrace, spec: AppSpec, oracle=None, scenario_id: str = "") -> List[BugReport]:
    """All crash/expected-effect reports in ``trace``, deduplicated (first wins)."""
    seen, out = set(), []
    for i in range(len(trace.steps)):
        for r in detect_step(trace, i, spec, scenario_id or trace.scenario_id):
            if r.dedup_key not in seen:
                seen.add(r.dedup_key)
                out.append(r)
    return out


# ---------------------------------------------------------------------------
# Search helpers (all on clones)
# ---------------------------------------------------------------------------


def candidate_actions(session: SimulatorSession, include_optional: bool = True) -> List[ActionStep]:
    spec = session.spec
    page = spec.pages[session.current_page]
    out = []
    for w in page.widgets:
        if not widget_visible(session, page, w) or not widget_enabled(session, w):
            continue
        if w.optional and not include_optional:
            continue
        out.append(ActionStep(page.id, w.id, w.default_action(), w.default_input))
    if page.parent is not None or spec.rules_for(page.id, BACK_WIDGET, "back"):
        out.append(ActionStep.back(page.id))
    return out


def plan_path(session: SimulatorSession, target_page: str) -> Optional[List[ActionStep]]:
    """Cheapest action path to ``target_page``; state-changing steps cost extra."""
    if session.crashed:
        return None
    if session.current_page == target_page:
        return []
    counter = itertools.count()
    start = clone_session(session)
    heap = [(0, next(counter), start, [])]
    best = {_state_key(start): 0}
    expansions = 0
    while heap and expansions < NAV_MAX_EXPANSIONS:
        cost, _, cur, path = heapq.heappop(heap)
        if cur.current_page == target_page:
            return path
        expansions += 1
        for step in candidate_actions(cur):
            nxt = clone_session(cur)
            out = perform(nxt, step)
            if not out.ok:
                continue
            c = cost + 1 + (NAV_STATE_PENALTY if nxt.valuation != cur.valuation else 0)
            key = _state_key(nxt)
            if key in best and best[key] <= c:
                continue
            best[key] = c
            heapq.heappush(heap, (c, next(counter), nxt, path + [step]))
    return None


def target_page(target: str, ffg: FFG, spec: AppSpec) -> str:
    if target in ffg.functionalities:
        node = ffg.functionalities[target]
        if not node.traces:
            raise FFGError(f"functionality {target!r} has no traces")
        return node.traces[0].steps[0].page
    if target in spec.pages:
        return target
    raise FFGError(f"unknown navigation target {target!r}")


def _replay_on_clone(session: SimulatorSession, steps: Sequence[ActionStep]) -> Optional[List[ActionStep]]:
    """Navigate to the first step's page and replay; returns all actions taken or None."""
    nav = plan_path(session, steps[0].page)
    if nav is None:
        return None
    for s in nav:
        perform(session, s)
    for s in steps:
        if session.crashed or not perform(session, s).ok:
            return None
    return list(nav) + list(steps)


def _rule_vars(spec: AppSpec, step: ActionStep) -> set:
    out = set()
    for r in spec.rules_for(step.page, step.widget, step.action):
        out |= {u.var for u in r.updates}
    return out


def _touches(spec: AppSpec, steps: Sequence[ActionStep], names: set) -> bool:
    return any(_rule_vars(spec, s) & names for s in steps)


def _known_traces(ffg: FFG, spec: AppSpec, names: set):
    items = [
        (fid, t)
        for fid in sorted(ffg.functionalities)
        for t in ffg.functionalities[fid].traces
    ]
    items.sort(key=lambda x: (not _touches(spec, x[1].steps, names), x[0], x[1].id))
    return items


def find_condition_path(session: SimulatorSession, phi: Condition, ffg: FFG, spec: AppSpec,
                        depth: int = ESTABLISH_DEPTH) -> Optional[List[ActionStep]]:
    if C.evaluate(phi, session.valuation):
        return []
    names = phi.variables()
    traces = _known_traces(ffg, spec, names)
    frontier = [(clone_session(session), [])]
    seen = {_state_key(session)}
    expansions = 0
    for _ in range(depth):
        nxt_frontier = []
        for cur, path in frontier:
            for _fid, t in traces:
                if expansions >= ESTABLISH_MAX_EXPANSIONS:
                    return None
                expansions += 1
                probe = clone_session(cur)
                taken = _replay_on_clone(probe, t.steps)
                if taken is None:
                    continue
                key = _state_key(probe)
                if key in seen:
                    continue
                seen.add(key)
                if C.evaluate(phi, probe.valuation):
                    return path + taken
                nxt_frontier.append((probe, path + taken))
        frontier = nxt_frontier
    return None


# ---------------------------------------------------------------------------
# Public navigation / establishment / recovery
# ---------------------------------------------------------------------------


def _run_steps(session, steps, trace: ExecutionTrace, origin: str, budget: Optional[int], unit: int = -1) -> bool:
    for s in steps:
        if budget is not None and len(trace.steps) >= budget:
            return False
        out = perform(session, s)
        trace.steps.append(ExecStep(s, out, origin, unit))
        if not out.ok:
            return False
    return True


def navigate_to(session: SimulatorSession, target: str, ffg: FFG, spec: AppSpec, budget: int) -> ExecutionTrace:
    """Move the session to the page hosting ``target``'s first action."""
    trace = ExecutionTrace(initial_state=dict(session.valuation), strategy="navigation")
    page = target_page(target, ffg, spec)
    path = plan_path(session, page)
    if path is None:
        raise NavigationError(f"no path from {session.current_page!r} to {page!r}", trace)
    if len(path) > budget:
        raise NavigationError(f"path to {page!r} needs {len(path)} actions, budget {budget}", trace)
    if not _run_steps(session, path, trace, "nav", None):
        raise NavigationError(f"navigation to {page!r} diverged", trace)
    return trace


def establish_condition(session: SimulatorSession, phi: Condition, ffg: FFG, spec: AppSpec, budget: int,
                        depth: int = ESTABLISH_DEPTH) -> ExecutionTrace:
    if not C.is_satisfiable(phi, spec.decls):
        raise C.ConditionError(f"cannot establish unsatisfiable condition {phi.render()!r}")
    trace = ExecutionTrace(initial_state=dict(session.valuation), strategy="establish")
    path = find_condition_path(session, phi, ffg, spec, depth)
    if path is None or len(path) > budget:
        raise ConditionUnreachable(f"condition {phi.render()!r} unreachable", trace)
    if not _run_steps(session, path, trace, "establish", None):
        raise ConditionUnreachable("establishing path diverged on the live session", trace)
    return trace


def recover(session: SimulatorSession, failure: StepOutcome, ffg: FFG, spec: AppSpec,
            step: Optional[ActionStep] = None) -> Optional[List[ActionStep]]:
    """Propose actions that should make ``step`` executable again, or None.

    Returns a short action list rather than a single action: re-navigation
    and enabling traces take several steps.
    """
    if failure.ok or failure.status == "crashed" or session.crashed or step is None:
        return None

    def works(prefix: List[ActionStep]) -> bool:
        probe = clone_session(session)
        for s in prefix:
            if not perform(probe, s).ok:
                return False
        return probe.current_page == step.page and perform(probe, step).ok

    if failure.status == "widget_missing":
        if session.current_page != step.page:
            path = plan_path(session, step.page)
            if path is not None and works(path):
                return path
        for cand in candidate_actions(session):
            if cand.widget != step.widget and works([cand]):
                return [cand]
        probe = clone_session(session)
        back = ActionStep.back(session.current_page)
        if perform(probe, back).ok:
            path = plan_path(probe, step.page)
            if path is not None and works([back] + path):
                return [back] + path
        return None

    # widget_disabled / guard_unmet: look for an enabling action or trace
    page = spec.pages.get(step.page)
    w = page.widget(step.widget) if page else None
    names = set(w.enabled_when.variables()) if w else set()
    for r in spec.rules_for(step.page, step.widget, step.action):
        names |= r.guard.variables()
    if session.current_page == step.page:
        for cand in candidate_actions(session):
            if cand.widget != step.widget and works([cand]):
                return [cand]
    for _fid, t in _known_traces(ffg, spec, names):
        if not _touches(spec, t.steps, names):
            break
        probe = clone_session(session)
        taken = _replay_on_clone(probe, t.steps)
        if taken is None:
            continue
        back = plan_path(probe, step.page)
        if back is not None and works(taken + back):
            return taken + back
    return None


# ---------------------------------------------------------------------------
# Scenario execution
# ---------------------------------------------------------------------------


@dataclass
class TraceRun:
    func: str
    trace: str
    ok: bool
    start: int
    state_before: Dict[str, Any]
    variant: bool = False
    diverged: Optional[str] = None  # the replayed step that failed after reaching the start page


@dataclass
class ScenarioRun:
    trace: ExecutionTrace
    bugs: List[BugReport] = field(default_factory=list)
    runs: List[TraceRun] = field(default_factory=list)
    aborted: Optional[str] = None

    @property
    def actions(self) -> int:
        return len(self.trace.steps)


class _Executor:
    def __init__(self, scenario, session, ffg, spec, oracle, budget, detect_bugs=True):
        self.sc = scenario
        self.session = session
        self.ffg = ffg
        self.spec = spec
        self.oracle = oracle
        self.budget = budget
        self.detect_bugs = detect_bugs
        self.trace = ExecutionTrace(
            initial_state=dict(session.valuation), strategy=scenario.strategy, scenario_id=scenario.id
        )
        self.run = ScenarioRun(self.trace)
        self.variants: Dict[Tuple[str, str], Tuple[ActionStep, ...]] = {}
        self.unit = 0
        self.actions_ok = True

    # -- low level ----------------------------------------------------------

    def do(self, step: ActionStep, origin: str) -> StepOutcome:
        if len(self.trace.steps) >= self.budget:
            raise BudgetExhausted()
        out = perform(self.session, step)
        self.trace.steps.append(ExecStep(step, out, origin, self.unit))
        if self.detect_bugs:
            self.run.bugs.extend(detect_step(self.trace, len(self.trace.steps) - 1, self.spec, self.sc.id))
        if out.status == "crashed":
            raise _Crashed()
        return out

    def do_all(self, steps, origin) -> bool:
        for s in steps:
            if not self.do(s, origin).ok:
                return False
        return True

    def goto(self, page: str) -> bool:
        path = plan_path(self.session, page)
        if path is None:
            self.note(f"no path to page {page}")
            return False
        return self.do_all(path, "nav")

    def note(self, text: str) -> None:
        self.trace.notes.append(text)
        log.debug("%s: %s", self.sc.id, text)

    # -- plan steps ---------------------------------------------------------

    def execute_trace(self, p: ExecuteTrace) -> bool:
        t = self.ffg.func(p.func).trace(p.trace)
        steps = self.variants.pop((p.func, p.trace), None)
        variant = steps is not None
        steps = steps or t.steps
        if not self.goto(steps[0].page):
            self.run.runs.append(TraceRun(p.func, p.trace, False, len(self.trace.steps), dict(self.session.valuation), variant))
            return False
        run = TraceRun(p.func, p.trace, True, len(self.trace.steps), dict(self.session.valuation), variant)
        self.run.runs.append(run)
        for s in steps:
            if not self.do(s, "plan").ok:
                run.ok = False
                run.diverged = s.render()
                self.note(f"replay of {p.func}/{p.trace} diverged at {s.render()}")
                return False
        return True

    def execute_action(self, a: ActionStep) -> bool:
        if self.session.current_page != a.page and not self.goto(a.page):
            return False
        for _ in range(MAX_RECOVERIES + 1):
            out = self.do(a, "plan")
            if out.ok:
                return True
            fix = recover(self.session, out, self.ffg, self.spec, a)
            if fix is None:
                self.note(f"no recovery for {a.render()} ({out.status})")
                return False
            if not self.do_all(fix, "recovery"):
                return False
        self.note(f"recovery cap reached for {a.render()}")
        return False

    def goal_progress(self, func_id: str) -> None:
        pages = set(self.ffg.func(func_id).pages())
        visited = set()
        for _ in range(WALK_LIMIT):
            if self.session.current_page in pages:
                return
            cands = [
                c for c in candidate_actions(self.session, include_optional=False)
                if c.action != "back" and (c.page, c.widget) not in visited
            ]
            step = cands[0] if cands else ActionStep.back(self.session.current_page)
            visited.add((step.page, step.widget))
            if not self.do(step, "plan").ok:
                return

    def execute(self) -> ScenarioRun:
        sc = self.sc
        skipping = False
        try:
            for idx, p in enumerate(sc.guidance):
                self.unit = idx
                if isinstance(p, Observe):
                    self.observe(p, idx)
                    continue
                if skipping:
                    continue
                if isinstance(p, NavigateTo):
                    ok = self.goto(target_page(p.target, self.ffg, self.spec))
                elif isinstance(p, ExecuteTrace):
                    ok = self.execute_trace(p)
                elif isinstance(p, ExecuteActions):
                    # a gap action that cannot run is a finding, not a reason to abort
                    self.actions_ok = all([self.execute_action(a) for a in p.actions])
                    ok = True
                elif isinstance(p, EstablishCondition):
                    path = find_condition_path(self.session, p.condition, self.ffg, self.spec)
                    if path is None:
                        self.note(f"condition unreachable: {p.condition.render()}")
                        ok = False
                    else:
                        ok = self.do_all(path, "establish")
                elif isinstance(p, ApplyVariant):
                    self.variants[(p.func, p.trace)] = p.steps
                    ok = True
                else:
                    raise FFGError(f"unknown plan step {p!r}")
                if not ok:
                    skipping = True
        except BudgetExhausted:
            self.run.aborted = "budget"
            self.note("budget exhausted")
        except _Crashed:
            self.run.aborted = "crash"
            self.note("session crashed")
        except (FFGError, KeyError) as exc:
            self.run.aborted = "plan"
            self.note(f"plan reference error: {exc}")
            log.warning("scenario %s aborted: %s", sc.id, exc)
        return self.run

    def observe(self, p: Observe, idx: int) -> None:
        if p.check == "goal-progress":
            if self.run.aborted is None and self.actions_ok:
                self.unit = idx - 1  # walk extends the preceding action unit
                self.goal_progress(p.param("func"))
            return
        if not self.detect_bugs:
            return
        runs = self.run.runs
        if p.check == "flow-outcome" and p.param("mr"):
            if runs and runs[-1].variant and runs[-1].diverged:
                # the variant is meant to do what pi does, yet one of its steps failed
                self._functional(
                    {"type": "mr_violation", "mr": p.param("mr"), "expectation": "variant executable like the original",
                     "flow": p.param("flow"), "step": runs[-1].diverged},
                    [p.param("mr"), runs[-1].diverged],
                )
            # the variant of pi ran cleanly, yet pi' is no longer executable
            elif len(runs) >= 2 and runs[-2].variant and runs[-2].ok and not runs[-1].ok:
                self._functional(
                    {"type": "mr_violation", "mr": p.param("mr"), "expectation": "target trace executable after variant",
                     "flow": p.param("flow")},
                    [p.param("mr"), p.param("flow")],
                )
        elif p.check == "divergence":
            phi = p.param("phi")
            if phi is None or phi.is_true or len(runs) < 4:
                return
            first, second = runs[1], runs[-1]
            if first.ok and all(r.ok for r in runs[:-1]) and not second.ok and C.evaluate(phi, second.state_before):
                self._functional(
                    {"type": "mr_violation", "mr": "condition_invariant",
                     "expectation": f"target trace re-executable while {phi.render()} holds", "flow": p.param("flow")},
                    ["condition_invariant", p.param("flow")],
                )

    def _functional(self, violation: dict, essence) -> None:
        page = self.session.current_page
        snap = valuation_json(self.session.valuation)
        self.run.bugs.append(
            BugReport("", "functional", self.sc.id, self.trace, violation, snap,
                      make_dedup_key("functional", essence, page), page, len(self.trace.steps) - 1)
        )


class _Crashed(Exception):
    pass


def run_plan(scenario: TestScenario, session: SimulatorSession, ffg: FFG, spec: AppSpec, oracle,
             budget: int, detect_bugs: bool = True) -> ScenarioRun:
    if budget <= 0:
        raise ValueError("budget must be positive")
    return _Executor(scenario, session, ffg, spec, oracle, budget, detect_bugs).execute()


def execute_scenario(scenario: TestScenario, session: SimulatorSession, ffg: FFG, spec: AppSpec, oracle,
                     budget: int) -> Tuple[ExecutionTrace, List[BugReport]]:
    run = run_plan(scenario, session, ffg, spec, oracle, budget)
    seen, bugs = set(), []
    for i, b in enumerate(run.bugs):
        if b.dedup_key in seen:
            continue
        seen.add(b.dedup_key)
        b.id = f"{scenario.id or 'scenario'}-{len(bugs) + 1}"
        bugs.append(b)
    return run.trace, bugs
