"""Functional Flow Graph: functionality nodes joined by conditioned flows.

A functionality is ``(goal, vars, traces)``.  A flow ``n -(pi, phi, pi')-> n'``
says that after trace ``pi`` of ``n``, if ``phi`` holds, trace ``pi'`` of
``n'`` can run.  Traces are immutable and referenced by id, so updates add
traces rather than edit them.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from . import conditions as C
from .app_model import ActionStep, AppSpec, StepOutcome
from .conditions import Condition
from .oracle import GoalDescriptor, SpecOracle, mean_goal

FORMAT = "ffg/1"


class FFGError(ValueError):
    pass


def roman(n: int) -> str:
    out = []
    for value, sym in (
        (1000, "M"), (900, "CM"), (500, "D"), (400, "CD"), (100, "C"), (90, "XC"),
        (50, "L"), (40, "XL"), (10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I"),
    ):
        while n >= value:
            out.append(sym)
            n -= value
    return "".join(out)


def slug(label: str) -> str:
    s = re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_")
    return s or "functionality"


@dataclass(frozen=True)
class Trace:
    id: str
    steps: Tuple[ActionStep, ...]
    goal: GoalDescriptor
    end_page: Optional[str] = None  # page reached after the last step

    def to_json(self) -> dict:
        d = {"id": self.id, "steps": [s.to_json() for s in self.steps], "goal": self.goal.to_json()}
        if self.end_page is not None:
            d["end_page"] = self.end_page
        return d


@dataclass
class Functionality:
    id: str
    goal: GoalDescriptor
    vars: set = field(default_factory=set)
    traces: List[Trace] = field(default_factory=list)
    next_trace: int = 1

    def trace(self, tid: str) -> Trace:
        for t in self.traces:
            if t.id == tid:
                return t
        raise FFGError(f"functionality {self.id!r} has no trace {tid!r}")

    def has_trace(self, tid: str) -> bool:
        return any(t.id == tid for t in self.traces)

    def find_steps(self, steps: Sequence[ActionStep], end_page: Optional[str] = None) -> Optional[Trace]:
        steps = tuple(steps)
        for t in self.traces:
            if t.steps == steps and t.end_page == end_page:
                return t
        return None

    def pages(self) -> List[str]:
        out: List[str] = []
        for t in self.traces:
            for s in t.steps:
                if s.page not in out:
                    out.append(s.page)
        return out


@dataclass
class Flow:
    id: str
    source: str
    target: str
    pi: str
    phi: Condition
    pi_prime: str


@dataclass
class FFG:
    functionalities: Dict[str, Functionality] = field(default_factory=dict)
    flows: Dict[str, Flow] = field(default_factory=dict)
    revision: int = 0
    next_flow: int = 1

    # -- mutation -----------------------------------------------------------

    def bump(self) -> None:
        self.revision += 1

    def func(self, fid: str) -> Functionality:
        try:
            return self.functionalities[fid]
        except KeyError:
            raise FFGError(f"unknown functionality {fid!r}") from None

    def new_functionality(self, goal: GoalDescriptor) -> Functionality:
        base = slug(goal.label)
        fid, k = base, 2
        while fid in self.functionalities:
            fid = f"{base}_{k}"
            k += 1
        node = Functionality(fid, goal)
        self.functionalities[fid] = node
        self.bump()
        return node

    def add_trace(self, node: Functionality, steps: Sequence[ActionStep], goal: GoalDescriptor, spec: AppSpec,
                  end_page: Optional[str] = None) -> Trace:
        trace = Trace(roman(node.next_trace), tuple(steps), goal, end_page)
        node.next_trace += 1
        node.traces.append(trace)
        refresh_node(node, spec)
        self.bump()
        return trace

    def add_flow(self, source: str, pi: str, phi: Condition, target: str, pi_prime: str) -> Flow:
        flow = Flow(f"e{self.next_flow:03d}", source, target, pi, C.normalize(phi), pi_prime)
        self.next_flow += 1
        self.flows[flow.id] = flow
        self.bump()
        return flow

    def set_condition(self, flow_id: str, phi: Condition) -> None:
        self.flows[flow_id].phi = C.normalize(phi)
        self.bump()

    def remove_flow(self, flow_id: str) -> None:
        del self.flows[flow_id]
        self.bump()

    def flow_count(self) -> int:
        return len(self.flows)

    def find_flow(self, source: str, pi: str, target: str, pi_prime: str) -> Optional[Flow]:
        for f in sorted(self.flows.values(), key=lambda f: f.id):
            if (f.source, f.pi, f.target, f.pi_prime) == (source, pi, target, pi_prime):
                return f
        return None

    def check_integrity(self) -> None:
        for f in self.flows.values():
            for fid, tid in ((f.source, f.pi), (f.target, f.pi_prime)):
                if fid not in self.functionalities:
                    raise FFGError(f"flow {f.id} references unknown functionality {fid!r}")
                if not self.functionalities[fid].has_trace(tid):
                    raise FFGError(f"flow {f.id} references unknown trace {fid}/{tid}")


def refresh_node(node: Functionality, spec: AppSpec) -> None:
    """Recompute the node's goal vector/topics and vars from its traces."""
    if node.traces:
        merged = mean_goal([t.goal for t in node.traces], node.goal.label)
        node.goal = GoalDescriptor(node.goal.label, merged.vector, merged.topics | node.goal.topics)
    node.vars = set()
    for t in node.traces:
        for s in t.steps:
            node.vars |= set(spec.pages[s.page].touched_vars)


# ---------------------------------------------------------------------------
# Execution traces and segmentation
# ---------------------------------------------------------------------------


TRANSPARENT_ORIGINS = ("nav", "establish")


@dataclass(frozen=True)
class ExecStep:
    step: ActionStep
    outcome: StepOutcome
    origin: str = "plan"  # plan | nav | establish | recovery
    unit: int = 0  # index of the plan step that issued this action


@dataclass
class ExecutionTrace:
    steps: List[ExecStep] = field(default_factory=list)
    initial_state: Dict[str, Any] = field(default_factory=dict)
    segment_labels: Optional[List[Optional[str]]] = None
    strategy: str = "bootstrap"
    scenario_id: str = ""
    notes: List[str] = field(default_factory=list)
    infer_conditions: bool = False  # derive flow conditions from state (flow-oriented scenarios)
    learn_flows: bool = True
    homing: Optional[list] = None  # (segment, trace) pairs set by the updater

    def append(self, step: ActionStep, outcome: StepOutcome, origin: str = "plan", unit: int = 0) -> None:
        self.steps.append(ExecStep(step, outcome, origin, unit))

    def state_before(self, index: int) -> Dict[str, Any]:
        if index == 0:
            return dict(self.initial_state)
        return dict(self.steps[index - 1].outcome.state_after)

    def actions(self) -> List[ActionStep]:
        return [s.step for s in self.steps]

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario_id,
            "strategy": self.strategy,
            "steps": [
                dict(s.step.to_json(), origin=s.origin, outcome=s.outcome.to_json()) for s in self.steps
            ],
            "notes": list(self.notes),
        }


@dataclass
class Segment:
    indices: List[int]
    steps: Tuple[ActionStep, ...]
    goal: GoalDescriptor
    linked: bool  # only navigation separates it from the previous segment
    end_page: Optional[str] = None


def plan_runs(exec_trace: ExecutionTrace) -> List[Tuple[List[int], bool]]:
    """Runs of successful plan steps issued by one plan unit.

    Navigation and condition-establishing steps are transparent glue between
    runs; failed steps and recovery actions break the link.  Each run is
    returned with a flag telling whether it is linked to the previous run.
    """
    runs: List[Tuple[List[int], bool]] = []
    cur: List[int] = []
    cur_linked = next_linked = False
    for i, s in enumerate(exec_trace.steps):
        if s.origin == "plan" and s.outcome.ok:
            if cur and exec_trace.steps[cur[-1]].unit != s.unit:
                runs.append((cur, cur_linked))
                cur, next_linked = [], True
            if not cur:
                cur_linked = next_linked
            cur.append(i)
            continue
        if cur:
            runs.append((cur, cur_linked))
            cur, next_linked = [], True
        if not (s.origin in TRANSPARENT_ORIGINS and s.outcome.ok):
            next_linked = False
    if cur:
        runs.append((cur, cur_linked))
    return runs


def segment_trace(exec_trace: ExecutionTrace, spec: AppSpec, oracle: SpecOracle, threshold: float) -> List[Segment]:
    """Split each plan run into goal-coherent segments by sequential page similarity."""
    out: List[Segment] = []
    for run, linked in plan_runs(exec_trace):
        cur: List[int] = []
        cur_goals: List[GoalDescriptor] = []
        for i in run:
            page_goal = oracle.infer_page_goal(spec.pages[exec_trace.steps[i].step.page])
            if cur and oracle.similarity(page_goal, mean_goal(cur_goals)) < threshold:
                out.append(_segment(cur, exec_trace, spec, oracle, linked))
                cur, cur_goals, linked = [], [], True
            cur.append(i)
            cur_goals.append(page_goal)
        if cur:
            out.append(_segment(cur, exec_trace, spec, oracle, linked))
    return out


def _segment(idx, exec_trace, spec, oracle, linked) -> Segment:
    steps = tuple(exec_trace.steps[i].step for i in idx)
    end_page = exec_trace.steps[idx[-1]].outcome.new_page
    return Segment(list(idx), steps, oracle.trace_goal(steps, spec), linked, end_page)


def best_match(ffg: FFG, goal: GoalDescriptor, oracle: SpecOracle, threshold: float) -> Tuple[Optional[Functionality], float]:
    best, best_sim = None, None
    for node in ffg.functionalities.values():
        s = oracle.similarity(goal, node.goal)
        if best_sim is None or s > best_sim + 1e-12:
            best, best_sim = node, s
    if best is None or best_sim < threshold:
        return None, (best_sim if best_sim is not None else -1.0)
    return best, best_sim


def initialize_ffg(exec_trace: ExecutionTrace, spec: AppSpec, oracle: SpecOracle, sim_threshold: float = 0.7) -> FFG:
    if not exec_trace.steps:
        raise FFGError("cannot initialize from an empty trace")
    bad = [i for i, s in enumerate(exec_trace.steps) if not s.outcome.ok]
    if bad:
        raise FFGError(f"bootstrap step {bad[0]} did not succeed")
    ffg = FFG()
    homed: List[Tuple[Segment, str, str]] = []
    for seg in segment_trace(exec_trace, spec, oracle, sim_threshold):
        node, _ = best_match(ffg, seg.goal, oracle, sim_threshold)
        if node is None:
            # segments announcing the same goal share a node even when their
            # pages drift apart; later updates may split it again
            node = next((n for n in ffg.functionalities.values() if n.goal.label == seg.goal.label), None)
        if node is None:
            node = ffg.new_functionality(seg.goal)
        trace = node.find_steps(seg.steps, seg.end_page) or ffg.add_trace(node, seg.steps, seg.goal, spec, seg.end_page)
        homed.append((seg, node.id, trace.id))
    labels: List[Optional[str]] = [None] * len(exec_trace.steps)
    for seg, fid, _ in homed:
        for i in seg.indices:
            labels[i] = fid
    exec_trace.segment_labels = labels
    for (sa, fa, ta), (sb, fb, tb) in zip(homed, homed[1:]):
        if not sb.linked or fa == fb:
            continue
        if ffg.find_flow(fa, ta, fb, tb) is None:
            ffg.add_flow(fa, ta, C.TRUE, fb, tb)
    return ffg


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def flows_from(ffg: FFG, func_id: str, trace_id: str) -> List[Flow]:
    node = ffg.func(func_id)
    if not node.has_trace(trace_id):
        raise FFGError(f"functionality {func_id!r} has no trace {trace_id!r}")
    return sorted(
        (f for f in ffg.flows.values() if f.source == func_id and f.pi == trace_id),
        key=lambda f: f.id,
    )


def shared_data_pairs(ffg: FFG) -> List[Tuple[str, str, frozenset]]:
    linked = {frozenset((f.source, f.target)) for f in ffg.flows.values()}
    ids = sorted(ffg.functionalities)
    out = []
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            shared = ffg.functionalities[a].vars & ffg.functionalities[b].vars
            if shared and frozenset((a, b)) not in linked:
                out.append((a, b, frozenset(shared)))
    return out


def find_flows_into(ffg: FFG, target: str, var: str) -> List[Flow]:
    ffg.func(target)
    return sorted(
        (f for f in ffg.flows.values() if f.target == target and var in f.phi.variables()),
        key=lambda f: f.id,
    )


# ---------------------------------------------------------------------------
# Canonical file format
# ---------------------------------------------------------------------------


def to_document(ffg: FFG) -> dict:
    return {
        "format": FORMAT,
        "revision": ffg.revision,
        "next_flow": ffg.next_flow,
        "functionalities": {
            fid: {
                "goal": n.goal.to_json(),
                "vars": sorted(n.vars),
                "next_trace": n.next_trace,
                "traces": [t.to_json() for t in n.traces],
            }
            for fid, n in ffg.functionalities.items()
        },
        "flows": {
            f.id: {
                "source": f.source,
                "pi": f.pi,
                "phi": f.phi.render(),
                "target": f.target,
                "pi_prime": f.pi_prime,
            }
            for f in ffg.flows.values()
        },
    }


def serialize(ffg: FFG) -> str:
    return json.dumps(to_document(ffg), sort_keys=True, indent=2) + "\n"


def deserialize(document: str | Mapping) -> FFG:
    doc = json.loads(document) if isinstance(document, str) else document

    def need(obj, key, path):
        if not isinstance(obj, Mapping) or key not in obj:
            raise FFGError(f"{path}: missing {key!r}")
        return obj[key]

    if need(doc, "format", "$") != FORMAT:
        raise FFGError(f"$.format: expected {FORMAT!r}")
    ffg = FFG(revision=int(need(doc, "revision", "$")), next_flow=int(need(doc, "next_flow", "$")))
    for fid, raw in sorted(need(doc, "functionalities", "$").items()):
        path = f"$.functionalities.{fid}"
        try:
            goal = GoalDescriptor.from_json(need(raw, "goal", path))
            traces = []
            for i, t in enumerate(need(raw, "traces", path)):
                tpath = f"{path}.traces[{i}]"
                steps = tuple(ActionStep.from_json(s) for s in need(t, "steps", tpath))
                traces.append(Trace(need(t, "id", tpath), steps, GoalDescriptor.from_json(need(t, "goal", tpath)),
                                    t.get("end_page")))
        except (KeyError, TypeError, ValueError) as exc:
            raise FFGError(f"{path}: {exc}") from None
        ids = [t.id for t in traces]
        if len(set(ids)) != len(ids):
            raise FFGError(f"{path}.traces: duplicate trace id")
        ffg.functionalities[fid] = Functionality(
            fid, goal, set(need(raw, "vars", path)), traces, int(raw.get("next_trace", len(traces) + 1))
        )
    for eid, raw in sorted(need(doc, "flows", "$").items()):
        path = f"$.flows.{eid}"
        try:
            phi = C.parse(need(raw, "phi", path))
        except C.ConditionError as exc:
            raise FFGError(f"{path}.phi: {exc}") from None
        ffg.flows[eid] = Flow(
            eid, need(raw, "source", path), need(raw, "target", path), need(raw, "pi", path), phi,
            need(raw, "pi_prime", path),
        )
    try:
        ffg.check_integrity()
    except FFGError as exc:
        raise FFGError(f"$.flows: {exc}") from None
    return ffg


def render_text(ffg: FFG) -> str:
    """Human-readable dump used by ``ffg-explorer show-ffg``."""
    lines = [f"FFG revision {ffg.revision}: {len(ffg.functionalities)} functionalities, {len(ffg.flows)} flows"]
    for fid in sorted(ffg.functionalities):
        n = ffg.functionalities[fid]
        lines.append(f"[{fid}] {n.goal.label}  vars={{{', '.join(sorted(n.vars))}}}")
        for t in n.traces:
            lines.append(f"    {t.id}: " + " -> ".join(s.render() for s in t.steps))
    for eid in sorted(ffg.flows):
        f = ffg.flows[eid]
        lines.append(f"{eid}: {f.source}.{f.pi} --[{f.phi.render()}]--> {f.target}.{f.pi_prime}")
    return "\n".join(lines) + "\n"
