"""FFG refinement from executed traces.

Node operations: create, merge, split.  Flow operations: create,
strengthen, weaken, merge, decided by entailment between the new flow's
condition and those of its siblings (flows leaving the same source trace).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import conditions as C
from .app_model import AppSpec
from .ffg import (
    FFG,
    ExecutionTrace,
    Flow,
    Functionality,
    Segment,
    Trace,
    best_match,
    flows_from,
    refresh_node,
    segment_trace,
)
from .oracle import (
    DEFAULT_CLUSTER_THRESHOLD,
    DEFAULT_SEP_THRESHOLD,
    DEFAULT_SIM_THRESHOLD,
    SpecOracle,
    mean_goal,
)

NODE_OPS = ("node_create", "node_merge", "node_split")
FLOW_OPS = ("flow_create", "flow_strengthen", "flow_weaken", "flow_merge")


@dataclass
class UpdateOp:
    kind: str
    before: dict
    after: dict
    justification: dict

    def __post_init__(self):
        if self.kind not in NODE_OPS + FLOW_OPS:
            raise ValueError(f"unknown update op {self.kind!r}")

    @property
    def mutating(self) -> bool:
        return not self.after.get("duplicate", False)

    def to_json(self) -> dict:
        return {"kind": self.kind, "before": self.before, "after": self.after, "justification": self.justification}


@dataclass
class Thresholds:
    sim: float = DEFAULT_SIM_THRESHOLD
    sep: float = DEFAULT_SEP_THRESHOLD
    cluster: float = DEFAULT_CLUSTER_THRESHOLD


# ---------------------------------------------------------------------------
# Functionality updates
# ---------------------------------------------------------------------------


def locate(ffg: FFG, trace: Trace) -> Tuple[str, str]:
    """Current (functionality id, trace id) of a trace object; splits may re-home it."""
    for fid, node in ffg.functionalities.items():
        for t in node.traces:
            if t is trace:
                return fid, t.id
    raise KeyError(f"trace {trace.id} is no longer in the graph")


def split_node(ffg: FFG, node: Functionality, spec: AppSpec, oracle: SpecOracle, th: Thresholds) -> List[UpdateOp]:
    if len(node.traces) < 2:
        return []
    res = oracle.cluster_trace_goals([(t.id, t.goal) for t in node.traces], th.cluster)
    if len(res.clusters) < 2 or res.separation < th.sep:
        return []
    order = [t.id for t in node.traces]
    clusters = sorted(res.clusters, key=lambda c: min(order.index(t) for t in c))
    keep, moved = clusters[0], clusters[1:]
    justification = {
        "clusters": [[t for t in order if t in c] for c in clusters],
        "separation": round(res.separation, 6),
    }
    new_ids = []
    for cluster in moved:
        traces = [t for t in node.traces if t.id in cluster]
        goal = mean_goal([t.goal for t in traces], traces[0].goal.label)
        new = ffg.new_functionality(goal)
        new.traces = traces
        new.next_trace = node.next_trace
        refresh_node(new, spec)
        for f in ffg.flows.values():
            if f.source == node.id and f.pi in cluster:
                f.source = new.id
            if f.target == node.id and f.pi_prime in cluster:
                f.target = new.id
        new_ids.append(new.id)
    node.traces = [t for t in node.traces if t.id in keep]
    refresh_node(node, spec)
    ffg.bump()
    ffg.check_integrity()
    return [UpdateOp("node_split", {"functionality": node.id}, {"functionalities": [node.id] + new_ids}, justification)]


def update_functionalities(ffg: FFG, new_trace: ExecutionTrace, spec: AppSpec, oracle: SpecOracle,
                           thresholds: Optional[Thresholds] = None) -> List[UpdateOp]:
    """Home each goal-coherent segment of ``new_trace`` into the graph.

    The homing (segment, trace object) list is left on ``new_trace.homing``
    for :func:`derive_flow`.
    """
    th = thresholds or Thresholds()
    ops: List[UpdateOp] = []
    homing: List[Tuple[Segment, Trace]] = []
    labels: List[Optional[str]] = [None] * len(new_trace.steps)
    for seg in segment_trace(new_trace, spec, oracle, th.sim):
        node, sim = best_match(ffg, seg.goal, oracle, th.sim)
        if node is None:
            node = ffg.new_functionality(seg.goal)
            t = ffg.add_trace(node, seg.steps, seg.goal, spec, seg.end_page)
            ops.append(
                UpdateOp("node_create", {}, {"functionality": node.id, "trace": t.id},
                         {"similarity": round(sim, 6), "label": seg.goal.label})
            )
        else:
            t = node.find_steps(seg.steps, seg.end_page)
            duplicate = t is not None
            if t is None:
                t = ffg.add_trace(node, seg.steps, seg.goal, spec, seg.end_page)
            ops.append(
                UpdateOp("node_merge", {"functionality": node.id},
                         {"functionality": node.id, "trace": t.id, "duplicate": duplicate},
                         {"similarity": round(sim, 6)})
            )
            ops.extend(split_node(ffg, node, spec, oracle, th))
        homing.append((seg, t))
    for seg, t in homing:
        fid, _ = locate(ffg, t)
        for i in seg.indices:
            labels[i] = fid
    new_trace.segment_labels = labels
    new_trace.homing = homing
    return ops


# ---------------------------------------------------------------------------
# Flow updates
# ---------------------------------------------------------------------------


def derive_flow(new_trace: ExecutionTrace, ffg: FFG, oracle: SpecOracle, spec: AppSpec,
                infer: bool = True) -> List[Flow]:
    """Candidate flows at functionality-changing points of a homed trace.

    With ``infer=False`` candidates carry True, as at initialization.
    """
    homing = getattr(new_trace, "homing", None) or []
    out = []
    for (sa, ta), (sb, tb) in zip(homing, homing[1:]):
        if not sb.linked:
            continue
        fa, pa = locate(ffg, ta)
        fb, pb = locate(ffg, tb)
        if fa == fb:
            continue
        phi = C.TRUE
        if infer:
            phi = oracle.infer_flow_condition(new_trace.state_before(sb.indices[0]), ffg.func(fb), spec)
        out.append(Flow("", fa, fb, pa, phi, pb))
    return out


def _page_after(t: Trace, k: int) -> Optional[str]:
    return t.steps[k].page if k < len(t.steps) else t.end_page


def outcome_relation(ffg: FFG, a: Flow, b: Flow) -> str:
    """"same", "consistent" (one target trace is a faithful prefix of the other) or "different"."""
    if a.target != b.target:
        return "different"
    ta = ffg.func(a.target).trace(a.pi_prime)
    tb = ffg.func(b.target).trace(b.pi_prime)
    if ta.steps == tb.steps and ta.end_page == tb.end_page:
        return "same"
    short, long_ = (ta, tb) if len(ta.steps) <= len(tb.steps) else (tb, ta)
    n = len(short.steps)
    if n < len(long_.steps) and long_.steps[:n] == short.steps:
        if short.end_page is None or short.end_page == _page_after(long_, n):
            return "consistent"
    return "different"


def update_flows(ffg: FFG, new_flow: Flow, decls) -> List[UpdateOp]:
    """Integrate ``new_flow`` against its siblings, in flow-id order."""
    phi = C.simplify(new_flow.phi, decls)
    if not C.is_satisfiable(phi, decls):
        return []  # never observable, so it neither refines nor extends anything
    siblings = flows_from(ffg, new_flow.source, new_flow.pi)
    ops: List[UpdateOp] = []
    rel = {s.id: outcome_relation(ffg, s, new_flow) for s in siblings}
    diff = [s for s in siblings if rel[s.id] == "different"]
    same = [s for s in siblings if rel[s.id] == "same"]

    effective = phi
    for s in diff:
        if C.entails(phi, s.phi, decls):
            # the new behaviour carves its states out of the sibling
            old = s.phi
            refined = C.simplify(C.conjoin_negation(old, phi), decls)
            removed = not C.is_satisfiable(refined, decls)
            if removed:
                ffg.remove_flow(s.id)
            else:
                ffg.set_condition(s.id, refined)
            ops.append(
                UpdateOp("flow_strengthen", {"flow": s.id, "phi": old.render()},
                         {"flow": s.id, "phi": refined.render(), "removed": removed},
                         {"entailment": "new |= sibling", "new_phi": phi.render()})
            )
        elif C.entails(s.phi, phi, decls):
            effective = C.simplify(C.conjoin_negation(effective, s.phi), decls)

    if same:
        s = same[0]
        if C.entails(effective, s.phi, decls):
            return ops  # already covered
        old = s.phi
        if C.entails(old, effective, decls):
            ffg.set_condition(s.id, effective)
            ops.append(
                UpdateOp("flow_weaken", {"flow": s.id, "phi": old.render()},
                         {"flow": s.id, "phi": effective.render()}, {"entailment": "sibling |= new"})
            )
        else:
            merged = C.simplify(C.disjoin(effective, old), decls)
            ffg.set_condition(s.id, merged)
            ops.append(
                UpdateOp("flow_merge", {"flow": s.id, "phi": old.render()},
                         {"flow": s.id, "phi": merged.render()}, {"entailment": "incomparable"})
            )
        return ops

    if C.is_satisfiable(effective, decls):
        f = ffg.add_flow(new_flow.source, new_flow.pi, effective, new_flow.target, new_flow.pi_prime)
        verdict = "no sibling" if not siblings else "incomparable or narrowed"
        ops.append(
            UpdateOp("flow_create", {}, {"flow": f.id, "phi": f.phi.render()}, {"entailment": verdict})
        )
    return ops


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


@dataclass
class IterationSummary:
    counts: Dict[str, int] = field(default_factory=dict)
    revision: int = 0
    ops: List[UpdateOp] = field(default_factory=list)

    @property
    def net_ops(self) -> int:
        return sum(1 for op in self.ops if op.mutating)


def apply_iteration(ffg: FFG, traces: Sequence[ExecutionTrace], spec: AppSpec, oracle: SpecOracle,
                    thresholds: Optional[Thresholds] = None) -> IterationSummary:
    """Node updates then flow updates for each trace, in the given order.

    A trace's ``infer_conditions`` flag selects inferred conditions over True;
    ``learn_flows`` False limits it to node updates.
    """
    ops: List[UpdateOp] = []
    for tr in traces:
        ops.extend(update_functionalities(ffg, tr, spec, oracle, thresholds))
        if not getattr(tr, "learn_flows", True):
            continue
        for cand in derive_flow(tr, ffg, oracle, spec, infer=getattr(tr, "infer_conditions", False)):
            ops.extend(update_flows(ffg, cand, spec.decls))
    counts = Counter(op.kind for op in ops if op.mutating)
    return IterationSummary({k: counts.get(k, 0) for k in NODE_OPS + FLOW_OPS}, ffg.revision, ops)
