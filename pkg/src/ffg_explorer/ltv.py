"""Long-term-view scenario generation.

Functionality-level strategies (completeness, independence) question the
node set; flow-level strategies (partition, minimal violation, invariant)
sharpen flow conditions.
"""

from __future__ import annotations

import logging
from typing import List, Optional

from . import conditions as C
from .app_model import AppSpec, reset
from .executor import run_plan
from .ffg import FFG, Flow
from .oracle import DEFAULT_CLUSTER_THRESHOLD, DEFAULT_SEP_THRESHOLD, SpecOracle
from .scenarios import (
    EstablishCondition,
    ExecuteActions,
    ExecuteTrace,
    NavigateTo,
    Observe,
    TestScenario,
)

log = logging.getLogger(__name__)

MAX_ALPHA = 4
PROBE_BUDGET = 200


def gen_completeness(ffg: FFG, spec: AppSpec, oracle: SpecOracle) -> List[TestScenario]:
    out = []
    for fid in sorted(ffg.functionalities):
        node = ffg.functionalities[fid]
        missing = oracle.essential_actions(node, spec) if node.traces else []
        if not missing:
            continue
        plan = [ExecuteTrace(fid, t.id) for t in node.traces]
        for a in missing:
            plan += [ExecuteActions((a,)), Observe("goal-progress", (("func", fid),))]
        out.append(TestScenario("LTV", "ltv/completeness", fid, plan))
    return out


def gen_independence(ffg: FFG, oracle: SpecOracle, sep_threshold: float = DEFAULT_SEP_THRESHOLD,
                     cluster_threshold: float = DEFAULT_CLUSTER_THRESHOLD) -> List[TestScenario]:
    out = []
    for fid in sorted(ffg.functionalities):
        node = ffg.functionalities[fid]
        if len(node.traces) < 2:
            continue
        res = oracle.cluster_trace_goals([(t.id, t.goal) for t in node.traces], cluster_threshold)
        if len(res.clusters) < 2 or res.separation < sep_threshold:
            continue
        order = [t.id for t in node.traces]
        for cluster in sorted(res.clusters, key=lambda c: min(order.index(t) for t in c)):
            plan = [ExecuteTrace(fid, tid) for tid in order if tid in cluster]
            out.append(
                TestScenario("LTV", "ltv/independence", fid, plan, note=f"separation {res.separation:.3f}")
            )
    return out


def gen_condition_partition(flow: Flow, ffg: FFG, decls=None) -> List[TestScenario]:
    parts = C.partition_disjuncts(flow.phi)
    if len(parts) < 2:
        return []
    out = []
    for part in parts:
        if decls is not None and not C.is_satisfiable(part, decls):
            log.info("flow %s: disjunct %s unsatisfiable, skipped", flow.id, part.render())
            continue
        plan = [
            NavigateTo(flow.source),
            ExecuteTrace(flow.source, flow.pi),
            EstablishCondition(part),
            ExecuteTrace(flow.target, flow.pi_prime),
            Observe("flow-outcome", (("flow", flow.id),)),
        ]
        out.append(TestScenario("LTV", "ltv/partition", flow.id, plan))
    return out


def gen_minimal_violation(flow: Flow, ffg: FFG, decls=None) -> List[TestScenario]:
    if flow.phi.is_true or flow.phi.is_false:
        return []
    out = []
    for clause in flow.phi.clauses:
        for atom, violating in C.minimal_violation_targets(clause):
            if decls is not None and not C.is_satisfiable(violating, decls):
                log.info("flow %s: violating %s is unsatisfiable, skipped", flow.id, atom.render())
                continue
            plan = [
                EstablishCondition(violating),
                NavigateTo(flow.source),
                ExecuteTrace(flow.source, flow.pi),
                ExecuteTrace(flow.target, flow.pi_prime),
                Observe("flow-outcome", (("flow", flow.id), ("violated", atom.render()))),
            ]
            out.append(TestScenario("LTV", "ltv/minimal_violation", flow.id, plan, note=f"violates {atom.render()}"))
    return out


def _alpha_ok(flow: Flow, alpha: Optional[ExecuteTrace], ffg: FFG, spec: AppSpec, oracle, seed: int) -> bool:
    plan = [ExecuteTrace(flow.source, flow.pi), ExecuteTrace(flow.target, flow.pi_prime)]
    if alpha is not None:
        plan.append(alpha)
    plan.append(ExecuteTrace(flow.source, flow.pi))
    session = reset(spec, seed)
    run = run_plan(TestScenario("LTV", "ltv/invariant", flow.id, plan, id="probe"), session, ffg, spec, oracle,
                   PROBE_BUDGET, detect_bugs=False)
    if run.aborted or len(run.runs) != len(plan) or not all(r.ok for r in run.runs):
        return False
    return C.evaluate(flow.phi, session.valuation)


def gen_condition_invariant(flow: Flow, ffg: FFG, spec: AppSpec, oracle: Optional[SpecOracle] = None,
                            seed: int = 0, max_alpha: int = MAX_ALPHA) -> List[TestScenario]:
    """pi . pi' . alpha . pi . pi', keeping only alphas after which pi runs and phi still holds."""
    oracle = oracle or SpecOracle()
    candidates: List[Optional[ExecuteTrace]] = [None]
    candidates += [ExecuteTrace(flow.target, t.id) for t in ffg.func(flow.target).traces]
    out = []
    for alpha in candidates:
        if len(out) >= max_alpha:
            break
        if not _alpha_ok(flow, alpha, ffg, spec, oracle, seed):
            continue
        plan = [ExecuteTrace(flow.source, flow.pi), ExecuteTrace(flow.target, flow.pi_prime)]
        if alpha is not None:
            plan.append(alpha)
        plan += [
            ExecuteTrace(flow.source, flow.pi),
            ExecuteTrace(flow.target, flow.pi_prime),
            Observe("divergence", (("flow", flow.id), ("phi", flow.phi))),
        ]
        note = "alpha=" + (f"{alpha.func}/{alpha.trace}" if alpha else "empty")
        out.append(TestScenario("LTV", "ltv/invariant", flow.id, plan, note=note))
    return out
