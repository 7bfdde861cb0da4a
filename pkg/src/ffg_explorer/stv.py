"""Short-term-view scenario generation via metamorphic relations.

Single-flow relations rewrite the source trace of one flow at widget level
and expect the target trace to stay executable.  Cross-flow relations let a
third functionality transform data that a flow's condition depends on, then
replay the flow; the expected effects of the replayed operations are the
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .app_model import ActionStep, AppSpec, reset
from .executor import run_plan
from .ffg import FFG, Flow, find_flows_into, shared_data_pairs
from .scenarios import (
    CROSS_FLOW_MRS,
    SINGLE_FLOW_MRS,
    ApplyVariant,
    ExecuteTrace,
    Observe,
    TestScenario,
)

PROBE_BUDGET = 200

# abstract-op name prefixes that implement each cross-flow relation
MR_OP_PREFIXES = {
    "create_delete": ("add_", "delete_", "create_", "remove_"),
    "modify_attribute": ("set_", "update_", "edit_"),
    "consume_produce": ("consume_", "produce_", "acquire_", "release_"),
}


@dataclass(frozen=True)
class MetamorphicRelation:
    tag: str
    level: str
    parameters: Tuple[Tuple[str, object], ...] = ()

    def __post_init__(self):
        want = "single_flow" if self.tag in SINGLE_FLOW_MRS else "cross_flow" if self.tag in CROSS_FLOW_MRS else None
        if want is None:
            raise ValueError(f"unknown MR {self.tag!r}")
        if self.level != want:
            raise ValueError(f"MR {self.tag} is {want}, not {self.level}")


def mr_family(op_tag: str) -> Optional[str]:
    for mr, prefixes in MR_OP_PREFIXES.items():
        if op_tag.startswith(prefixes):
            return mr
    return None


# ---------------------------------------------------------------------------
# Single-flow variants
# ---------------------------------------------------------------------------


def _visibility_togglers(spec: AppSpec, page_id: str) -> List[str]:
    """Widgets on ``page_id`` whose rules flip some ``visible__`` variable."""
    out = []
    for w in spec.pages[page_id].widgets:
        for r in spec.rules_for(page_id, w.id, w.default_action()):
            if any(u.var.startswith("visible__") for u in r.updates) and w.id not in out:
                out.append(w.id)
    return out


def variant_hide_show(spec: AppSpec, steps: Sequence[ActionStep]):
    for i, s in enumerate(steps):
        if s.action == "back":
            continue
        for t in _visibility_togglers(spec, s.page):
            if t == s.widget:
                continue
            w = spec.pages[s.page].widget(t)
            flip = ActionStep(s.page, t, w.default_action(), w.default_input)
            return list(steps[:i]) + [flip, flip] + list(steps[i:]), (("at", i), ("toggler", t))
    return None


def variant_change_order(spec: AppSpec, steps: Sequence[ActionStep]):
    def movable(s: ActionStep) -> bool:
        w = spec.pages[s.page].widget(s.widget) if s.action != "back" else None
        return w is not None and w.order_independent

    i = 0
    while i < len(steps):
        j = i
        while j < len(steps) and movable(steps[j]) and steps[j].page == steps[i].page:
            j += 1
        if j - i >= 2:
            run = list(steps[i:j])
            return list(steps[:i]) + run[::-1] + list(steps[j:]), (("start", i), ("length", j - i))
        i = max(j, i + 1)
    return None


def variant_toggle(spec: AppSpec, steps: Sequence[ActionStep]):
    def optional_toggle(page, wid):
        w = spec.pages[page].widget(wid)
        return w is not None and w.optional and w.kind in ("toggle", "checkbox")

    for i, s in enumerate(steps):
        if s.action != "back" and optional_toggle(s.page, s.widget):
            return list(steps[:i]) + list(steps[i + 1:]), (("removed", s.widget),)
    used = {(s.page, s.widget) for s in steps}
    for page in dict.fromkeys(s.page for s in steps):
        for w in spec.pages[page].widgets:
            if (page, w.id) in used or not optional_toggle(page, w.id):
                continue
            last = max(i for i, s in enumerate(steps) if s.page == page)
            step = ActionStep(page, w.id, "toggle_on")
            return list(steps[:last]) + [step] + list(steps[last:]), (("inserted", w.id),)
    return None


VARIANTS = {
    "hide_show": variant_hide_show,
    "change_order": variant_change_order,
    "toggle": variant_toggle,
}


def _reference_holds(flow: Flow, ffg: FFG, spec: AppSpec, oracle, seed: int) -> bool:
    """The unmodified flow runs cleanly from a fresh session."""
    plan = [ExecuteTrace(flow.source, flow.pi), ExecuteTrace(flow.target, flow.pi_prime)]
    run = run_plan(TestScenario("STV", "stv/probe", flow.id, plan, id="probe"), reset(spec, seed), ffg, spec,
                   oracle, PROBE_BUDGET, detect_bugs=False)
    return run.aborted is None and len(run.runs) == 2 and all(r.ok for r in run.runs)


def gen_single_flow(flow: Flow, ffg: FFG, spec: AppSpec, oracle=None, seed: int = 0) -> List[TestScenario]:
    steps = ffg.func(flow.source).trace(flow.pi).steps
    out = []
    checked = None
    for mr in SINGLE_FLOW_MRS:
        made = VARIANTS[mr](spec, steps)
        if made is None:
            continue
        variant, params = made
        if tuple(variant) == tuple(steps):
            continue
        if checked is None:
            checked = _reference_holds(flow, ffg, spec, oracle, seed)
        if not checked:
            break
        plan = [
            ApplyVariant(flow.source, flow.pi, mr, params, tuple(variant)),
            ExecuteTrace(flow.source, flow.pi),
            ExecuteTrace(flow.target, flow.pi_prime),
            Observe("flow-outcome", (("flow", flow.id), ("mr", mr))),
        ]
        out.append(TestScenario("STV", f"stv/{mr}", flow.id, plan))
    return out


# ---------------------------------------------------------------------------
# Cross-flow transformations
# ---------------------------------------------------------------------------


def _step_ops(spec: AppSpec, step: ActionStep) -> List[Tuple[str, set]]:
    out = []
    for r in spec.rules_for(step.page, step.widget, step.action):
        if r.abstract_op is not None:
            out.append((r.abstract_op[0], {u.var for u in r.updates}))
    return out


def transforming_trace(ffg: FFG, spec: AppSpec, func_id: str, var: str, mr: str):
    """First trace of ``func_id`` with an operation of family ``mr`` that writes ``var``."""
    for t in ffg.func(func_id).traces:
        for s in t.steps:
            if any(mr_family(tag) == mr and var in written for tag, written in _step_ops(spec, s)):
                return t
    return None


def gen_cross_flow(ffg: FFG, spec: AppSpec) -> List[TestScenario]:
    out = []
    seen = set()
    for a, b, shared in shared_data_pairs(ffg):
        for n, n_prime in ((a, b), (b, a)):
            for d in sorted(shared):
                for e in find_flows_into(ffg, n_prime, d):
                    for mr in CROSS_FLOW_MRS:
                        t = transforming_trace(ffg, spec, n, d, mr)
                        if t is None:
                            continue
                        key = (e.id, n, t.id, mr)
                        if key in seen:
                            continue
                        seen.add(key)
                        plan = [
                            ExecuteTrace(e.source, e.pi),
                            ExecuteTrace(e.target, e.pi_prime),
                            ExecuteTrace(n, t.id),
                            ExecuteTrace(e.source, e.pi),
                            ExecuteTrace(e.target, e.pi_prime),
                            Observe("expected-effect", (("flow", e.id), ("var", d), ("via", f"{n}/{t.id}"))),
                        ]
                        out.append(TestScenario("STV", f"stv/{mr}", e.id, plan, note=f"{n} transforms {d}"))
    return out
