"""Test scenarios: (type, strategy, object, guidance) with a structured plan."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

from . import conditions as C
from .app_model import ActionStep
from .conditions import Condition

LTV_FUNC = ("ltv/completeness", "ltv/independence")
LTV_FLOW = ("ltv/partition", "ltv/minimal_violation", "ltv/invariant")
SINGLE_FLOW_MRS = ("hide_show", "change_order", "toggle")
CROSS_FLOW_MRS = ("create_delete", "modify_attribute", "consume_produce")
STV_SINGLE = tuple(f"stv/{m}" for m in SINGLE_FLOW_MRS)
STV_CROSS = tuple(f"stv/{m}" for m in CROSS_FLOW_MRS)

PHASES = {
    "ltv-func": LTV_FUNC,
    "ltv-flow": LTV_FLOW,
    "stv-single": STV_SINGLE,
    "stv-cross": STV_CROSS,
}


def phase_of(strategy: str) -> str:
    for phase, tags in PHASES.items():
        if strategy in tags:
            return phase
    raise KeyError(strategy)


@dataclass(frozen=True)
class NavigateTo:
    target: str
    kind: str = "functionality"  # functionality | page

    def to_json(self):
        return {"op": "navigate_to", "target": self.target, "kind": self.kind}


@dataclass(frozen=True)
class ExecuteTrace:
    func: str
    trace: str

    def to_json(self):
        return {"op": "execute_trace", "func": self.func, "trace": self.trace}


@dataclass(frozen=True)
class ExecuteActions:
    actions: Tuple[ActionStep, ...]

    def to_json(self):
        return {"op": "execute_actions", "actions": [a.to_json() for a in self.actions]}


@dataclass(frozen=True)
class EstablishCondition:
    condition: Condition

    def to_json(self):
        return {"op": "establish_condition", "condition": self.condition.render()}


@dataclass(frozen=True)
class ApplyVariant:
    """Replace the next replay of ``func/trace`` with ``steps``."""

    func: str
    trace: str
    mr: str
    params: Tuple[Tuple[str, Any], ...]
    steps: Tuple[ActionStep, ...]

    def to_json(self):
        return {
            "op": "apply_variant",
            "func": self.func,
            "trace": self.trace,
            "mr": self.mr,
            "params": dict(self.params),
            "steps": [s.to_json() for s in self.steps],
        }


@dataclass(frozen=True)
class Observe:
    check: str  # goal-progress | flow-outcome | divergence | expected-effect
    params: Tuple[Tuple[str, Any], ...] = ()

    def param(self, key, default=None):
        return dict(self.params).get(key, default)

    def to_json(self):
        d = {"op": "observe", "check": self.check}
        if self.params:
            d["params"] = {k: (v.render() if isinstance(v, Condition) else v) for k, v in self.params}
        return d


PlanStep = Union[NavigateTo, ExecuteTrace, ExecuteActions, EstablishCondition, ApplyVariant, Observe]


@dataclass
class TestScenario:
    __test__ = False  # keep pytest from collecting this class

    type: str  # LTV | STV
    strategy: str
    object: str
    guidance: List[PlanStep]
    id: str = ""
    note: str = ""

    def __post_init__(self):
        if self.type not in ("LTV", "STV"):
            raise ValueError(f"bad scenario type {self.type!r}")
        if not self.guidance:
            raise ValueError("scenario guidance must be non-empty")

    @property
    def flow_oriented(self) -> bool:
        return self.strategy not in LTV_FUNC

    def to_json(self) -> dict:
        d = {
            "id": self.id,
            "type": self.type,
            "strategy": self.strategy,
            "object": self.object,
            "plan": [p.to_json() for p in self.guidance],
        }
        if self.note:
            d["note"] = self.note
        return d


def check_scenario(scenario: TestScenario, ffg, spec) -> None:
    """Raise ``KeyError``/``FFGError`` if a plan reference does not resolve."""
    for p in scenario.guidance:
        if isinstance(p, NavigateTo):
            if p.kind == "page":
                spec.pages[p.target]
            else:
                ffg.func(p.target)
        elif isinstance(p, (ExecuteTrace, ApplyVariant)):
            ffg.func(p.func).trace(p.trace)
        elif isinstance(p, ExecuteActions):
            for a in p.actions:
                spec.pages[a.page]
        elif isinstance(p, EstablishCondition):
            C.check_condition(p.condition, spec.decls)
