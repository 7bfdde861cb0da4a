"""Semantic judgments: page goals, goal similarity, gap analysis, clustering.

:class:`SpecOracle` answers every question from annotations in the app
spec, so runs are reproducible.  :class:`RemoteOracle` forwards the same
questions to an HTTP text-completion service and falls back to the spec
oracle whenever the service is unreachable or answers out of contract.
"""

from __future__ import annotations

import json
import logging
import urllib.request
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import conditions as C
from .app_model import ActionStep, AppSpec, Page

log = logging.getLogger(__name__)

DEFAULT_SIM_THRESHOLD = 0.7
DEFAULT_CLUSTER_THRESHOLD = 0.7
DEFAULT_SEP_THRESHOLD = 0.5


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class GoalDescriptor:
    label: str
    vector: Tuple[float, ...]
    topics: frozenset = frozenset()

    @classmethod
    def make(cls, label: str, vector: Iterable[float], topics: Iterable[str] = ()) -> "GoalDescriptor":
        v = np.asarray(list(vector), dtype=float)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise OracleError(f"goal {label!r} has a zero vector")
        return cls(label, tuple(round(float(x), 12) for x in v / norm), frozenset(topics))

    def to_json(self) -> dict:
        return {"label": self.label, "vector": list(self.vector), "topics": sorted(self.topics)}

    @classmethod
    def from_json(cls, d) -> "GoalDescriptor":
        return cls.make(d["label"], d["vector"], d.get("topics", ()))


@dataclass(frozen=True)
class ClusterResult:
    clusters: Tuple[frozenset, ...]
    separation: float


def mean_goal(goals: Sequence[GoalDescriptor], label: Optional[str] = None) -> GoalDescriptor:
    vec = np.sum([np.asarray(g.vector) for g in goals], axis=0)
    topics = frozenset().union(*(g.topics for g in goals))
    return GoalDescriptor.make(label if label is not None else goals[0].label, vec, topics)


class SpecOracle:
    """Deterministic oracle backed by the app spec's goal annotations."""

    def infer_page_goal(self, page: Page) -> GoalDescriptor:
        if not page.goal_label or not page.goal_vector:
            raise OracleError(f"page {page.id!r} lacks goal annotations")
        return GoalDescriptor.make(page.goal_label, page.goal_vector, page.goal_topics)

    def similarity(self, a: GoalDescriptor, b: GoalDescriptor) -> float:
        if len(a.vector) != len(b.vector):
            raise OracleError(f"vector dims differ: {len(a.vector)} vs {len(b.vector)}")
        return float(np.clip(np.dot(a.vector, b.vector), -1.0, 1.0))

    def trace_goal(self, steps: Sequence[ActionStep], spec: AppSpec) -> GoalDescriptor:
        """Normalized mean of the visited pages' goals; label of the most-visited page."""
        pages = [spec.pages[s.page] for s in steps]
        goals = [self.infer_page_goal(p) for p in pages]
        counts: dict = {}
        for p in pages:
            counts[p.id] = counts.get(p.id, 0) + 1
        best = max(counts.values())
        majority = next(p for p in pages if counts[p.id] == best)
        return mean_goal(goals, majority.goal_label)

    def essential_actions(self, func, spec: AppSpec) -> List[ActionStep]:
        topics = func.goal.topics
        used = {(s.page, s.widget) for t in func.traces for s in t.steps}
        pages: List[str] = []
        for t in func.traces:
            for s in t.steps:
                if s.page not in pages:
                    pages.append(s.page)
        out = []
        for pid in pages:
            for w in spec.pages[pid].widgets:
                if (pid, w.id) in used or not (w.topics & topics):
                    continue
                out.append(ActionStep(pid, w.id, w.default_action(), w.default_input))
        return out

    def cluster_trace_goals(
        self,
        goals: Sequence[Tuple[str, GoalDescriptor]],
        threshold: float = DEFAULT_CLUSTER_THRESHOLD,
    ) -> ClusterResult:
        if not goals:
            raise OracleError("nothing to cluster")
        ids = [tid for tid, _ in goals]
        n = len(goals)
        sim = np.array([[self.similarity(goals[i][1], goals[j][1]) for j in range(n)] for i in range(n)])
        clusters: List[List[int]] = [[i] for i in range(n)]

        def link(a, b):
            return max(sim[i, j] for i in a for j in b)

        while len(clusters) > 1:
            best, pair = None, None
            for x in range(len(clusters)):
                for y in range(x + 1, len(clusters)):
                    s = link(clusters[x], clusters[y])
                    if best is None or s > best + 1e-12:
                        best, pair = s, (x, y)
            if best < threshold:
                break
            x, y = pair
            clusters[x] = sorted(clusters[x] + clusters[y])
            del clusters[y]
        if len(clusters) == 1:
            separation = 1.0
        else:
            inter = max(
                link(clusters[x], clusters[y])
                for x in range(len(clusters))
                for y in range(x + 1, len(clusters))
            )
            separation = float(np.clip(1.0 - inter, 0.0, 1.0))
        return ClusterResult(tuple(frozenset(ids[i] for i in c) for c in clusters), separation)

    def infer_flow_condition(self, prefix_state, target_func, spec: AppSpec) -> C.Condition:
        names = sorted(target_func.vars)
        if not names:
            return C.TRUE
        return C.describe_state(prefix_state, names, spec.decls)


class RemoteOracle(SpecOracle):
    """Forwards judgments to ``endpoint``; see ``docs/oracle-adapter.md``.

    Only page goals and essential actions are delegated.  Any transport or
    contract error falls back to the annotation-driven answer.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def _ask(self, task: str, payload: dict):
        body = json.dumps({"task": task, "payload": payload}, sort_keys=True).encode()
        req = urllib.request.Request(self.endpoint, body, {"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode())["answer"]

    def infer_page_goal(self, page: Page) -> GoalDescriptor:
        base = super().infer_page_goal(page)
        try:
            answer = self._ask(
                "page_goal",
                {"page": page.id, "title": page.title, "widgets": [w.text for w in page.widgets]},
            )
            return GoalDescriptor.make(str(answer["label"]), answer.get("vector", base.vector), base.topics)
        except Exception as exc:  # noqa: BLE001 - advisory service, any failure falls back
            log.warning("remote page_goal failed (%s); using spec annotation", exc)
            return base

    def essential_actions(self, func, spec: AppSpec) -> List[ActionStep]:
        base = super().essential_actions(func, spec)
        try:
            answer = self._ask(
                "essential_actions",
                {
                    "goal": func.goal.label,
                    "traces": [[s.to_json() for s in t.steps] for t in func.traces],
                    "candidates": [s.to_json() for s in base],
                },
            )
            picked = [ActionStep.from_json(a) for a in answer]
            allowed = set(base)
            return [a for a in picked if a in allowed]
        except Exception as exc:  # noqa: BLE001
            log.warning("remote essential_actions failed (%s); using topic overlap", exc)
            return base


def make_oracle(kind: str = "spec", endpoint: Optional[str] = None) -> SpecOracle:
    if kind == "spec":
        return SpecOracle()
    if kind == "remote":
        if not endpoint:
            raise OracleError("remote oracle needs ORACLE_ENDPOINT")
        return RemoteOracle(endpoint)
    raise OracleError(f"unknown oracle {kind!r}")
