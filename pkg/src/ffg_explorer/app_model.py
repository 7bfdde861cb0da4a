"""Declarative simulated app: pages, widgets, guarded transition rules.

An :class:`AppSpec` is loaded from a JSON document (see ``docs/app-spec.md``)
and driven through a :class:`SimulatorSession`.  Every widget action either
fires exactly one rule whose guard holds, or reports why it could not.
"""

from __future__ import annotations

import copy
import json
import os
import string
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from . import conditions as C
from .conditions import Condition, VarDecl

ACTIONS = ("click", "input", "toggle_on", "toggle_off", "back")
WIDGET_KINDS = ("button", "input", "toggle", "checkbox", "list_item", "icon")
BACK_WIDGET = "<back>"


class SpecError(ValueError):
    """Invalid app spec; ``location`` is a path like ``rules[3].guard``."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


class SessionCrashed(RuntimeError):
    pass


class DomainViolation(RuntimeError):
    """A rule tried to move a variable outside its declared domain."""


# ---------------------------------------------------------------------------
# Spec types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Widget:
    id: str
    kind: str = "button"
    text: str = ""
    topics: frozenset = frozenset()
    visible: bool = True
    enabled: bool = True
    enabled_when: Condition = C.TRUE
    optional: bool = False
    order_independent: bool = False
    default_input: str = ""

    def default_action(self) -> str:
        if self.kind in ("toggle", "checkbox"):
            return "toggle_on"
        if self.kind == "input":
            return "input"
        return "click"


@dataclass(frozen=True)
class Page:
    id: str
    title: str
    widgets: Tuple[Widget, ...]
    goal_label: str
    goal_vector: Tuple[float, ...]
    goal_topics: frozenset = frozenset()
    touched_vars: frozenset = frozenset()
    parent: Optional[str] = None

    def widget(self, wid: str) -> Optional[Widget]:
        for w in self.widgets:
            if w.id == wid:
                return w
        return None


@dataclass(frozen=True, order=True)
class ActionStep:
    page: str
    widget: str
    action: str = "click"
    text: str = ""

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}")

    @classmethod
    def back(cls, page: str) -> "ActionStep":
        return cls(page, BACK_WIDGET, "back")

    def to_json(self) -> dict:
        d = {"page": self.page, "widget": self.widget, "action": self.action}
        if self.text:
            d["text"] = self.text
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "ActionStep":
        return cls(d["page"], d.get("widget", BACK_WIDGET), d.get("action", "click"), d.get("text", ""))

    def render(self) -> str:
        if self.action == "back":
            return f"{self.page}:back"
        suffix = f"({self.text})" if self.text else ""
        return f"{self.page}:{self.action}:{self.widget}{suffix}"


@dataclass(frozen=True)
class Update:
    op: str  # set | insert | remove
    var: str
    value: Any


@dataclass(frozen=True)
class TransitionRule:
    id: str
    page: str
    widget: str
    action: str
    guard: Condition
    target: str
    updates: Tuple[Update, ...] = ()
    events: Tuple[Tuple[str, str], ...] = ()
    abstract_op: Optional[Tuple[str, Tuple[Tuple[str, str], ...]]] = None


@dataclass(frozen=True)
class ExpectedEffect:
    abstract_op: str
    postcondition: str  # condition template with {arg} placeholders
    description: str = ""

    def instantiate(self, args: Mapping[str, Any]) -> Condition:
        return C.parse(_fill(self.postcondition, args))


@dataclass
class AppSpec:
    name: str
    var_decls: List[VarDecl]
    initial_valuation: Dict[str, Any]
    pages: Dict[str, Page]
    rules: List[TransitionRule]
    expected_effects: Dict[str, ExpectedEffect]
    main_page: str
    embedding_dim: int
    bootstrap: Optional[List[ActionStep]] = None
    injected_bugs: List[dict] = field(default_factory=list)
    _index: Dict[Tuple[str, str, str], List[TransitionRule]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        idx: Dict[Tuple[str, str, str], List[TransitionRule]] = {}
        for r in self.rules:
            idx.setdefault((r.page, r.widget, r.action), []).append(r)
        self._index = idx

    @property
    def decls(self) -> Dict[str, VarDecl]:
        return {d.name: d for d in self.var_decls}

    def rules_for(self, page: str, widget: str, action: str) -> List[TransitionRule]:
        return self._index.get((page, widget, action), [])

    def page(self, pid: str) -> Page:
        return self.pages[pid]


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _fill(template: Any, env: Mapping[str, Any]) -> Any:
    if not isinstance(template, str) or "{" not in template:
        return template
    fields = [f for _, f, _, _ in string.Formatter().parse(template) if f]
    return template.format(**{f: env[f] for f in fields})


def _value_from_json(decl: VarDecl, raw: Any, loc: str) -> Any:
    value = frozenset(raw) if decl.is_set and isinstance(raw, list) else raw
    if not decl.admits(value):
        raise SpecError(loc, f"value {raw!r} outside domain of {decl.name!r}")
    return value


def _cond(text: Any, decls: Mapping[str, VarDecl], loc: str) -> Condition:
    if text is None:
        return C.TRUE
    try:
        cond = C.parse(text) if isinstance(text, str) else C.parse(" || ".join(text))
        C.check_condition(cond, decls)
    except C.ConditionError as exc:
        raise SpecError(loc, str(exc)) from None
    return cond


def _parse_decl(raw: Mapping, loc: str) -> VarDecl:
    try:
        kind = raw["kind"]
        if kind == "int_range":
            return VarDecl(raw["name"], kind, lo=int(raw["lo"]), hi=int(raw["hi"]))
        values = tuple(raw.get("values", raw.get("universe", ())))
        return VarDecl(raw["name"], kind, values)
    except KeyError as exc:
        raise SpecError(loc, f"missing field {exc.args[0]!r}") from None
    except C.ConditionError as exc:
        raise SpecError(loc, str(exc)) from None


def _merge_base(doc: dict, base_dir: Optional[str]) -> dict:
    base_name = doc.get("base")
    if not base_name:
        return doc
    if base_dir is None:
        raise SpecError("base", "a base spec needs a file location")
    with open(os.path.join(base_dir, base_name), encoding="utf-8") as fh:
        base = _merge_base(json.load(fh), base_dir)
    merged = copy.deepcopy(base)
    for key, value in doc.items():
        if key in ("base", "replace_rules", "add_rules", "remove_rules"):
            continue
        merged[key] = value
    by_id = {r.get("id"): i for i, r in enumerate(merged.get("rules", []))}
    for rule in doc.get("replace_rules", []):
        if rule.get("id") not in by_id:
            raise SpecError("replace_rules", f"no base rule with id {rule.get('id')!r}")
        merged["rules"][by_id[rule["id"]]] = rule
    drop = set(doc.get("remove_rules", []))
    merged["rules"] = [r for r in merged.get("rules", []) if r.get("id") not in drop]
    merged["rules"].extend(doc.get("add_rules", []))
    return merged


def load_spec(document: str | Mapping, base_dir: Optional[str] = None) -> AppSpec:
    """Parse and validate an app spec document (JSON text or an already-decoded dict)."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SpecError("document", f"not valid JSON: {exc}") from None
    else:
        doc = dict(document)
    if not isinstance(doc, dict):
        raise SpecError("document", "top level must be an object")
    doc = _merge_base(doc, base_dir)

    for key in ("name", "vars", "pages", "main_page", "embedding_dim"):
        if key not in doc:
            raise SpecError(key, "required field missing")

    decl_list = [_parse_decl(v, f"vars[{i}]") for i, v in enumerate(doc["vars"])]
    decls = {d.name: d for d in decl_list}
    if len(decls) != len(decl_list):
        raise SpecError("vars", "duplicate variable name")
    size = C.space_size(decl_list)
    if size > C.ENUMERATION_CAP:
        raise SpecError("vars", f"assignment space {size} exceeds enumeration cap {C.ENUMERATION_CAP}")

    raw_init = doc.get("initial", {})
    initial = {}
    for d in decl_list:
        loc = f"initial.{d.name}"
        if d.name in raw_init:
            initial[d.name] = _value_from_json(d, raw_init[d.name], loc)
        elif d.kind == "boolean":
            initial[d.name] = False
        elif d.kind == "set_of":
            initial[d.name] = frozenset()
        elif d.kind == "enum":
            initial[d.name] = d.values[0]
        else:
            initial[d.name] = d.lo
    unknown = sorted(set(raw_init) - set(decls))
    if unknown:
        raise SpecError(f"initial.{unknown[0]}", "undeclared variable")

    dim = int(doc["embedding_dim"])
    pages: Dict[str, Page] = {}
    for i, p in enumerate(doc["pages"]):
        loc = f"pages[{i}]"
        widgets = []
        seen = set()
        for j, w in enumerate(p.get("widgets", [])):
            wloc = f"{loc}.widgets[{j}]"
            if w["id"] in seen:
                raise SpecError(wloc, f"duplicate widget id {w['id']!r}")
            seen.add(w["id"])
            kind = w.get("kind", "button")
            if kind not in WIDGET_KINDS:
                raise SpecError(wloc, f"unknown widget kind {kind!r}")
            widgets.append(
                Widget(
                    id=w["id"],
                    kind=kind,
                    text=w.get("text", w["id"]),
                    topics=frozenset(w.get("topics", ())),
                    visible=bool(w.get("visible", True)),
                    enabled=bool(w.get("enabled", True)),
                    enabled_when=_cond(w.get("enabled_when"), decls, f"{wloc}.enabled_when"),
                    optional=bool(w.get("optional", False)),
                    order_independent=bool(w.get("order_independent", False)),
                    default_input=w.get("default_input", ""),
                )
            )
        vec = tuple(float(x) for x in p.get("goal_vector", ()))
        if len(vec) != dim:
            raise SpecError(f"{loc}.goal_vector", f"length {len(vec)} != embedding_dim {dim}")
        touched = frozenset(p.get("touched_vars", ()))
        bad = sorted(touched - set(decls))
        if bad:
            raise SpecError(f"{loc}.touched_vars", f"undeclared variable {bad[0]!r}")
        if p["id"] in pages:
            raise SpecError(loc, f"duplicate page id {p['id']!r}")
        pages[p["id"]] = Page(
            id=p["id"],
            title=p.get("title", p["id"]),
            widgets=tuple(widgets),
            goal_label=p.get("goal_label", ""),
            goal_vector=vec,
            goal_topics=frozenset(p.get("goal_topics", ())),
            touched_vars=touched,
            parent=p.get("parent"),
        )
    for pid, page in pages.items():
        if page.parent is not None and page.parent not in pages:
            raise SpecError(f"pages.{pid}.parent", f"unknown page {page.parent!r}")
    if doc["main_page"] not in pages:
        raise SpecError("main_page", f"unknown page {doc['main_page']!r}")

    rules = []
    for i, r in enumerate(doc.get("rules", [])):
        loc = f"rules[{i}]"
        try:
            page, widget, action = r["page"], r.get("widget", BACK_WIDGET), r.get("action", "click")
        except KeyError as exc:
            raise SpecError(loc, f"missing field {exc.args[0]!r}") from None
        if page not in pages:
            raise SpecError(f"{loc}.page", f"unknown page {page!r}")
        if action not in ACTIONS:
            raise SpecError(f"{loc}.action", f"unknown action {action!r}")
        if action != "back" and pages[page].widget(widget) is None:
            raise SpecError(f"{loc}.widget", f"no widget {widget!r} on page {page!r}")
        target = r.get("target", page)
        if target not in pages:
            raise SpecError(f"{loc}.target", f"unknown page {target!r}")
        updates = []
        for j, u in enumerate(r.get("updates", [])):
            uloc = f"{loc}.updates[{j}]"
            op = next((k for k in ("set", "insert", "remove") if k in u), None)
            if op is None:
                raise SpecError(uloc, "update must be set/insert/remove")
            var = u[op]
            if var not in decls:
                raise SpecError(uloc, f"undeclared variable {var!r}")
            d = decls[var]
            value = u.get("value") if op == "set" else u.get("elem")
            if (op == "set") == d.is_set:
                raise SpecError(uloc, f"{op} does not apply to {d.kind} variable {var!r}")
            is_template = isinstance(value, str) and "{" in value
            if not is_template:
                if op == "set" and not d.admits(value):
                    raise SpecError(uloc, f"value {value!r} outside domain of {var!r}")
                if op != "set" and value not in d.values:
                    raise SpecError(uloc, f"element {value!r} outside universe of {var!r}")
            updates.append(Update(op, var, value))
        events = []
        for j, e in enumerate(r.get("events", [])):
            if "crash" in e:
                events.append(("crash", str(e["crash"])))
            elif "toast" in e:
                events.append(("toast", str(e["toast"])))
            else:
                raise SpecError(f"{loc}.events[{j}]", "event must be crash or toast")
        if sum(1 for k, _ in events if k == "crash") > 1:
            raise SpecError(f"{loc}.events", "at most one crash event per rule")
        aop = None
        if r.get("abstract_op"):
            a = r["abstract_op"]
            aop = (a["tag"], tuple(sorted(a.get("args", {}).items())))
        rules.append(
            TransitionRule(
                id=r.get("id", f"r{i}"),
                page=page,
                widget=widget,
                action=action,
                guard=_cond(r.get("guard"), decls, f"{loc}.guard"),
                target=target,
                updates=tuple(updates),
                events=tuple(events),
                abstract_op=aop,
            )
        )

    # rules sharing (page, widget, action) must have pairwise-unsatisfiable guards
    groups: Dict[Tuple[str, str, str], List[Tuple[int, TransitionRule]]] = {}
    for i, r in enumerate(rules):
        groups.setdefault((r.page, r.widget, r.action), []).append((i, r))
    for key, members in groups.items():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                (ia, ra), (ib, rb) = members[a], members[b]
                if C.is_satisfiable(C.conjoin(ra.guard, rb.guard), decls):
                    raise SpecError(
                        f"rules[{ib}].guard",
                        f"guard overlaps rules[{ia}] on {key[0]}/{key[1]}/{key[2]}",
                    )

    effects = {}
    for i, e in enumerate(doc.get("effects", [])):
        loc = f"effects[{i}]"
        eff = ExpectedEffect(e["abstract_op"], e["postcondition"], e.get("description", ""))
        effects[eff.abstract_op] = eff

    bootstrap = None
    if doc.get("bootstrap") is not None:
        bootstrap = [ActionStep.from_json(s) for s in doc["bootstrap"]]

    return AppSpec(
        name=doc["name"],
        var_decls=decl_list,
        initial_valuation=initial,
        pages=pages,
        rules=rules,
        expected_effects=effects,
        main_page=doc["main_page"],
        embedding_dim=dim,
        bootstrap=bootstrap,
        injected_bugs=list(doc.get("injected_bugs", [])),
    )


def load_spec_file(path: str) -> AppSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SpecError(path, f"cannot read: {exc.strerror}") from None
    return load_spec(text, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepOutcome:
    status: str  # ok | widget_missing | widget_disabled | guard_unmet | crashed
    new_page: Optional[str]
    events: Tuple[Tuple[str, str], ...] = ()
    abstract_op: Optional[Tuple[str, Tuple[Tuple[str, Any], ...]]] = None
    state_after: Mapping[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def toasts(self) -> List[str]:
        return [t for k, t in self.events if k == "toast"]

    def to_json(self) -> dict:
        d: Dict[str, Any] = {"status": self.status, "new_page": self.new_page}
        if self.events:
            d["events"] = [{k: t} for k, t in self.events]
        if self.abstract_op:
            d["abstract_op"] = {"tag": self.abstract_op[0], "args": dict(self.abstract_op[1])}
        return d


@dataclass
class SimulatorSession:
    spec: AppSpec
    current_page: str
    valuation: Dict[str, Any]
    step_count: int = 0
    crashed: bool = False
    rng_seed: int = 0


def reset(spec: AppSpec, seed: int = 0) -> SimulatorSession:
    return SimulatorSession(spec, spec.main_page, dict(spec.initial_valuation), 0, False, seed)


def snapshot(session: SimulatorSession) -> Tuple[str, Dict[str, Any]]:
    return session.current_page, dict(session.valuation)


def clone_session(session: SimulatorSession) -> SimulatorSession:
    # values are immutable (bool/int/str/frozenset), a shallow dict copy is deep enough
    return SimulatorSession(
        session.spec,
        session.current_page,
        dict(session.valuation),
        session.step_count,
        session.crashed,
        session.rng_seed,
    )


def widget_visible(session: SimulatorSession, page: Page, w: Widget) -> bool:
    flag = f"visible__{page.id}__{w.id}"
    if flag in session.valuation:
        return bool(session.valuation[flag])
    return w.visible


def widget_enabled(session: SimulatorSession, w: Widget) -> bool:
    return w.enabled and C.evaluate(w.enabled_when, session.valuation)


def available_widgets(session: SimulatorSession) -> List[Widget]:
    page = session.spec.pages[session.current_page]
    return [w for w in page.widgets if widget_visible(session, page, w) and widget_enabled(session, w)]


def _failed(session: SimulatorSession, status: str) -> StepOutcome:
    return StepOutcome(status, None, (), None, dict(session.valuation))


def perform(session: SimulatorSession, step: ActionStep) -> StepOutcome:
    """Execute one widget action; failures come back as statuses, not exceptions."""
    if session.crashed:
        raise SessionCrashed("session crashed; reset before stepping again")
    spec = session.spec
    session.step_count += 1
    if step.page != session.current_page:
        return _failed(session, "widget_missing")
    page = spec.pages[session.current_page]
    if step.action == "back":
        candidates = spec.rules_for(page.id, BACK_WIDGET, "back")
        if not candidates:
            if page.parent is None:
                return _failed(session, "widget_missing")
            session.current_page = page.parent
            return StepOutcome("ok", page.parent, (), None, dict(session.valuation))
    else:
        w = page.widget(step.widget)
        if w is None or not widget_visible(session, page, w):
            return _failed(session, "widget_missing")
        if not widget_enabled(session, w):
            return _failed(session, "widget_disabled")
        candidates = spec.rules_for(page.id, step.widget, step.action)
    pre = session.valuation
    matching = [r for r in candidates if C.evaluate(r.guard, pre)]
    if not matching:
        return _failed(session, "guard_unmet")
    rule = matching[0]
    env = dict(pre)
    env["input"] = step.text
    post = dict(pre)
    decls = spec.decls
    for u in rule.updates:
        value = _fill(u.value, env)
        d = decls[u.var]
        if u.op == "set":
            new = value
        elif u.op == "insert":
            new = post[u.var] | {value}
        else:
            new = post[u.var] - {value}
        if not d.admits(new):
            raise DomainViolation(f"rule {rule.id} moves {u.var} to {new!r}")
        post[u.var] = new
    aop = None
    if rule.abstract_op is not None:
        tag, args = rule.abstract_op
        aop = (tag, tuple((k, _fill(v, env)) for k, v in args))
    session.valuation = post
    if any(k == "crash" for k, _ in rule.events):
        session.crashed = True
        return StepOutcome("crashed", None, rule.events, aop, dict(post))
    session.current_page = rule.target
    return StepOutcome("ok", rule.target, rule.events, aop, dict(post))
