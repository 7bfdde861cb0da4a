import glob
import os
import random

import pytest

from ffg_explorer.app_model import (
    ActionStep, SessionCrashed, SpecError, clone_session, load_spec, load_spec_file, perform, reset, snapshot,
)

from ffg_explorer.executor import candidate_actions

from conftest import CORPUS, corpus_path


def minimal(**extra):
    doc = {
        "name": "tiny", "embedding_dim": 1, "main_page": "a",
        "vars": [{"name": "n", "kind": "enum", "values": ["x", "y"]}],
        "pages": [{"id": "a", "goal_vector": [1], "widgets": [{"id": "go"}]}],
    }
    doc.update(extra)
    return doc


def add_bmi_alarm(session, editor="alarm_edit_bmi"):
    perform(session, ActionStep(editor, "type", "input", "BMI"))
    perform(session, ActionStep(editor, "time", "input", "08:00"))
    return perform(session, ActionStep(editor, "add"))


def open_bmi_editor(session):
    for s in [ActionStep("home", "bmi"), ActionStep("bmi", "edit")]:
        assert perform(session, s).ok


def test_blood_pressure_pages(bp):
    titles = {p.title for p in bp.pages.values()}
    assert titles == {"Home", "BMI", "Alarm Editing", "Settings", "Remind Me", "Blood Sugar"}
    assert bp.main_page == "home"


def test_minimal_spec_without_rules():
    spec = load_spec(minimal())
    assert spec.rules == [] and spec.initial_valuation == {"n": "x"}


def test_guard_overlap_rejected():
    rules = [
        {"id": "r1", "page": "a", "widget": "go", "guard": 'n == "x"'},
        {"id": "r2", "page": "a", "widget": "go", "guard": 'n != "y"'},
    ]
    with pytest.raises(SpecError, match=r"rules\[1\]\.guard.*overlaps"):
        load_spec(minimal(rules=rules))


def test_disjoint_guards_accepted():
    rules = [
        {"id": "r1", "page": "a", "widget": "go", "guard": 'n == "x"'},
        {"id": "r2", "page": "a", "widget": "go", "guard": 'n == "y"'},
    ]
    assert len(load_spec(minimal(rules=rules)).rules) == 2


@pytest.mark.parametrize("patch, where", [
    ({"rules": [{"page": "a", "widget": "go", "updates": [{"set": "m", "value": "x"}]}]}, "rules[0].updates[0]"),
    ({"rules": [{"page": "a", "widget": "nope"}]}, "rules[0].widget"),
    ({"rules": [{"page": "a", "widget": "go", "guard": 'n == "z"'}]}, "rules[0].guard"),
    ({"initial": {"n": "z"}}, "initial.n"),
    ({"main_page": "b"}, "main_page"),
    ({"vars": [{"name": f"b{i}", "kind": "boolean"} for i in range(21)]}, "vars"),
    ({"embedding_dim": 2}, "pages[0].goal_vector"),
])
def test_load_errors_carry_location(patch, where):
    with pytest.raises(SpecError) as exc:
        load_spec(minimal(**patch))
    assert where in str(exc.value)


def test_reset(bp):
    s = reset(bp, 7)
    assert s.current_page == "home" and s.valuation["alarm_list"] == frozenset() and s.step_count == 0
    assert snapshot(reset(bp, 7)) == snapshot(s)


def test_bug1_inserts_wrong_type(bp):
    s = reset(bp, 1)
    open_bmi_editor(s)
    out = add_bmi_alarm(s)
    assert out.ok
    assert out.abstract_op == ("add_alarm", (("time", "08:00"), ("type", "BMI")))
    assert s.valuation["alarm_list"] == frozenset({"blood_sugar@08:00"})


def test_bug2_time_repeat_after_delete(bp):
    s = reset(bp, 1)
    for st in [ActionStep("home", "blood_sugar"), ActionStep("blood_sugar", "edit"),
               ActionStep("alarm_edit_sugar", "type", "input", "blood_sugar"),
               ActionStep("alarm_edit_sugar", "time", "input", "08:00"), ActionStep("alarm_edit_sugar", "add"),
               ActionStep("blood_sugar", "close"), ActionStep("home", "settings"),
               ActionStep("settings", "remind_me"), ActionStep("remind_me", "delete")]:
        assert perform(s, st).ok, st
    assert s.valuation["alarm_list"] == frozenset()
    for st in [ActionStep("remind_me", "close"), ActionStep("settings", "home"), ActionStep("home", "blood_sugar"),
               ActionStep("blood_sugar", "edit"), ActionStep("alarm_edit_sugar", "type", "input", "blood_sugar"),
               ActionStep("alarm_edit_sugar", "time", "input", "08:00")]:
        assert perform(s, st).ok
    out = perform(s, ActionStep("alarm_edit_sugar", "add"))
    assert out.ok and out.toasts() == ["Time repeat"]
    assert s.valuation["alarm_list"] == frozenset()


def test_widget_missing(bp):
    s = reset(bp, 1)
    assert perform(s, ActionStep("home", "no_such")).status == "widget_missing"
    assert perform(s, ActionStep("bmi", "calc")).status == "widget_missing"


def test_guard_unmet_leaves_state():
    spec = load_spec(minimal(rules=[{"id": "r1", "page": "a", "widget": "go", "guard": 'n == "y"'}]))
    s = reset(spec, 1)
    before = snapshot(s)
    out = perform(s, ActionStep("a", "go"))
    assert out.status == "guard_unmet" and out.new_page is None
    assert snapshot(s) == before


def test_reference_add_lists_own_type(bp_ref):
    s = reset(bp_ref, 1)
    open_bmi_editor(s)
    assert add_bmi_alarm(s).ok
    assert snapshot(s)[1]["alarm_list"] == frozenset({"BMI@08:00"})
    assert snapshot(s) == snapshot(s)


def test_clone_is_independent(bp):
    a = reset(bp, 1)
    b = clone_session(a)
    perform(b, ActionStep("home", "bmi"))
    assert snapshot(a)[0] == "home" and snapshot(b)[0] == "bmi"
    c = clone_session(a)
    steps = [ActionStep("home", "bmi"), ActionStep("bmi", "calc"), ActionStep("bmi", "edit")]
    assert [perform(a, x) for x in steps] == [perform(c, x) for x in steps]


def crashing_session():
    spec = load_spec_file(corpus_path("notes"))
    s = reset(spec, 1)
    for st in [ActionStep("home", "notes"), ActionStep("notes", "preview"), ActionStep("notes", "preview")]:
        assert perform(s, st).ok
    out = perform(s, ActionStep("notes", "new"))
    assert out.status == "crashed" and out.events[0][0] == "crash"
    return s


def test_crash_absorbs_and_reset_recovers():
    s = crashing_session()
    with pytest.raises(SessionCrashed):
        perform(s, ActionStep("notes", "close"))
    assert clone_session(s).crashed
    fresh = reset(s.spec, 1)
    assert not fresh.crashed and perform(fresh, ActionStep("home", "notes")).ok


def test_disabled_widget(bp):
    spec = load_spec_file(corpus_path("clock"))
    s = reset(spec, 1)
    perform(s, ActionStep("home", "timer"))
    assert perform(s, ActionStep("timer", "start")).status == "widget_disabled"


def test_hidden_widget_is_missing():
    spec = load_spec_file(corpus_path("notes"))
    s = reset(spec, 1)
    perform(s, ActionStep("home", "notes"))
    assert perform(s, ActionStep("notes", "pane")).status == "widget_missing"
    perform(s, ActionStep("notes", "preview"))
    assert perform(s, ActionStep("notes", "pane")).ok


def test_back_goes_to_parent(bp):
    s = reset(bp, 1)
    perform(s, ActionStep("home", "settings"))
    assert perform(s, ActionStep.back("settings")).new_page == "home"
    assert perform(s, ActionStep.back("home")).status == "widget_missing"


def test_random_walks_stay_in_domain(bp):
    decls = bp.decls
    for seed in range(20):
        rng = random.Random(seed)
        s = reset(bp, seed)
        for _ in range(60):
            out = perform(s, rng.choice(candidate_actions(s)))
            assert out.status != "crashed"
            for name, v in s.valuation.items():
                assert decls[name].admits(v)


def test_twin_inherits_base():
    ref = load_spec_file(corpus_path("blood_pressure_reference"))
    base = load_spec_file(corpus_path("blood_pressure"))
    assert ref.name == "blood_pressure_reference"
    assert [r.id for r in ref.rules] == [r.id for r in base.rules]
    assert ref.pages == base.pages


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CORPUS, "*.app"))), ids=os.path.basename)
def test_corpus_specs_load(path):
    spec = load_spec_file(path)
    assert spec.pages and spec.rules
    if spec.bootstrap:
        s = reset(spec, 1)
        assert all(perform(s, st).ok for st in spec.bootstrap)
