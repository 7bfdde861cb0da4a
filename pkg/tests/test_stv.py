import pytest
from hypothesis import given, settings, strategies as st

from ffg_explorer import conditions as C
from ffg_explorer.app_model import ActionStep, load_spec_file
from ffg_explorer.ffg import shared_data_pairs
from ffg_explorer.oracle import SpecOracle
from ffg_explorer.scenarios import ApplyVariant, ExecuteTrace, check_scenario
from ffg_explorer.stv import (
    MetamorphicRelation, gen_cross_flow, gen_single_flow, mr_family, variant_change_order, variant_hide_show,
    variant_toggle,
)

from conftest import corpus_path, init_ffg, with_delete_pair, with_sugar_editing

O = SpecOracle()
EDITOR = [
    ActionStep("bmi", "edit"),
    ActionStep("alarm_edit_bmi", "type", "input", "BMI"),
    ActionStep("alarm_edit_bmi", "time", "input", "08:00"),
    ActionStep("alarm_edit_bmi", "add"),
]


def test_relation_levels():
    MetamorphicRelation("toggle", "single_flow")
    MetamorphicRelation("consume_produce", "cross_flow")
    with pytest.raises(ValueError):
        MetamorphicRelation("toggle", "cross_flow")
    with pytest.raises(ValueError):
        MetamorphicRelation("shuffle", "single_flow")


@pytest.mark.parametrize("tag, family", [
    ("add_alarm", "create_delete"), ("delete_alarm", "create_delete"), ("update_contact", "modify_attribute"),
    ("consume_coupon", "consume_produce"), ("produce_coupon", "consume_produce"), ("start_timer", None),
])
def test_mr_family(tag, family):
    assert mr_family(tag) == family


def test_change_order_swaps_form_fields(bp):
    variant, params = variant_change_order(bp, EDITOR)
    assert variant == [EDITOR[0], EDITOR[2], EDITOR[1], EDITOR[3]]
    assert dict(params) == {"start": 1, "length": 2}


def test_toggle_inserts_optional_checkbox(bp):
    variant, params = variant_toggle(bp, EDITOR)
    assert dict(params) == {"inserted": "repeat"}
    assert variant[-1] == EDITOR[-1] and ActionStep("alarm_edit_bmi", "repeat", "toggle_on") in variant


def test_toggle_removes_optional_checkbox(bp):
    with_box = EDITOR[:3] + [ActionStep("alarm_edit_bmi", "repeat", "toggle_on")] + EDITOR[3:]
    variant, params = variant_toggle(bp, with_box)
    assert variant == EDITOR and dict(params) == {"removed": "repeat"}


def test_hide_show_wraps_a_step():
    notes = load_spec_file(corpus_path("notes"))
    steps = [ActionStep("home", "notes"), ActionStep("notes", "new")]
    variant, params = variant_hide_show(notes, steps)
    flip = ActionStep("notes", "preview")
    assert variant == [steps[0], flip, flip, steps[1]]


def test_no_applicable_relation(bp, bp_init):
    (f,) = [f for f in bp_init.flows.values() if f.source == "app_navigation" and f.pi == "I"]
    assert gen_single_flow(f, bp_init, bp, O) == []


def test_single_flow_scenarios(bp_ref):
    ffg, _ = init_ffg(bp_ref)
    f = with_sugar_editing(ffg, bp_ref)
    # the editor trace is the source of a flow back to navigation
    back = ffg.add_flow(f.target, f.pi_prime, C.TRUE, "app_navigation", "I")
    out = gen_single_flow(back, ffg, bp_ref, O)
    assert [s.strategy for s in out] == ["stv/change_order", "stv/toggle"]
    for s in out:
        check_scenario(s, ffg, bp_ref)
        assert isinstance(s.guidance[0], ApplyVariant)
        assert [type(p).__name__ for p in s.guidance] == ["ApplyVariant", "ExecuteTrace", "ExecuteTrace", "Observe"]


pages = ["alarm_edit_bmi", "alarm_edit_sugar", "bmi"]
widgets = {"alarm_edit_bmi": ["type", "time", "repeat", "add"], "alarm_edit_sugar": ["type", "time", "add"],
           "bmi": ["calc", "edit"]}
step_st = st.sampled_from(pages).flatmap(lambda p: st.sampled_from(widgets[p]).map(lambda w: ActionStep(p, w)))


@settings(max_examples=200, deadline=None)
@given(st.lists(step_st, max_size=10))
def test_change_order_stays_within_movable_run(bp, steps):
    made = variant_change_order(bp, steps)
    if made is None:
        return
    variant, params = made
    p = dict(params)
    i, n = p["start"], p["length"]
    assert variant[:i] == steps[:i] and variant[i + n:] == steps[i + n:]
    run = steps[i:i + n]
    assert len({s.page for s in run}) == 1
    assert all(bp.page(s.page).widget(s.widget).order_independent for s in run)
    assert sorted(variant) == sorted(steps)


def test_cross_flow_delete_then_readd(bp):
    ffg, _ = init_ffg(bp)
    e = with_delete_pair(ffg, bp)
    assert ("alarm_management", "blood_sugar_editing", frozenset({"alarm_list"})) in shared_data_pairs(ffg)
    out = {s.note: s for s in gen_cross_flow(ffg, bp) if s.object == e.id}
    # BMI Editing also adds alarms and shares alarm_list, so it yields a second transformer
    assert sorted(out) == ["alarm_management transforms alarm_list", "bmi_editing transforms alarm_list"]
    out = [out["alarm_management transforms alarm_list"]]
    assert out[0].strategy == "stv/create_delete"
    plan = [(p.func, p.trace) for p in out[0].guidance if isinstance(p, ExecuteTrace)]
    assert plan == [
        ("app_navigation", e.pi), ("blood_sugar_editing", "I"),
        ("alarm_management", "II"),
        ("app_navigation", e.pi), ("blood_sugar_editing", "I"),
    ]
    check_scenario(out[0], ffg, bp)


def test_cross_flow_needs_condition(bp):
    ffg, _ = init_ffg(bp)
    e = with_delete_pair(ffg, bp)
    ffg.set_condition(e.id, C.TRUE)
    assert gen_cross_flow(ffg, bp) == []


def test_cross_flow_needs_shared_vars(bp):
    ffg, _ = init_ffg(bp)
    with_delete_pair(ffg, bp)
    for n in ffg.functionalities.values():
        n.vars = set()
    assert gen_cross_flow(ffg, bp) == []
