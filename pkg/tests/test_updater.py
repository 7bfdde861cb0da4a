import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from ffg_explorer import conditions as C
from ffg_explorer.app_model import ActionStep, perform, reset
from ffg_explorer.ffg import ExecutionTrace, Flow, serialize
from ffg_explorer.oracle import GoalDescriptor, SpecOracle
from ffg_explorer.updater import (
    Thresholds, UpdateOp, apply_iteration, derive_flow, outcome_relation, split_node, update_flows,
    update_functionalities,
)

import brute
from conftest import init_ffg, with_sugar_editing

O = SpecOracle()
SUGAR_RUN = [
    ActionStep("home", "blood_sugar"),
    ActionStep("blood_sugar", "edit"),
    ActionStep("alarm_edit_sugar", "type", "input", "blood_sugar"),
    ActionStep("alarm_edit_sugar", "time", "input", "08:00"),
    ActionStep("alarm_edit_sugar", "add"),
    ActionStep("blood_sugar", "close"),
]
NOT_ADDED = C.parse('"blood_sugar@08:00" not in alarm_list')
ADDED = C.parse('"blood_sugar@08:00" in alarm_list')


def executed(spec, steps, infer=True):
    s = reset(spec, 1)
    tr = ExecutionTrace(initial_state=dict(s.valuation), strategy="ltv/completeness", infer_conditions=infer)
    for step in steps:
        tr.append(step, perform(s, step))
    return tr


def test_update_op_kinds():
    with pytest.raises(ValueError):
        UpdateOp("flow_delete", {}, {}, {})


# -- functionality updates ------------------------------------------------------

def test_blood_sugar_becomes_its_own_node(bp):
    ffg, _ = init_ffg(bp)
    ops = update_functionalities(ffg, executed(bp, SUGAR_RUN), bp, O)
    kinds = [(op.kind, op.after["functionality"]) for op in ops]
    assert kinds == [("node_merge", "app_navigation"), ("node_create", "blood_sugar_editing")]
    assert ffg.func("blood_sugar_editing").goal.label == "Blood Sugar Editing"


def test_verbatim_rerun_merges_without_duplicate(bp):
    ffg, _ = init_ffg(bp)
    update_functionalities(ffg, executed(bp, SUGAR_RUN), bp, O)
    counts = {fid: len(n.traces) for fid, n in ffg.functionalities.items()}
    ops = update_functionalities(ffg, executed(bp, SUGAR_RUN), bp, O)
    assert [op.kind for op in ops] == ["node_merge", "node_merge"]
    assert all(op.after["duplicate"] for op in ops)
    assert {fid: len(n.traces) for fid, n in ffg.functionalities.items()} == counts


def test_orthogonal_trace_groups_split(bp):
    ffg, _ = init_ffg(bp)
    node = ffg.func("alarm_management")
    other = GoalDescriptor.make("Something Else", [0, 0, 0, 0, 0, 1])
    t2 = ffg.add_trace(node, (ActionStep("remind_me", "delete"),), other, bp, "remind_me")
    e = ffg.add_flow("app_navigation", "II", C.TRUE, "alarm_management", t2.id)
    ops = split_node(ffg, node, bp, O, Thresholds())
    assert [op.kind for op in ops] == ["node_split"]
    new_id = ops[0].after["functionalities"][1]
    assert [t.id for t in ffg.func(new_id).traces] == [t2.id]
    assert [t.id for t in node.traces] == ["I"]
    assert ffg.flows[e.id].target == new_id
    ffg.check_integrity()


def test_coherent_node_does_not_split(bp):
    ffg, _ = init_ffg(bp)
    node = ffg.func("alarm_management")
    ffg.add_trace(node, (ActionStep("remind_me", "delete"),), node.goal, bp, "remind_me")
    assert split_node(ffg, node, bp, O, Thresholds()) == []


# -- flow derivation --------------------------------------------------------------

def test_flow_condition_at_the_boundary(bp):
    ffg, _ = init_ffg(bp)
    tr = executed(bp, SUGAR_RUN)
    update_functionalities(ffg, tr, bp, O)
    (flow,) = derive_flow(tr, ffg, O, bp)
    assert (flow.source, flow.target) == ("app_navigation", "blood_sugar_editing")
    assert C.entails(flow.phi, NOT_ADDED, bp.decls)
    assert C.evaluate(flow.phi, tr.initial_state)


def test_single_segment_has_no_flows(bp):
    ffg, _ = init_ffg(bp)
    tr = executed(bp, [ActionStep("home", "settings")])
    update_functionalities(ffg, tr, bp, O)
    assert derive_flow(tr, ffg, O, bp) == []


def test_true_condition_without_inference(bp):
    ffg, _ = init_ffg(bp)
    tr = executed(bp, SUGAR_RUN, infer=False)
    update_functionalities(ffg, tr, bp, O)
    assert [f.phi for f in derive_flow(tr, ffg, O, bp, infer=False)] == [C.TRUE]


# -- flow updates: the case table -------------------------------------------------

@pytest.fixture
def pair(bp):
    """A True flow into Blood Sugar Editing, plus a second, different target trace."""
    ffg, _ = init_ffg(bp)
    flow = with_sugar_editing(ffg, bp)
    node = ffg.func(flow.target)
    other = ffg.add_trace(node, (ActionStep("blood_sugar", "close"),), node.goal, bp, "home")
    return ffg, flow, other.id


def candidate(flow, phi, pi_prime=None):
    return Flow("", flow.source, flow.target, flow.pi, phi, pi_prime or flow.pi_prime)


def test_divergent_outcome_refines_sibling(bp, pair):
    ffg, e, other = pair
    ops = update_flows(ffg, candidate(e, ADDED, other), bp.decls)
    assert sorted(op.kind for op in ops) == ["flow_create", "flow_strengthen"]
    assert ffg.flows[e.id].phi == NOT_ADDED
    created = ffg.flows[next(op.after["flow"] for op in ops if op.kind == "flow_create")]
    assert created.phi == ADDED and created.pi_prime == other
    assert not C.is_satisfiable(C.conjoin(created.phi, ffg.flows[e.id].phi), bp.decls)


def test_no_sibling_creates(bp, pair):
    ffg, e, _ = pair
    flow = Flow("", "alarm_management", "bmi_editing", "I", ADDED, "I")
    ops = update_flows(ffg, flow, bp.decls)
    assert [op.kind for op in ops] == ["flow_create"]
    assert ops[0].justification == {"entailment": "no sibling"}


def test_same_flow_is_a_no_op(bp, pair):
    ffg, e, _ = pair
    before = serialize(ffg)
    assert update_flows(ffg, candidate(e, C.TRUE), bp.decls) == []
    assert serialize(ffg) == before


def test_weaken(bp, pair):
    ffg, e, _ = pair
    ffg.set_condition(e.id, NOT_ADDED)
    (op,) = update_flows(ffg, candidate(e, C.TRUE), bp.decls)
    assert op.kind == "flow_weaken" and ffg.flows[e.id].phi == C.TRUE


def test_merge(bp, pair):
    ffg, e, _ = pair
    bmi = C.parse('"BMI@08:00" in alarm_list')
    ffg.set_condition(e.id, NOT_ADDED)
    (op,) = update_flows(ffg, candidate(e, bmi), bp.decls)
    assert op.kind == "flow_merge"
    assert brute.models(ffg.flows[e.id].phi, bp.var_decls) == brute.models(C.disjoin(NOT_ADDED, bmi), bp.var_decls)


def test_narrowed_create(bp, pair):
    ffg, e, other = pair
    ffg.set_condition(e.id, NOT_ADDED)
    (op,) = update_flows(ffg, candidate(e, C.TRUE, other), bp.decls)
    assert op.kind == "flow_create" and op.after["phi"] == ADDED.render()
    assert ffg.flows[e.id].phi == NOT_ADDED


def test_strengthen_to_nothing_removes_sibling(bp, pair):
    ffg, e, other = pair
    ops = update_flows(ffg, candidate(e, C.TRUE, other), bp.decls)
    strengthen = next(op for op in ops if op.kind == "flow_strengthen")
    assert strengthen.after["removed"] and e.id not in ffg.flows


def test_unsatisfiable_candidate_ignored(bp, pair):
    ffg, e, other = pair
    before = serialize(ffg)
    assert update_flows(ffg, candidate(e, C.FALSE, other), bp.decls) == []
    assert serialize(ffg) == before


def test_outcome_relation(bp, pair):
    ffg, e, other = pair
    assert outcome_relation(ffg, e, candidate(e, C.TRUE)) == "same"
    assert outcome_relation(ffg, e, candidate(e, C.TRUE, other)) == "different"
    node = ffg.func(e.target)
    prefix = node.trace(e.pi_prime).steps[:2]
    short = ffg.add_trace(node, prefix, node.goal, bp, "alarm_edit_sugar")
    assert outcome_relation(ffg, e, candidate(e, C.TRUE, short.id)) == "consistent"
    elsewhere = Flow("", e.source, "alarm_management", e.pi, C.TRUE, "I")
    assert outcome_relation(ffg, e, elsewhere) == "different"


# -- iterations ---------------------------------------------------------------------

def test_empty_iteration(bp):
    ffg, _ = init_ffg(bp)
    rev = ffg.revision
    summary = apply_iteration(ffg, [], bp, O)
    assert summary.net_ops == 0 and summary.revision == rev


def test_first_iteration_finds_blood_sugar(bp):
    ffg, _ = init_ffg(bp)
    summary = apply_iteration(ffg, [executed(bp, SUGAR_RUN)], bp, O)
    assert summary.counts["node_create"] == 1 and summary.counts["flow_create"] == 1
    assert "blood_sugar_editing" in ffg.functionalities


def test_replay_is_idempotent(bp):
    ffg, _ = init_ffg(bp)
    apply_iteration(ffg, [executed(bp, SUGAR_RUN)], bp, O)
    before = serialize(ffg)
    summary = apply_iteration(ffg, [executed(bp, SUGAR_RUN)], bp, O)
    assert summary.net_ops == 0 and serialize(ffg) == before


# -- properties against an independent case table ------------------------------------

def expected_single(cur, phi, same, decls):
    """The update rule for one sibling, decided on model sets."""
    m_cur, m_phi = set(brute.models(cur, decls)), set(brute.models(phi, decls))
    if same and m_phi:
        if m_phi <= m_cur:
            return [], m_cur, None
        if m_cur <= m_phi:
            return ["flow_weaken"], m_phi, None
        return ["flow_merge"], m_cur | m_phi, None
    if not m_phi:
        return [], m_cur, None
    if m_phi <= m_cur:
        return ["flow_strengthen", "flow_create"], m_cur - m_phi, m_phi
    if m_cur <= m_phi:
        narrowed = m_phi - m_cur
        return (["flow_create"] if narrowed else []), m_cur, narrowed
    return ["flow_create"], m_cur, m_phi


def random_pair_graph(bp, rng, decls):
    ffg, _ = init_ffg(bp)
    flow = with_sugar_editing(ffg, bp)
    node = ffg.func(flow.target)
    other = ffg.add_trace(node, (ActionStep("blood_sugar", "close"),), node.goal, bp, "home")
    cur = brute.random_condition(rng, decls)
    while not brute.models(cur, decls):
        cur = brute.random_condition(rng, decls)
    ffg.set_condition(flow.id, cur)
    return ffg, ffg.flows[flow.id], other.id


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_single_sibling_matches_case_table(bp, seed):
    rng = brute.seeded(seed)
    decls = brute.random_decls(rng)
    ffg, e, other = random_pair_graph(bp, rng, decls)
    cur = e.phi
    phi = brute.random_condition(rng, decls)
    same = rng.random() < 0.5
    ops = update_flows(ffg, candidate(e, phi, None if same else other), decls)
    kinds, sibling_models, created_models = expected_single(cur, phi, same, decls)
    assert [op.kind for op in ops] == kinds
    if e.id in ffg.flows:
        assert set(brute.models(ffg.flows[e.id].phi, decls)) == sibling_models
    else:
        assert not sibling_models
    if "flow_create" in kinds:
        created = ffg.flows[ops[-1].after["flow"]]
        assert set(brute.models(created.phi, decls)) == created_models
    # a second application of the same candidate changes nothing
    before = serialize(ffg)
    update_flows(ffg, candidate(e, phi, None if same else other), decls)
    assert serialize(ffg) == before
