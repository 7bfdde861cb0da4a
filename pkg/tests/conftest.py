import os

import pytest

from ffg_explorer.app_model import load_spec_file

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CORPUS = os.path.join(ROOT, "corpus")


def corpus_path(name):
    return os.path.join(CORPUS, f"{name}.app")


@pytest.fixture(scope="session")
def bp():
    return load_spec_file(corpus_path("blood_pressure"))


@pytest.fixture(scope="session")
def bp_ref():
    return load_spec_file(corpus_path("blood_pressure_reference"))


def init_ffg(spec):
    from ffg_explorer.app_model import reset
    from ffg_explorer.ffg import initialize_ffg
    from ffg_explorer.harness import scripted_bootstrap
    from ffg_explorer.oracle import SpecOracle

    boot = scripted_bootstrap(reset(spec, 1), spec.bootstrap)
    return initialize_ffg(boot, spec, SpecOracle()), boot


@pytest.fixture
def bp_init(bp):
    return init_ffg(bp)[0]


def with_sugar_editing(ffg, spec):
    """Add the nodes the blood-sugar flow needs: Home -> Blood Sugar, then the editor trace."""
    from ffg_explorer import conditions as C
    from ffg_explorer.app_model import ActionStep
    from ffg_explorer.oracle import SpecOracle

    o = SpecOracle()
    nav = ffg.func("app_navigation")
    to_sugar = (ActionStep("home", "blood_sugar"),)
    t_nav = ffg.add_trace(nav, to_sugar, o.trace_goal(to_sugar, spec), spec, "blood_sugar")
    edit = (
        ActionStep("blood_sugar", "edit"),
        ActionStep("alarm_edit_sugar", "type", "input", "blood_sugar"),
        ActionStep("alarm_edit_sugar", "time", "input", "08:00"),
        ActionStep("alarm_edit_sugar", "add"),
        ActionStep("blood_sugar", "close"),
    )
    goal = o.trace_goal(edit, spec)
    node = ffg.new_functionality(goal)
    t_edit = ffg.add_trace(node, edit, goal, spec, "home")
    flow = ffg.add_flow(nav.id, t_nav.id, C.TRUE, node.id, t_edit.id)
    return flow


def with_delete_pair(ffg, spec):
    """Blood Sugar Editing flow guarded on the alarm, plus a delete trace in Alarm Management."""
    from ffg_explorer import conditions as C
    from ffg_explorer.app_model import ActionStep

    flow = with_sugar_editing(ffg, spec)
    ffg.set_condition(flow.id, C.parse('"blood_sugar@08:00" not in alarm_list'))
    am = ffg.func("alarm_management")
    delete = (ActionStep("remind_me", "delete"),)
    ffg.add_trace(am, delete, am.goal, spec, "remind_me")
    return ffg.flows[flow.id]


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
