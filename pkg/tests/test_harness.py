import csv
import json
import os
import subprocess
import sys

import pytest

from ffg_explorer import cli
from ffg_explorer.app_model import reset
from ffg_explorer.ffg import deserialize
from ffg_explorer.harness import (
    EXIT_OK, EXIT_SPEC, METRIC_COLUMNS, Metrics, RunConfig, bootstrap_explore, emit_metrics, run,
)
from ffg_explorer.scenarios import PHASES, phase_of

from conftest import ROOT, corpus_path

BP = corpus_path("blood_pressure")


@pytest.fixture(scope="module")
def bp_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("bp"))
    return run(RunConfig(app=BP, out_dir=out, seed=1, max_actions=500, max_iterations=6)), out


def read_metrics(out):
    with open(os.path.join(out, "metrics.csv"), newline="") as fh:
        return list(csv.DictReader(fh))


# -- config ---------------------------------------------------------------------

@pytest.mark.parametrize("kw", [{"max_actions": 0}, {"max_iterations": -1}, {"disabled": frozenset({"ltv-fast"})},
                                {"jobs": 0}])
def test_bad_config_rejected(kw, tmp_path):
    with pytest.raises(ValueError):
        RunConfig(app=BP, out_dir=str(tmp_path), **kw)


# -- bootstrap --------------------------------------------------------------------

def test_bootstrap_budget_zero(bp):
    assert bootstrap_explore(reset(bp, 1), 0, 1).steps == []


def test_bootstrap_deterministic(bp):
    a = bootstrap_explore(reset(bp, 1), 30, 5)
    b = bootstrap_explore(reset(bp, 1), 30, 5)
    assert a.actions() == b.actions() and len(a.steps) == 30
    assert all(s.outcome.ok for s in a.steps)


# -- run artifacts ----------------------------------------------------------------

def test_run_writes_artifacts(bp_run):
    result, out = bp_run
    assert result.exit_code == EXIT_OK
    names = set(os.listdir(out))
    assert {"ffg.json", "bugs.json", "metrics.csv", "run.log", "traces", "scenarios-1.json", "updates-1.json"} <= names
    assert "bootstrap.json" in os.listdir(os.path.join(out, "traces"))
    bugs = json.load(open(os.path.join(out, "bugs.json")))
    assert bugs["app"] == "blood_pressure" and bugs["seed"] == 1
    assert [b["id"] for b in bugs["bugs"]] == [f"bug-{i:03d}" for i in range(1, len(bugs["bugs"]) + 1)]


def test_metrics_schema_and_monotone(bp_run):
    _, out = bp_run
    rows = read_metrics(out)
    assert rows and tuple(rows[0]) == METRIC_COLUMNS
    for col in ("scenarios", "bugs_crash", "bugs_functional", "actions", "millis"):
        values = [int(r[col]) for r in rows]
        assert values == sorted(values), col
    assert int(rows[-1]["actions"]) <= 500


def test_flow_count_matches_final_graph(bp_run):
    _, out = bp_run
    ffg = deserialize(open(os.path.join(out, "ffg.json")).read())
    last = read_metrics(out)[-1]
    assert int(last["flows"]) == len(ffg.flows)
    assert int(last["functionalities"]) == len(ffg.functionalities)


def test_each_revision_snapshot_loads(bp_run):
    _, out = bp_run
    snaps = sorted(n for n in os.listdir(out) if n.startswith("ffg-r"))
    assert len(snaps) >= 2
    revisions = [deserialize(open(os.path.join(out, n)).read()).revision for n in snaps]
    assert revisions == sorted(revisions)


def test_zero_iterations_header_only(tmp_path):
    result = run(RunConfig(app=BP, out_dir=str(tmp_path), max_iterations=0))
    assert result.exit_code == EXIT_OK
    assert open(tmp_path / "metrics.csv").read() == ",".join(METRIC_COLUMNS) + "\n"


def test_emit_metrics_reports_path(tmp_path):
    bad = str(tmp_path / "missing" / "metrics.csv")
    with pytest.raises(OSError, match="missing"):
        emit_metrics([Metrics(1, 0, 0, 0, 0, 0, 0, 0)], bad)


def test_bad_spec_exit_code(tmp_path):
    broken = tmp_path / "broken.app"
    broken.write_text('{"name": "x"}')
    result = run(RunConfig(app=str(broken), out_dir=str(tmp_path / "out")))
    assert result.exit_code == EXIT_SPEC
    assert "spec error" in open(tmp_path / "out" / "run.log").read()


def test_ablation_removes_only_that_phase(tmp_path):
    result = run(RunConfig(app=BP, out_dir=str(tmp_path), disabled=frozenset({"stv-single"})))
    phases = {phase_of(sc.strategy) for sc in result.scenarios}
    assert "stv-single" not in phases
    assert phases <= set(PHASES)


def test_parallel_jobs_match_sequential(tmp_path, bp_run):
    _, out = bp_run
    run(RunConfig(app=BP, out_dir=str(tmp_path), jobs=4))
    for name in ("bugs.json", "ffg.json", "metrics.csv"):
        assert open(tmp_path / name).read() == open(os.path.join(out, name)).read()


# -- command line -------------------------------------------------------------------

def test_cli_validate(capsys):
    assert cli.main(["validate", "--app", BP]) == EXIT_OK
    assert capsys.readouterr().out == "blood_pressure: 7 pages, 30 rules, 7 variables\n"


def test_cli_validate_missing_file(capsys):
    assert cli.main(["validate", "--app", "nowhere.app"]) == EXIT_SPEC
    assert "invalid" in capsys.readouterr().err


def test_cli_show_ffg(capsys):
    assert cli.main(["show-ffg", os.path.join(ROOT, "golden", "blood_pressure_init.ffg")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "app_navigation" in text and "e001" in text


def test_cli_show_ffg_rejects_garbage(tmp_path, capsys):
    p = tmp_path / "x.ffg"
    p.write_text("{not json")
    assert cli.main(["show-ffg", str(p)]) == EXIT_SPEC


def test_cli_unknown_phase():
    with pytest.raises(SystemExit):
        cli.main(["run", "--app", BP, "--out-dir", "x", "--disable", "nope"])


def test_console_script_runs(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ffg_explorer.cli", "run", "--app", BP, "--seed", "1", "--max-iterations", "1",
         "--out-dir", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert "bugs" in proc.stdout and str(tmp_path) in proc.stdout
