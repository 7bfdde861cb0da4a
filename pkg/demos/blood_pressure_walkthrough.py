"""Walk through one exploration of the blood pressure app.

Builds the initial graph from the scripted bootstrap, runs the full loop,
then prints the bugs and the condition learned for the flow into the
blood sugar editor.

    python3 demos/blood_pressure_walkthrough.py
"""

import os
import sys
import tempfile

from ffg_explorer.app_model import load_spec_file, reset
from ffg_explorer.ffg import initialize_ffg, render_text
from ffg_explorer.harness import RunConfig, run, scripted_bootstrap
from ffg_explorer.oracle import SpecOracle

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
APP = os.path.join(ROOT, "corpus", "blood_pressure.app")


def main():
    spec = load_spec_file(APP)
    boot = scripted_bootstrap(reset(spec, 1), spec.bootstrap)
    print(f"bootstrap trace: {len(boot.steps)} steps")
    for i, s in enumerate(boot.steps, 1):
        print(f"  {i:2d}. {s.step.render()}")
    print("\ninitial graph (every flow starts as 'true'):")
    print(render_text(initialize_ffg(boot, spec, SpecOracle())))

    out = tempfile.mkdtemp(prefix="bp-demo-")
    result = run(RunConfig(app=APP, out_dir=out, seed=1, max_actions=500, max_iterations=6))
    if result.exit_code:
        sys.exit(f"run failed, see {out}/run.log")
    print(f"explored with {result.actions} actions; artifacts in {out}\n")
    for b in result.sink.reports:
        v = b.violation
        detail = v.get("postcondition") or v.get("signal") or v.get("mr")
        print(f"{b.id} [{b.kind}] on page {b.page} via scenario {b.scenario}: {detail}")
        if v.get("toasts"):
            print(f"    toast shown: {', '.join(v['toasts'])}")

    print("\nlearned flows into Blood Sugar Editing:")
    for f in result.ffg.flows.values():
        if f.target == "blood_sugar_editing":
            print(f"  {f.id}: {f.source}.{f.pi} --[{f.phi.render()}]--> {f.target}.{f.pi_prime}")


if __name__ == "__main__":
    main()
