"""Run every corpus app next to its reference twin.

Each buggy app should report its planted bug; each twin should report none.

    python3 demos/corpus_tour.py
"""

import glob
import os
import tempfile

from ffg_explorer.harness import RunConfig, run

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def explore(path):
    out = tempfile.mkdtemp(prefix="tour-")
    result = run(RunConfig(app=path, out_dir=out, seed=1, max_actions=500, max_iterations=6))
    return result


def main():
    apps = sorted(p for p in glob.glob(os.path.join(ROOT, "corpus", "*.app")) if not p.endswith("_reference.app"))
    print(f"{'app':16} {'bugs':>4} {'twin':>4}  first finding")
    for path in apps:
        buggy = explore(path)
        twin = explore(path.replace(".app", "_reference.app"))
        first = buggy.sink.reports[0] if buggy.sink.reports else None
        how = f"{first.kind} in {first.scenario} ({first.violation['type']})" if first else "-"
        name = os.path.basename(path)[:-4]
        print(f"{name:16} {len(buggy.sink.reports):4d} {len(twin.sink.reports):4d}  {how}")


if __name__ == "__main__":
    main()
