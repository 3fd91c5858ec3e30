"""Run every experiment with default parameters and print one line each.

    python scripts/run_all.py [OUT_DIR]

CSV and JSON outputs go to OUT_DIR (default ./results). Exit status is the
largest exit code of the individual runs.
"""

import json
import sys
import time
from pathlib import Path

from roughcalc.cli import main
from roughcalc.experiments import EXPERIMENTS


def run_all(out: Path) -> int:
    worst = 0
    for name in EXPERIMENTS:
        t0 = time.perf_counter()
        code = main([name, "--out", str(out)])
        dt = time.perf_counter() - t0
        summary = json.loads((out / f"{name}.json").read_text())
        print(f"  -> {name:15s} exit={code} pass={summary['pass']} {dt:6.2f}s")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results")
    sys.exit(run_all(out))
