"""Summarize a rates run: median errors per sample size and fitted slopes.

Usage::

    python scripts/rate_table.py runs/rates
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

if __name__ == "__main__":
    run = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/rates")
    report = json.loads((run / "report.json").read_text())
    print(f"{'n':>8} {'sigma2 median':>14} {'drift median':>13} {'failures':>9}")
    for n, s, b, f in zip(report["n_ladder"], report["median_sigma2_error"],
                          report["median_drift_error"], report["failures"]):
        print(f"{n:>8} {s:>14.5g} {b:>13.5g} {f:>9}")
    for key in ("sigma2", "drift"):
        slope = report[f"slope_{key}"]
        target = report[f"target_slope_{key}"]
        shown = "undefined" if slope is None else f"{slope:.4f}"
        print(f"slope {key}: {shown} (target {target:.4f})")
