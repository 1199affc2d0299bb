"""Run the bundled experiment configurations through the command line entry point.

Usage::

    python scripts/run_experiments.py                  # every config in scripts/configs
    python scripts/run_experiments.py rates posterior  # a subset, by file stem
    python scripts/run_experiments.py --out-root /tmp/runs --workers 4

Each run lands in ``<out-root>/<stem>`` with its own manifest and report.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from diffpost.cli import main

CONFIG_DIR = Path(__file__).parent / "configs"


def run(stems: list[str], out_root: Path, workers: int) -> int:
    worst = 0
    for stem in stems:
        path = CONFIG_DIR / f"{stem}.json"
        experiment = json.loads(path.read_text())["experiment"]
        argv = [experiment, "--config", str(path), "--out", str(out_root / stem),
                "--workers", str(workers)]
        print(f"== {stem}", flush=True)
        code = main(argv)
        worst = max(worst, code)
        report = out_root / stem / "report.json"
        if report.exists():
            print(report.read_text()[:2000])
    return worst


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("stems", nargs="*", help="config file stems (default: all)")
    parser.add_argument("--out-root", default="runs", type=Path)
    parser.add_argument("--workers", default=1, type=int)
    args = parser.parse_args()
    stems = args.stems or sorted(p.stem for p in CONFIG_DIR.glob("*.json"))
    sys.exit(run(stems, args.out_root, args.workers))
