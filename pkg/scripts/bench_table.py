"""Print the benchmark summary of one or more output directories as a markdown table.

    python scripts/bench_table.py run [run2 ...]
"""

import csv
import sys
from pathlib import Path


def main(dirs) -> int:
    print("| run | mode | episodes | SR (%) | T mean (s) | replans/episode | median replan (ms) |")
    print("|---|---|---|---|---|---|---|")
    for d in dirs:
        path = Path(d) / "bench" / "summary.csv"
        if not path.exists():
            print(f"{path}: missing (run `dualarm bench --out {d}` first)", file=sys.stderr)
            return 1
        with path.open() as fh:
            for row in csv.DictReader(fh):
                print(f"| {d} | {row['mode']} | {row['episodes']} | {float(row['SR']):.1f} | "
                      f"{float(row['T_mean']):.2f} | {float(row['replans_mean']):.2f} | "
                      f"{float(row['median_replan_ms']):.1f} |")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:] or ["run"]))
