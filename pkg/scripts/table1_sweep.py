"""Iterations to reach a gradient-norm threshold on rings of growing size.

    python scripts/table1_sweep.py --sizes 10,25,50 --out runs/table1
"""

import argparse
from dataclasses import replace
from pathlib import Path

from coral.bench import sweep_network_size
from coral.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=ROOT / "configs" / "classification.ini")
    ap.add_argument("--sizes", default="10,25,50")
    ap.add_argument("--threshold", type=float, default=1e-6)
    ap.add_argument("--iterations", type=int, default=30000)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/table1")
    args = ap.parse_args()

    base = load_config(args.config)
    base = replace(base, params=replace(base.params, iterations=args.iterations),
                   run=replace(base.run, iterations=args.iterations, stop_below=args.threshold, log_every=100))
    sizes = [int(s) for s in args.sizes.split(",")]
    result = sweep_network_size(base, sizes, args.threshold, args.jobs, args.out)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    result.to_csv(Path(args.out) / "table1.csv")
    print(f"{'N':>4}  iterations to {args.threshold:g}")
    for N, row in zip(sizes, result.rows):
        print(f"{N:>4}  {row.iterations_to_threshold if row.iterations_to_threshold is not None else 'not reached'}")


if __name__ == "__main__":
    main()
