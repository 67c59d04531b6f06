"""Plateau gradient norm under additive Gaussian channel noise.

    python scripts/noise_study.py --sigmas 0,0.01,0.0316 --seeds 0,1,2 --out runs/noise
"""

import argparse
from pathlib import Path

from coral.bench import noise_study
from coral.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=ROOT / "configs" / "noise.ini")
    ap.add_argument("--sigmas", default="0,0.01,0.0316")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/noise")
    args = ap.parse_args()

    sigmas = [float(s) for s in args.sigmas.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    result = noise_study(load_config(args.config), sigmas, seeds, args.jobs, args.out)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    result.to_csv(Path(args.out) / "noise.csv")
    for row in result.rows:
        per_seed = ", ".join(f"{p:.3g}" for p in row.extra["plateaus"])
        print(f"{row.label:>14}: mean plateau {row.plateau:.4g}  (seeds: {per_seed})  diverged={row.diverged}")


if __name__ == "__main__":
    main()
