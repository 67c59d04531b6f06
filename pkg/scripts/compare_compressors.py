"""Gradient norm and communicated bits for several compressors on one instance.

Writes one run directory per compressor plus ``plot.csv`` in long format
(label, t, metric, value).

    python scripts/compare_compressors.py --iterations 5000 --out runs/compressors
"""

import argparse
from dataclasses import replace
from pathlib import Path

from coral.bench import emit_plot_data, run_experiment
from coral.compression import CompressorSpec
from coral.config import load_config

ROOT = Path(__file__).resolve().parents[1]
CHOICES = {
    "identity": CompressorSpec("identity"),
    "rand1": CompressorSpec("rand_k", 1),
    "top1": CompressorSpec("top_k", 1),
    "top5": CompressorSpec("top_k", 5),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=ROOT / "configs" / "classification.ini")
    ap.add_argument("--compressors", default="identity,rand1,top1")
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--out", default="runs/compressors")
    args = ap.parse_args()

    base = load_config(args.config)
    base = replace(base, params=replace(base.params, iterations=args.iterations),
                   run=replace(base.run, iterations=args.iterations, stop_below=None))
    traces = []
    for name in args.compressors.split(","):
        cfg = replace(base, compressor=CHOICES[name]).with_label(name)
        out = run_experiment(cfg, args.out)
        s = out.summary
        print(f"{name:>9}: final grad_norm {s['final']['grad_norm']:.3e}, iterations to threshold "
              f"{s['iterations_to_threshold']}, bits {s['total_bits']:.3e}")
        traces.append((name, out.trace_path))
    emit_plot_data(traces, Path(args.out) / "plot.csv")


if __name__ == "__main__":
    main()
