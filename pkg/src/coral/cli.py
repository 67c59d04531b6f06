"""Command line entry point: ``coral {run,sweep-n,noise,verify,plot-data}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .bench import (
    build_compressors,
    build_graph,
    build_problem,
    emit_plot_data,
    noise_study,
    output_root,
    run_experiment,
    sweep_network_size,
)
from .config import ExperimentConfig, load_config, seed_sequence
from .engine import NetworkState, compress_edges, step_round


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _print_sweep(result, out: Path | None) -> None:
    for r in result.rows:
        hit = "not reached" if r.iterations_to_threshold is None else r.iterations_to_threshold
        flag = " DIVERGED" if r.diverged else ""
        print(f"{r.label}: iterations_to_threshold={hit} plateau={r.plateau:.4g} bits={r.total_bits}{flag}")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        result.to_csv(out / "sweep.csv")
        print(f"wrote {out / 'sweep.csv'}")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.iterations is not None:
        cfg = replace(cfg, params=replace(cfg.params, iterations=args.iterations),
                      run=replace(cfg.run, iterations=args.iterations))
    out = run_experiment(cfg, output_root(args.out, cfg))
    s = out.summary
    print(f"trace: {out.trace_path}")
    print(f"summary: {out.summary_path}")
    print(f"iterations_to_threshold={s['iterations_to_threshold']} final_grad_norm={s['final']['grad_norm']}")
    if not out.ok:
        print(f"error: {s['error']}", file=sys.stderr)
        return 2
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    root = output_root(args.out, cfg)
    result = sweep_network_size(cfg, args.sizes, args.threshold, args.jobs, root)
    _print_sweep(result, root / f"{cfg.run.label}_sweep")
    return 2 if any(r.diverged for r in result.rows) else 0


def cmd_noise(args) -> int:
    cfg = load_config(args.config)
    root = output_root(args.out, cfg)
    result = noise_study(cfg, args.sigmas, args.seeds, args.jobs, root)
    _print_sweep(result, root / f"{cfg.run.label}_noise")
    return 2 if any(r.diverged for r in result.rows) else 0


def verify_report(cfg: ExperimentConfig, dim: int | None = None, rounds: int = 20, samples: int = 20) -> dict:
    """Residuals of the aggregate model on the config's graph at decision dimension ``dim``."""
    dim = cfg.problem.dim if dim is None else dim
    cfg = replace(cfg, problem=replace(cfg.problem, dim=dim, data_file=None))
    graph = build_graph(cfg)
    problem = build_problem(cfg)
    params = replace(cfg.params, zhat_variant="delayed", noise_std=0.0)
    model = analysis.build_aggregate(graph, dim, params.rho)
    basis = analysis.compute_basis(model)
    rng = np.random.default_rng(seed_sequence(cfg, "init"))

    eq = [analysis.equilibrium_residuals(basis, model, rng.standard_normal(graph.N * dim), problem) for _ in range(samples)]

    # engine and aggregate model driven by the same compressor draws
    state = NetworkState.initial(graph, dim, rng)
    state.z[:] = rng.standard_normal(state.z.shape)
    agg = analysis.from_network_state(state, graph)
    engine_comp = build_compressors(cfg, graph.N)
    shadow = build_compressors(cfg, graph.N)

    def shared(vec):
        return compress_edges(shadow, graph, vec.reshape(graph.n_directed, 2 * dim)).ravel()

    worst = 0.0
    for _ in range(rounds):
        state = step_round(state, graph, problem, params, engine_comp)
        agg = analysis.aggregate_step(model, agg, params, problem, shared, "delayed")
        ref = analysis.from_network_state(state, graph)
        worst = max(worst, *(float(np.max(np.abs(a - b))) for a, b in
                             ((ref.x, agg.x), (ref.z, agg.z), (ref.m, agg.m), (ref.mhat, agg.mhat))))

    return {
        "n_agents": graph.N,
        "dim": dim,
        "rho": params.rho,
        "alpha": params.alpha,
        "b": basis.b,
        "p": basis.p,
        "structural_residuals": analysis.structural_residuals(basis, model),
        "equilibrium_residuals": {"x": max(r[0] for r in eq), "grad": max(r[1] for r in eq)},
        "spectral_radius_R": basis.spectral_radius,
        "relaxed_spectral_radius": basis.relaxed_spectral_radius(params.alpha),
        "min_singular_I_minus_R": basis.min_singular_gap(),
        "oracle_max_error": worst,
        "oracle_rounds": rounds,
    }


def cmd_verify(args) -> int:
    report = verify_report(load_config(args.config), args.dim, args.rounds)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    ok = (
        max(report["structural_residuals"].values()) < args.tol
        and max(report["equilibrium_residuals"].values()) < args.tol
        and report["oracle_max_error"] < 1e-12
    )
    return 0 if ok else 1


def cmd_plot_data(args) -> int:
    traces = []
    for path in args.traces:
        p = Path(path)
        label = p.parent.name if p.name == "trace.csv" else p.stem
        traces.append((label, p))
    n = emit_plot_data(traces, args.output)
    print(f"wrote {n} rows to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coral", description="Compressed ADMM-tracking simulator and analysis tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="INI experiment config")
        p.add_argument("--out", help="output root (default: config, $CORAL_OUTPUT_ROOT, then ./runs)")

    p = sub.add_parser("run", help="run one experiment")
    common(p)
    p.add_argument("--iterations", type=int, help="override the iteration budget")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-n", help="iterations-to-threshold over ring sizes")
    common(p)
    p.add_argument("--sizes", type=_int_list, default=[10, 25, 50])
    p.add_argument("--threshold", type=float)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("noise", help="plateau gradient norm over channel noise levels")
    common(p)
    p.add_argument("--sigmas", type=_float_list, default=[0.0, 0.01, 0.0316])
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("verify", help="JSON residual report of the aggregate model")
    p.add_argument("config")
    p.add_argument("--dim", type=int, help="decision dimension (default: the config's)")
    p.add_argument("--rounds", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot-data", help="merge traces into one long-format CSV")
    p.add_argument("traces", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
