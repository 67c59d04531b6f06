"""Experiment runner: build everything from a config, run, and write outputs.

Each run writes two files into ``<output_root>/<label>/``:

``trace.csv``
    columns ``t, grad_norm, consensus_err, objective, bits``; floats are
    written with ``repr`` so that reruns are byte-identical.
``summary.json``
    ``schema`` (currently 1), iterations to threshold (``null`` if not
    reached), final metrics, minimum and plateau gradient norm, total bits,
    divergence flag and the resolved config.
"""

from __future__ import annotations

import csv
import json
import os
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .compression import Compressor
from .config import ExperimentConfig, seed_sequence
from .engine import DivergenceError, NetworkState, RoundTrace, RunResult, run
from .graph import Graph, from_spec
from .problem import ProblemInstance, generate_classification, load_dataset_csv, quadratic_problem

__all__ = [
    "SCHEMA_VERSION",
    "TRACE_COLUMNS",
    "ExperimentOutput",
    "SweepRow",
    "SweepResult",
    "build_graph",
    "build_problem",
    "build_compressors",
    "build_noise_rngs",
    "simulate",
    "run_experiment",
    "sweep_network_size",
    "noise_study",
    "emit_plot_data",
    "read_trace_csv",
    "write_trace_csv",
    "output_root",
]

SCHEMA_VERSION = 1
TRACE_COLUMNS = ("t", "grad_norm", "consensus_err", "objective", "bits")
PLOT_METRICS = ("grad_norm", "consensus_err", "objective", "bits")
ENV_OUTPUT_ROOT = "CORAL_OUTPUT_ROOT"


def output_root(cli_value: str | None = None, cfg: ExperimentConfig | None = None) -> Path:
    """Command line, then config, then ``$CORAL_OUTPUT_ROOT``, then ``runs``."""
    for candidate in (cli_value, cfg.run.output_dir if cfg else None, os.environ.get(ENV_OUTPUT_ROOT)):
        if candidate:
            return Path(candidate)
    return Path("runs")


# ---------------------------------------------------------------- builders


def build_graph(cfg: ExperimentConfig) -> Graph:
    g = cfg.graph
    return from_spec(g.topology, g.n_agents, g.edge_prob, seed_sequence(cfg, "graph"))


def build_problem(cfg: ExperimentConfig) -> ProblemInstance:
    p, N = cfg.problem, cfg.graph.n_agents
    if p.data_file:
        prob = load_dataset_csv(p.data_file, reg_eps=p.reg_eps)
        if prob.N != N:
            raise ValueError(f"dataset has {prob.N} agents, graph has {N}")
        return prob
    ss = seed_sequence(cfg, "data")
    if p.problem == "quadratic":
        return quadratic_problem(np.random.default_rng(ss).standard_normal((N, p.dim)))
    return generate_classification(N, p.dim, p.samples_per_agent, p.reg_eps, ss, p.separation, p.flip)


def build_compressors(cfg: ExperimentConfig, N: int) -> list[Compressor]:
    return [Compressor(cfg.compressor, np.random.default_rng(seed_sequence(cfg, "compressor", i))) for i in range(N)]


def build_noise_rngs(cfg: ExperimentConfig, N: int) -> list[np.random.Generator]:
    return [np.random.default_rng(seed_sequence(cfg, "noise", i)) for i in range(N)]


def initial_state(cfg: ExperimentConfig, graph: Graph, n: int) -> NetworkState:
    return NetworkState.initial(graph, n, np.random.default_rng(seed_sequence(cfg, "init")))


def simulate(cfg: ExperimentConfig, graph: Graph | None = None, problem: ProblemInstance | None = None) -> RunResult:
    """Run one configured experiment; divergence yields a partial, flagged result."""
    graph = build_graph(cfg) if graph is None else graph
    problem = build_problem(cfg) if problem is None else problem
    try:
        return run(
            graph,
            problem,
            cfg.params,
            build_compressors(cfg, graph.N),
            state=initial_state(cfg, graph, problem.n),
            noise_rngs=build_noise_rngs(cfg, graph.N),
            log_every=cfg.run.log_every,
            threshold=cfg.run.threshold,
            stop_below=cfg.run.stop_below,
            algorithm=cfg.run.algorithm,
        )
    except DivergenceError as exc:
        return exc.partial


# ---------------------------------------------------------------- files


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trace_csv(rows: Iterable[RoundTrace], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in rows:
            w.writerow([r.t, _fmt(r.grad_norm), _fmt(r.consensus_err), _fmt(r.objective), r.bits])


def read_trace_csv(path: str | Path) -> list[RoundTrace]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: expected columns {TRACE_COLUMNS}, got {reader.fieldnames}")
        return [
            RoundTrace(int(r["t"]), float(r["grad_norm"]), float(r["consensus_err"]), float(r["objective"]), int(r["bits"]))
            for r in reader
        ]


def _json_float(v: float) -> float | str:
    return float(v) if np.isfinite(v) else str(v)


def summarize(cfg: ExperimentConfig, result: RunResult) -> dict:
    final = result.final
    return {
        "schema": SCHEMA_VERSION,
        "label": cfg.run.label,
        "threshold": result.threshold,
        "iterations_to_threshold": result.iterations_to_threshold,
        "iterations_run": int(result.grad_norms.size - 1),
        "final": {k: _json_float(v) for k, v in asdict(final).items()},
        "min_grad_norm": _json_float(float(np.min([r.grad_norm for r in result.rows]))),
        "plateau": _json_float(result.plateau()),
        "total_bits": int(result.total_bits),
        "bits_per_round": int(result.bits_per_round),
        "diverged": bool(result.diverged),
        "error": result.error,
        "config": cfg.to_dict(),
    }


@dataclass(frozen=True)
class ExperimentOutput:
    result: RunResult
    summary: dict
    trace_path: Path | None
    summary_path: Path | None

    @property
    def ok(self) -> bool:
        return not self.result.diverged


def run_experiment(cfg: ExperimentConfig, out_root: str | Path | None = None, write: bool = True) -> ExperimentOutput:
    """Simulate ``cfg`` and write ``trace.csv`` and ``summary.json``.

    On divergence the trace up to the failing round is still written and the
    summary is flagged; callers decide the exit status from ``ok``.
    """
    result = simulate(cfg)
    summary = summarize(cfg, result)
    if not write:
        return ExperimentOutput(result, summary, None, None)
    out_dir = output_root(None if out_root is None else str(out_root), cfg) / cfg.run.label
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path, summary_path = out_dir / "trace.csv", out_dir / "summary.json"
    write_trace_csv(result.rows, trace_path)
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return ExperimentOutput(result, summary, trace_path, summary_path)


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepRow:
    label: str
    iterations_to_threshold: int | None
    final: RoundTrace
    total_bits: int
    plateau: float
    diverged: bool = False
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SweepResult:
    threshold: float
    rows: tuple[SweepRow, ...]

    def __post_init__(self) -> None:
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        labels = [r.label for r in self.rows]
        if len(set(labels)) != len(labels):
            raise ValueError("sweep labels must be unique")

    def __getitem__(self, label: str) -> SweepRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.rows]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "iterations_to_threshold", "final_grad_norm", "final_consensus_err", "total_bits", "plateau", "diverged"])
            for r in self.rows:
                hit = "" if r.iterations_to_threshold is None else r.iterations_to_threshold
                w.writerow([r.label, hit, _fmt(r.final.grad_norm), _fmt(r.final.consensus_err), r.total_bits, _fmt(r.plateau), int(r.diverged)])


def _execute(args: tuple[ExperimentConfig, str | None]) -> ExperimentOutput:
    cfg, root = args
    return run_experiment(cfg, root, write=root is not None)


def _run_many(cfgs: Sequence[ExperimentConfig], out_root, jobs: int) -> list[ExperimentOutput]:
    root = None if out_root is None else str(out_root)
    work = [(c, root) for c in cfgs]
    if jobs <= 1 or len(cfgs) <= 1:
        return [_execute(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_execute, work))


def _row(label: str, out: ExperimentOutput, **extra) -> SweepRow:
    r = out.result
    return SweepRow(label, r.iterations_to_threshold, r.final, r.total_bits, r.plateau(), r.diverged, dict(extra))


def sweep_network_size(
    base: ExperimentConfig,
    sizes: Sequence[int],
    threshold: float | None = None,
    jobs: int = 1,
    out_root: str | Path | None = None,
) -> SweepResult:
    """One ring-topology run per network size; divergent runs are recorded, not raised."""
    if not sizes:
        raise ValueError("need at least one network size")
    if any(N < 3 for N in sizes):
        raise ValueError("ring sizes must be >= 3")
    threshold = base.run.threshold if threshold is None else threshold
    cfgs = []
    for N in sizes:
        cfg = base.with_agents(N).with_label(f"{base.run.label}_N{N}")
        cfgs.append(replace(cfg, graph=replace(cfg.graph, topology="ring"), run=replace(cfg.run, threshold=threshold)))
    outs = _run_many(cfgs, out_root, jobs)
    return SweepResult(threshold, tuple(_row(f"N={N}", o, n_agents=N) for N, o in zip(sizes, outs)))


def noise_study(
    cfg: ExperimentConfig,
    sigmas: Sequence[float],
    seeds: Sequence[int] = (0, 1, 2),
    jobs: int = 1,
    out_root: str | Path | None = None,
) -> SweepResult:
    """Plateau gradient norm per noise level, averaged over master seeds.

    The row's ``plateau`` is the mean over seeds of the median gradient norm
    over the last 10% of iterations; per-seed values are kept in ``extra``.
    """
    if not sigmas or not seeds:
        raise ValueError("need at least one sigma and one seed")
    if any(s < 0 for s in sigmas):
        raise ValueError("noise levels must be nonnegative")
    cfgs = [
        cfg.with_noise(s).with_seed(seed).with_label(f"{cfg.run.label}_sigma{s:g}_seed{seed}")
        for s in sigmas
        for seed in seeds
    ]
    outs = _run_many(cfgs, out_root, jobs)
    rows = []
    k = len(seeds)
    for idx, s in enumerate(sigmas):
        group = outs[idx * k : (idx + 1) * k]
        plateaus = [o.result.plateau() for o in group]
        hits = [o.result.iterations_to_threshold for o in group]
        first = group[0].result
        rows.append(
            SweepRow(
                label=f"sigma={s:g}",
                iterations_to_threshold=None if any(h is None for h in hits) else max(hits),
                final=first.final,
                total_bits=first.total_bits,
                plateau=float(np.mean(plateaus)),
                diverged=any(o.result.diverged for o in group),
                extra={
                    "sigma": s,
                    "seeds": list(seeds),
                    "plateaus": plateaus,
                    "max_abs_state": [o.result.state.max_abs() for o in group],
                },
            )
        )
    return SweepResult(cfg.run.threshold, tuple(rows))


# ---------------------------------------------------------------- plotting


def emit_plot_data(
    traces: Mapping[str, Sequence[RoundTrace] | str | Path] | Sequence[tuple[str, Sequence[RoundTrace] | str | Path]],
    path: str | Path,
) -> int:
    """Write traces in long format ``label, t, metric, value``; returns the row count.

    Each trace may be given as a list of rows or a path to a ``trace.csv``.
    """
    items = list(traces.items()) if isinstance(traces, Mapping) else list(traces)
    if not items:
        raise ValueError("need at least one trace")
    count = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "t", "metric", "value"])
        for label, trace in items:
            rows = read_trace_csv(trace) if isinstance(trace, (str, Path)) else trace
            for r in rows:
                for metric in PLOT_METRICS:
                    w.writerow([label, r.t, metric, _fmt(getattr(r, metric))])
                    count += 1
    return count
