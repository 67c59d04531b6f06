"""Experiment configuration files and seed fan-out.

Configs are INI files with sections ``[graph]``, ``[problem]``,
``[compressor]``, ``[params]`` and ``[run]``::

    [graph]
    topology = ring        ; ring | complete | random
    n_agents = 25
    edge_prob = 0.5        ; random topology only
    ; seed = 7             ; optional, otherwise derived from master_seed

    [problem]
    problem = classification   ; classification | quadratic
    dim = 50
    samples_per_agent = 250
    reg_eps = 0.01

    [compressor]
    compressor = top_k     ; identity | rand_k | rand_k_unbiased | top_k
    k = 1

    [params]
    gamma = 0.1
    delta = 0.5
    rho = 0.9
    alpha = 0.9
    zhat_variant = fresh
    noise_std = 0.0

    [run]
    iterations = 10000
    log_every = 100
    threshold = 1e-6
    master_seed = 0

Seed fan-out: every random purpose gets its own ``SeedSequence`` derived
from ``master_seed`` by spawn key, ``(0,)`` graph, ``(1,)`` problem data,
``(2,)`` initial estimates, ``(3, i)`` agent ``i``'s compressor and
``(4, i)`` agent ``i``'s channel noise. An explicit ``seed`` in
``[graph]``/``[problem]`` or ``compressor_seed`` in ``[compressor]``
replaces the master seed for that purpose only, so changing the
compressor seed never changes the problem data.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .compression import CompressorSpec
from .engine import ALGORITHMS, RunParams

__all__ = [
    "GraphConfig",
    "ProblemConfig",
    "RunConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "seed_sequence",
]

PURPOSES = {"graph": 0, "data": 1, "init": 2, "compressor": 3, "noise": 4}


@dataclass(frozen=True)
class GraphConfig:
    topology: str = "ring"
    n_agents: int = 25
    edge_prob: float = 0.5
    seed: int | None = None


@dataclass(frozen=True)
class ProblemConfig:
    problem: str = "classification"
    dim: int = 50
    samples_per_agent: int = 250
    reg_eps: float = 0.01
    separation: float = 1.0
    flip: float = 0.02
    seed: int | None = None
    data_file: str | None = None

    def __post_init__(self) -> None:
        if self.problem not in ("classification", "quadratic"):
            raise ValueError(f"unknown problem {self.problem!r}")


@dataclass(frozen=True)
class RunConfig:
    iterations: int = 10000
    log_every: int = 100
    threshold: float = 1e-6
    stop_below: float | None = None
    master_seed: int = 0
    algorithm: str = "coral"
    output_dir: str | None = None
    label: str = "run"

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    graph: GraphConfig = field(default_factory=GraphConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    compressor: CompressorSpec = field(default_factory=lambda: CompressorSpec("top_k", 1))
    params: RunParams = field(default_factory=lambda: RunParams(iterations=10000))
    run: RunConfig = field(default_factory=RunConfig)

    def with_agents(self, N: int) -> ExperimentConfig:
        return replace(self, graph=replace(self.graph, n_agents=N))

    def with_noise(self, sigma: float) -> ExperimentConfig:
        return replace(self, params=replace(self.params, noise_std=sigma))

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, run=replace(self.run, master_seed=seed))

    def with_label(self, label: str) -> ExperimentConfig:
        return replace(self, run=replace(self.run, label=label))

    def to_dict(self) -> dict:
        return {
            "graph": asdict(self.graph),
            "problem": asdict(self.problem),
            "compressor": {"compressor": self.compressor.kind, "k": self.compressor.k, "compressor_seed": self.compressor.seed},
            "params": asdict(self.params),
            "run": asdict(self.run),
        }

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for section, values in self.to_dict().items():
            cp[section] = {k: str(v) for k, v in values.items() if v is not None}
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in cp[section].items())
            lines.append("")
        return "\n".join(lines)


def seed_sequence(cfg: ExperimentConfig, purpose: str, agent: int | None = None) -> np.random.SeedSequence:
    """Independent stream for one purpose (and optionally one agent)."""
    override = {
        "graph": cfg.graph.seed,
        "data": cfg.problem.seed,
        "compressor": cfg.compressor.seed,
    }.get(purpose)
    key = () if agent is None else (agent,)
    if override is not None:
        return np.random.SeedSequence(override, spawn_key=key)
    return np.random.SeedSequence(cfg.run.master_seed, spawn_key=(PURPOSES[purpose], *key))


def _convert(cls, section: configparser.SectionProxy | dict, rename: dict | None = None) -> dict:
    rename = rename or {}
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, raw in section.items():
        name = rename.get(key, key)
        if name not in types:
            raise ValueError(f"unknown key {key!r} for {cls.__name__}")
        t = str(types[name])
        text = str(raw).strip()
        if text.lower() in ("none", ""):
            out[name] = None
        elif t.startswith("int"):
            out[name] = int(text)
        elif t.startswith("float"):
            out[name] = float(text)
        else:
            out[name] = text
    return out


def parse_config(text: str, label: str = "run") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_string(text)
    unknown = set(cp.sections()) - {"graph", "problem", "compressor", "params", "run"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    get = lambda s: cp[s] if cp.has_section(s) else {}
    comp = {k: v for k, v in get("compressor").items()}
    comp_kw = {}
    for key, value in comp.items():
        if key == "compressor":
            comp_kw["kind"] = value.strip()
        elif key == "k":
            comp_kw["k"] = int(value)
        elif key == "compressor_seed":
            comp_kw["seed"] = None if value.strip().lower() == "none" else int(value)
        else:
            raise ValueError(f"unknown key {key!r} in [compressor]")
    run_kw = _convert(RunConfig, get("run"))
    run_kw.setdefault("label", label)
    params_kw = _convert(RunParams, get("params"))
    params_kw.setdefault("iterations", run_kw.get("iterations", RunConfig.iterations))
    run_kw.setdefault("iterations", params_kw["iterations"])
    if params_kw["iterations"] != run_kw["iterations"]:
        raise ValueError("iterations given twice with different values")
    return ExperimentConfig(
        graph=GraphConfig(**_convert(GraphConfig, get("graph"))),
        problem=ProblemConfig(**_convert(ProblemConfig, get("problem"))),
        compressor=CompressorSpec(**{"kind": "top_k", **comp_kw}),
        params=RunParams(**params_kw),
        run=RunConfig(**run_kw),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), label=path.stem)
