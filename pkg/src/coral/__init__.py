"""Compressed consensus-ADMM gradient tracking with error feedback.

Modules: :mod:`~coral.graph` (topologies), :mod:`~coral.problem` (local
costs), :mod:`~coral.compression` (sparsifiers), :mod:`~coral.engine`
(multi-agent simulation), :mod:`~coral.analysis` (aggregate-model oracles
and Lyapunov monitors), :mod:`~coral.bench` and :mod:`~coral.cli`
(experiments).
"""

from .compression import Compressor, CompressorSpec
from .config import ExperimentConfig, load_config, parse_config
from .engine import NetworkState, RunParams, run, step_round
from .graph import Graph, complete, random_connected, ring
from .problem import ClassificationProblem, QuadraticProblem, generate_classification, quadratic_problem

__version__ = "0.1.0"

__all__ = [
    "ClassificationProblem",
    "Compressor",
    "CompressorSpec",
    "ExperimentConfig",
    "Graph",
    "NetworkState",
    "QuadraticProblem",
    "RunParams",
    "complete",
    "generate_classification",
    "load_config",
    "parse_config",
    "quadratic_problem",
    "random_connected",
    "ring",
    "run",
    "step_round",
]
