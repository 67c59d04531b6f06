"""Synchronous multi-agent execution of ADMM-tracking gradient and its
compressed, error-feedback variant.

Two code paths compute the same round:

* :func:`step_round` is vectorized over directed edges (rows of ``z``, ``m``
  and ``mhat`` follow the graph's canonical edge order);
* :func:`step_round_agents` walks agents and edges one at a time through the
  per-agent operations below and serves as a readable reference.

``mhat[e]`` for ``e = (i, j)`` is agent ``i``'s local replica of ``m_ji``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .compression import CompressedMessage, Compressor, message_bits
from .graph import Graph
from .problem import ProblemInstance

__all__ = [
    "VARIANTS",
    "NOISE_MODES",
    "ALGORITHMS",
    "RunParams",
    "EdgeState",
    "AgentState",
    "NetworkState",
    "RoundTrace",
    "RunResult",
    "DivergenceError",
    "local_averaging_step",
    "solution_update",
    "nominal_message",
    "compressed_outgoing",
    "apply_incoming",
    "step_round",
    "step_round_agents",
    "round_metrics",
    "compress_edges",
    "round_bits",
    "run",
]

VARIANTS = ("fresh", "delayed")
NOISE_MODES = ("values", "dense")
ALGORITHMS = ("coral", "admm_tracking")
DIVERGENCE_BOUND = 1e12


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, detail: str, partial: RunResult | None = None):
        super().__init__(f"divergence at iteration {iteration}: {detail}")
        self.iteration = iteration
        self.partial = partial


@dataclass(frozen=True)
class RunParams:
    gamma: float = 0.1
    delta: float = 0.5
    rho: float = 0.9
    alpha: float = 0.9
    iterations: int = 1000
    zhat_variant: str = "fresh"
    noise_std: float = 0.0
    noise_mode: str = "dense"

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.delta <= 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.rho <= 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.zhat_variant not in VARIANTS:
            raise ValueError(f"zhat_variant must be one of {VARIANTS}")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be nonnegative")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")

    def check_delta(self, N: int, lipschitz: float) -> bool:
        """Warn when delta leaves the range ``(0, 2N / (L sqrt(N)))``."""
        bound = 2.0 * N / (lipschitz * np.sqrt(N))
        if self.delta >= bound:
            warnings.warn(f"delta={self.delta} exceeds 2N/(L sqrt N)={bound:.4g}", RuntimeWarning, stacklevel=2)
            return False
        return True


@dataclass
class EdgeState:
    z: np.ndarray
    m: np.ndarray
    mhat: np.ndarray

    def copy(self) -> EdgeState:
        return EdgeState(self.z.copy(), self.m.copy(), self.mhat.copy())


@dataclass
class AgentState:
    x: np.ndarray
    edges: dict[int, EdgeState]


@dataclass
class NetworkState:
    """Stacked state: ``x`` is ``(N, n)``; ``z``, ``m``, ``mhat`` are ``(D, 2n)``."""

    x: np.ndarray
    z: np.ndarray
    m: np.ndarray
    mhat: np.ndarray

    @classmethod
    def initial(cls, graph: Graph, n: int, rng=None, x0=None) -> NetworkState:
        """``x ~ N(0, I)`` (or ``x0``) with zero ADMM and integrator variables."""
        if x0 is None:
            x0 = np.random.default_rng(rng).standard_normal((graph.N, n))
        x0 = np.array(x0, dtype=float).reshape(graph.N, n)
        zeros = np.zeros((graph.n_directed, 2 * n))
        return cls(x0, zeros.copy(), zeros.copy(), zeros.copy())

    def copy(self) -> NetworkState:
        return NetworkState(self.x.copy(), self.z.copy(), self.m.copy(), self.mhat.copy())

    def agent(self, graph: Graph, i: int) -> AgentState:
        edges = {}
        for e in range(*graph.agent_slice(i).indices(graph.n_directed)):
            edges[graph.edges[e][1]] = EdgeState(self.z[e].copy(), self.m[e].copy(), self.mhat[e].copy())
        return AgentState(self.x[i].copy(), edges)

    def agents(self, graph: Graph) -> list[AgentState]:
        return [self.agent(graph, i) for i in range(graph.N)]

    @classmethod
    def from_agents(cls, graph: Graph, agents: list[AgentState]) -> NetworkState:
        x = np.stack([a.x for a in agents])
        z = np.stack([agents[i].edges[j].z for i, j in graph.edges])
        m = np.stack([agents[i].edges[j].m for i, j in graph.edges])
        mhat = np.stack([agents[i].edges[j].mhat for i, j in graph.edges])
        return cls(x, z, m, mhat)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(a))) if a.size else 0.0 for a in (self.x, self.z, self.m, self.mhat))


@dataclass(frozen=True)
class RoundTrace:
    t: int
    grad_norm: float
    consensus_err: float
    objective: float
    bits: int


@dataclass
class RunResult:
    rows: list[RoundTrace]
    grad_norms: np.ndarray
    state: NetworkState
    threshold: float | None = None
    iterations_to_threshold: int | None = None
    total_bits: int = 0
    diverged: bool = False
    error: str | None = None
    bits_per_round: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def final(self) -> RoundTrace:
        return self.rows[-1]

    def plateau(self, fraction: float = 0.1) -> float:
        """Median gradient norm over the trailing ``fraction`` of iterations."""
        g = self.grad_norms
        tail = max(1, int(np.ceil(fraction * (g.size - 1)))) if g.size > 1 else 1
        return float(np.median(g[-tail:]))


# ---------------------------------------------------------------- per-agent ops


def local_averaging_step(x_i, grad_i, z_i, rho: float, d_i: int) -> tuple[np.ndarray, np.ndarray]:
    """ADMM closed-form local update ``[y; s] = ([x; g] + sum_j z_ij) / (1 + rho d_i)``.

    ``z_i`` is a ``(d_i, 2n)`` array (or list) of the agent's edge variables.
    """
    x_i = np.asarray(x_i, dtype=float)
    n = x_i.size
    acc = np.concatenate([x_i, np.asarray(grad_i, dtype=float)])
    for z in z_i:
        acc = acc + z
    ys = acc / (1.0 + rho * d_i)
    return ys[:n], ys[n:]


def solution_update(x_i, y_i, s_i, gamma: float, delta: float) -> np.ndarray:
    return x_i + gamma * (y_i - x_i) - gamma * delta * s_i


def nominal_message(z_ij, y_i, s_i, rho: float) -> np.ndarray:
    """Uncompressed message ``-z_ij + 2 rho [y_i; s_i]`` from ``i`` to ``j``."""
    return -z_ij + 2.0 * rho * np.concatenate([y_i, s_i])


def compressed_outgoing(edge: EdgeState, y_i, s_i, rho: float, compressor: Compressor) -> CompressedMessage:
    """Compress the gap between the nominal message and the integrator ``m_ij``."""
    return compressor.compress(nominal_message(edge.z, y_i, s_i, rho) - edge.m)


def apply_incoming(
    edge: EdgeState,
    c_ji: CompressedMessage | np.ndarray,
    alpha: float,
    variant: str = "fresh",
    sent: CompressedMessage | np.ndarray | None = None,
) -> EdgeState:
    """Integrate a received message into ``mhat_ji`` and relax ``z_ij`` toward it.

    ``sent`` (this agent's own outgoing message on the same edge), when given,
    is accumulated into ``m_ij``.
    """
    received = c_ji.densify() if isinstance(c_ji, CompressedMessage) else np.asarray(c_ji, dtype=float)
    if received.shape != edge.mhat.shape:
        raise ValueError(f"message dimension {received.shape} does not match edge state {edge.mhat.shape}")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    mhat_next = edge.mhat + received
    target = mhat_next if variant == "fresh" else edge.mhat
    z_next = (1.0 - alpha) * edge.z + alpha * target
    m_next = edge.m
    if sent is not None:
        m_next = edge.m + (sent.densify() if isinstance(sent, CompressedMessage) else np.asarray(sent, dtype=float))
    return EdgeState(z_next, m_next.copy(), mhat_next)


# ---------------------------------------------------------------- rounds


def _noise_rows(noise_rngs, graph: Graph, width: int, sigma: float) -> np.ndarray:
    # one stream per sending agent, consumed in canonical edge order
    return np.concatenate([
        sigma * noise_rngs[i].standard_normal((graph.degrees[i], width)) for i in range(graph.N)
    ])


def compress_edges(compressors: list[Compressor], graph: Graph, R: np.ndarray, return_support: bool = False):
    """Apply agent ``i``'s compressor to each of its outgoing rows of ``R``."""
    first = compressors[0].spec
    if first.deterministic and all(c.spec == first for c in compressors):
        return compressors[0].compress_rows(R, return_support)
    out = np.empty_like(R)
    support = np.empty(R.shape, dtype=bool)
    for i, comp in enumerate(compressors):
        sl = graph.agent_slice(i)
        if return_support:
            out[sl], support[sl] = comp.compress_rows(R[sl], True)
        else:
            out[sl] = comp.compress_rows(R[sl])
    return (out, support) if return_support else out


def round_bits(compressors: list[Compressor] | None, graph: Graph, n: int) -> int:
    if compressors is None:
        return graph.n_directed * message_bits(2 * n, 2 * n, indexed=False)
    return int(sum(compressors[i].message_bits(2 * n) * graph.degrees[i] for i in range(graph.N)))


def step_round(
    state: NetworkState,
    graph: Graph,
    problem: ProblemInstance,
    params: RunParams,
    compressors: list[Compressor] | None,
    noise_rngs=None,
    algorithm: str = "coral",
) -> NetworkState:
    """One synchronous round; every agent reads only pre-round values.

    ``compressors=None`` or ``algorithm="admm_tracking"`` runs the
    uncompressed method, in which ``m`` and ``mhat`` are left untouched.
    """
    n = state.x.shape[1]
    rho, alpha = params.rho, params.alpha
    grads = problem.stacked_grad(state.x)
    zsum = np.add.reduceat(state.z, graph.offsets[:-1], axis=0)
    ys = (np.hstack([state.x, grads]) + zsum) / (1.0 + rho * graph.degrees)[:, None]
    y, s = ys[:, :n], ys[:, n:]
    x_next = solution_update(state.x, y, s, params.gamma, params.delta)
    nominal = -state.z + 2.0 * rho * ys[graph.source]
    noisy = params.noise_std > 0.0

    if algorithm == "admm_tracking" or compressors is None:
        received = nominal[graph.reverse]
        if noisy:
            received = received + _noise_rows(noise_rngs, graph, 2 * n, params.noise_std)[graph.reverse]
        z_next = (1.0 - alpha) * state.z + alpha * received
        return NetworkState(x_next, z_next, state.m, state.mhat)

    if noisy:
        sent, support = compress_edges(compressors, graph, nominal - state.m, return_support=True)
        noise = _noise_rows(noise_rngs, graph, 2 * n, params.noise_std)
        if params.noise_mode == "values":
            noise = noise * support
        received = (sent + noise)[graph.reverse]
    else:
        sent = compress_edges(compressors, graph, nominal - state.m)
        received = sent[graph.reverse]
    m_next = state.m + sent
    mhat_next = state.mhat + received
    target = mhat_next if params.zhat_variant == "fresh" else state.mhat
    z_next = (1.0 - alpha) * state.z + alpha * target
    return NetworkState(x_next, z_next, m_next, mhat_next)


def step_round_agents(
    agents: list[AgentState],
    graph: Graph,
    problem: ProblemInstance,
    params: RunParams,
    compressors: list[Compressor],
    noise_rngs=None,
) -> list[AgentState]:
    """Reference round built from the per-agent operations (compressed path)."""
    rho = params.rho
    # phase 1: local computation and outgoing messages from the pre-round snapshot
    outgoing: dict[tuple[int, int], CompressedMessage] = {}
    new_x = []
    for i, agent in enumerate(agents):
        nbrs = graph.neighbors[i]
        grad_i = problem.local_grad(i, agent.x)
        y, s = local_averaging_step(agent.x, grad_i, [agent.edges[j].z for j in nbrs], rho, len(nbrs))
        new_x.append(solution_update(agent.x, y, s, params.gamma, params.delta))
        for j in nbrs:
            outgoing[(i, j)] = compressed_outgoing(agent.edges[j], y, s, rho, compressors[i])
    # phase 2: channel
    delivered: dict[tuple[int, int], np.ndarray] = {}
    for i, agent in enumerate(agents):
        for j in graph.neighbors[i]:
            msg = outgoing[(i, j)]
            dense = msg.densify()
            if params.noise_std > 0.0:
                eta = params.noise_std * noise_rngs[i].standard_normal(dense.size)
                if params.noise_mode == "values":
                    dense[msg.indices] += eta[msg.indices]
                else:
                    dense += eta
            delivered[(i, j)] = dense
    # phase 3: barrier, then apply incoming
    result = []
    for i, agent in enumerate(agents):
        edges = {
            j: apply_incoming(agent.edges[j], delivered[(j, i)], params.alpha, params.zhat_variant, outgoing[(i, j)])
            for j in graph.neighbors[i]
        }
        result.append(AgentState(new_x[i], edges))
    return result


def round_metrics(problem: ProblemInstance, x: np.ndarray, t: int, bits: int, objective: bool = True) -> RoundTrace:
    xbar = x.mean(axis=0)
    return RoundTrace(
        t=t,
        grad_norm=float(np.linalg.norm(problem.grad(xbar))),
        consensus_err=float(np.linalg.norm(x - xbar)),
        objective=problem.cost(xbar) if objective else float("nan"),
        bits=int(bits),
    )


def run(
    graph: Graph,
    problem: ProblemInstance,
    params: RunParams,
    compressors: list[Compressor] | None,
    state: NetworkState | None = None,
    noise_rngs=None,
    log_every: int = 1,
    threshold: float | None = None,
    stop_below: float | None = None,
    algorithm: str = "coral",
    init_rng=None,
) -> RunResult:
    """Run ``params.iterations`` rounds and record periodic metrics.

    Trace rows are logged at ``t = 0, log_every, 2 log_every, ...`` and at the
    last executed round. The gradient norm at the mean is evaluated every
    round so that iterations-to-threshold is exact. ``stop_below`` ends the
    run early once the gradient norm drops below it.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    if log_every < 1:
        raise ValueError("log_every must be >= 1")
    if graph.N != problem.N:
        raise ValueError(f"graph has {graph.N} agents but problem has {problem.N}")
    if params.noise_std > 0.0 and noise_rngs is None:
        raise ValueError("noise_std > 0 requires per-agent noise streams")
    if state is None:
        state = NetworkState.initial(graph, problem.n, init_rng)
    params.check_delta(graph.N, problem.lipschitz)

    bits_per_round = round_bits(None if algorithm == "admm_tracking" else compressors, graph, problem.n)
    T = params.iterations
    rows = [round_metrics(problem, state.x, 0, 0)]
    grad_norms = np.empty(T + 1)
    grad_norms[0] = rows[0].grad_norm
    hit = 0 if threshold is not None and grad_norms[0] < threshold else None
    last = 0

    def result(diverged=False, error=None) -> RunResult:
        return RunResult(
            rows=rows,
            grad_norms=grad_norms[: last + 1].copy(),
            state=state,
            threshold=threshold,
            iterations_to_threshold=hit,
            total_bits=bits_per_round * last,
            diverged=diverged,
            error=error,
            bits_per_round=bits_per_round,
        )

    stopped = stop_below is not None and grad_norms[0] < stop_below
    for t in range(1, T + 1):
        if stopped:
            break
        state = step_round(state, graph, problem, params, compressors, noise_rngs, algorithm)
        big = state.max_abs()
        if not np.isfinite(big) or big > DIVERGENCE_BOUND:
            err = DivergenceError(t, f"max |state| = {big:.3g}")
            err.partial = result(True, str(err))
            raise err
        last = t
        xbar = state.x.mean(axis=0)
        g = float(np.linalg.norm(problem.grad(xbar)))
        grad_norms[t] = g
        if hit is None and threshold is not None and g < threshold:
            hit = t
        stopped = stop_below is not None and g < stop_below
        if t % log_every == 0 or t == T or stopped:
            rows.append(replace(round_metrics(problem, state.x, t, bits_per_round * t), grad_norm=g))
    return result()
