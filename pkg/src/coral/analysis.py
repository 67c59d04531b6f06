"""Dense-matrix model of the compressed ADMM-tracking iteration.

Builds the stacked operators of the aggregate iteration, the orthonormal
split ``(B, M)`` of the edge-variable space, the fast-state equilibrium map,
the boundary-layer and reduced dynamics, and the Lyapunov candidates used to
monitor them. Everything here materializes ``2 n D x 2 n D`` matrices, so it
is meant for small instances and as an oracle for :mod:`coral.engine`.

Stacked conventions: ``x`` is ``col(x_i)`` in ``R^{Nn}``; edge vectors are
``col(z_ij)`` in ``R^{2nD}`` in the graph's canonical order, each ``z_ij``
being ``[x-part; gradient-part]``; ``v(x) = col(x_i, grad f_i(x_i))``.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .engine import NetworkState
from .graph import Graph
from .problem import ProblemInstance

__all__ = [
    "MAX_EDGE_DIM",
    "StructuralError",
    "AggregateModel",
    "ConsensusBasis",
    "build_aggregate",
    "compute_basis",
    "structural_residuals",
    "z_equilibrium",
    "equilibrium_residuals",
    "stacked_G",
    "stacked_v",
    "aggregate_step",
    "AggregateState",
    "from_network_state",
    "to_network_state",
    "reduced_step",
    "mean_step",
    "boundary_layer_step",
    "boundary_layer_coordinates",
    "consensus_complement",
    "phi",
    "lyapunov_U",
    "lyapunov_W",
    "expected_U_increment",
    "fit_decrease_constant",
]

MAX_EDGE_DIM = 2000
UNIT_EIG_TOL = 1e-9


class StructuralError(RuntimeError):
    """The aggregate operator does not have the expected spectral structure."""


@dataclass(frozen=True, eq=False)
class AggregateModel:
    graph: Graph
    n: int
    rho: float
    A_x: np.ndarray
    A_grad: np.ndarray
    A: np.ndarray
    H: np.ndarray
    H2: np.ndarray
    P: np.ndarray

    @property
    def edge_dim(self) -> int:
        return self.P.shape[0]

    @cached_property
    def K(self) -> np.ndarray:
        """``A H2 A^T``, symmetric positive semidefinite."""
        return self.A @ self.H2 @ self.A.T

    @cached_property
    def T(self) -> np.ndarray:
        """Linear part of the uncompressed z-recursion: ``-P + 2 rho P K``."""
        return -self.P + 2.0 * self.rho * self.P @ self.K


def build_aggregate(graph: Graph, n: int, rho: float, max_edge_dim: int = MAX_EDGE_DIM) -> AggregateModel:
    if n < 1 or rho <= 0:
        raise ValueError("need n >= 1 and rho > 0")
    D, N = graph.n_directed, graph.N
    if 2 * n * D > max_edge_dim:
        raise ValueError(f"2nD = {2 * n * D} exceeds the dense-analysis limit {max_edge_dim}")
    I_n = np.eye(n)
    top = np.vstack([I_n, np.zeros((n, n))])
    bottom = np.vstack([np.zeros((n, n)), I_n])
    blocks_x, blocks_g, blocks_a = [], [], []
    for d in graph.degrees:
        ones = np.ones((d, 1))
        blocks_x.append(np.kron(ones, top))
        blocks_g.append(np.kron(ones, bottom))
        blocks_a.append(np.kron(ones, np.eye(2 * n)))
    scale = 1.0 / (1.0 + rho * graph.degrees)
    perm = np.repeat(graph.reverse * 2 * n, 2 * n) + np.tile(np.arange(2 * n), D)
    P = np.eye(2 * n * D)[perm]
    return AggregateModel(
        graph=graph,
        n=n,
        rho=float(rho),
        A_x=sla.block_diag(*blocks_x),
        A_grad=sla.block_diag(*blocks_g),
        A=sla.block_diag(*blocks_a),
        H=np.diag(np.repeat(scale, n)),
        H2=np.diag(np.repeat(scale, 2 * n)),
        P=P,
    )


@dataclass(frozen=True, eq=False)
class ConsensusBasis:
    B: np.ndarray
    M: np.ndarray
    R_fast: np.ndarray
    _lu: tuple = field(repr=False)

    @property
    def b(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.M.shape[1]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.R_fast)))) if self.p else 0.0

    def relaxed_spectral_radius(self, alpha: float) -> float:
        """Spectral radius of the relaxed fast map ``(1 - alpha) I + alpha R``."""
        if not self.p:
            return 0.0
        relaxed = (1.0 - alpha) * np.eye(self.p) + alpha * self.R_fast
        return float(np.max(np.abs(np.linalg.eigvals(relaxed))))

    def min_singular_gap(self) -> float:
        """Smallest singular value of ``I - R``; positive iff ``z_eq`` is well defined."""
        if not self.p:
            return float("inf")
        return float(np.linalg.svd(np.eye(self.p) - self.R_fast, compute_uv=False)[-1])


def compute_basis(model: AggregateModel, tol: float = UNIT_EIG_TOL) -> ConsensusBasis:
    """Orthonormal basis ``B`` of the unit-eigenvalue eigenspace of ``T`` and a complement ``M``.

    The eigenspace is taken as the numerical null space of ``I - T``; its
    dimension must match the number of eigenvalues clustered at 1, otherwise
    the unit eigenvalue is defective. For a model built from a graph the
    dimension must also equal ``2n`` times the cycle rank ``|E| - N + 1``
    (so a tree legitimately has ``b = 0``).
    """
    T = model.T
    dim = T.shape[0]
    shifted = np.eye(dim) - T
    B = sla.null_space(shifted, rcond=tol)
    graph = getattr(model, "graph", None)
    if graph is not None:
        expected = 2 * model.n * (graph.n_undirected - graph.N + 1)
        if B.shape[1] != expected:
            raise StructuralError(f"unit eigenspace has dimension {B.shape[1]}, expected {expected}")
    elif B.shape[1] == 0:
        sv = np.linalg.svd(shifted, compute_uv=False)
        raise StructuralError(f"no unit eigenvalue (smallest singular value of I - T is {sv[-1]:.3g})")
    eig = np.linalg.eigvals(T)
    algebraic = int(np.sum(np.abs(eig - 1.0) < np.sqrt(tol)))
    if algebraic != B.shape[1]:
        raise StructuralError(
            f"unit eigenvalue not semi-simple: algebraic multiplicity {algebraic}, geometric {B.shape[1]}"
        )
    M = sla.null_space(B.T, rcond=tol) if B.shape[1] else np.eye(dim)
    R_fast = M.T @ T @ M
    lu = sla.lu_factor(np.eye(M.shape[1]) - R_fast)
    return ConsensusBasis(B, M, R_fast, lu)


def structural_residuals(basis: ConsensusBasis, model: AggregateModel) -> dict[str, float]:
    """Max-abs residuals of the structural identities satisfied by ``B``."""
    B, P = basis.B, model.P
    eye = np.eye(P.shape[0])
    checks = {
        "Ax_T_B": model.A_x.T @ B,
        "Agrad_T_B": model.A_grad.T @ B,
        "B_T_P_A": B.T @ P @ model.A,
        "B_T_(I+P-2rhoPK)": B.T @ (eye + P - 2.0 * model.rho * P @ model.K),
        "B_T_P+B_T": B.T @ P + B.T,
        "B_T_P_B+I": B.T @ P @ B + np.eye(B.shape[1]),
    }
    return {k: float(np.max(np.abs(v))) if v.size else 0.0 for k, v in checks.items()}


def stacked_G(problem: ProblemInstance, x: np.ndarray) -> np.ndarray:
    return problem.stacked_grad(np.reshape(x, (problem.N, problem.n))).ravel()


def stacked_v(problem: ProblemInstance, x: np.ndarray) -> np.ndarray:
    X = np.reshape(x, (problem.N, problem.n))
    return np.hstack([X, problem.stacked_grad(X)]).ravel()


def z_equilibrium(basis: ConsensusBasis, model: AggregateModel, x: np.ndarray, problem: ProblemInstance) -> np.ndarray:
    """Fast-state equilibrium ``2 rho (I - R)^{-1} M^T P A H2 v(x)`` via a linear solve."""
    rhs = 2.0 * model.rho * basis.M.T @ (model.P @ (model.A @ (model.H2 @ stacked_v(problem, x))))
    sol = sla.lu_solve(basis._lu, rhs)
    if not np.all(np.isfinite(sol)):
        raise StructuralError("equilibrium solve produced non-finite values")
    return sol


def equilibrium_residuals(
    basis: ConsensusBasis, model: AggregateModel, x: np.ndarray, problem: ProblemInstance
) -> tuple[float, float]:
    """Residuals of the two averaging identities satisfied at ``z_eq(x)``."""
    N = problem.N
    zeq = basis.M @ z_equilibrium(basis, model, x, problem)
    ones = np.kron(np.ones((N, 1)), np.eye(problem.n))
    avg = ones @ ones.T / N
    G = stacked_G(problem, x)
    r_x = model.H @ model.A_x.T @ zeq - (avg @ x - model.H @ x)
    r_g = model.H @ model.A_grad.T @ zeq - (avg @ G - model.H @ G)
    return float(np.max(np.abs(r_x))), float(np.max(np.abs(r_g)))


@dataclass
class AggregateState:
    """Stacked ``(x, z, m, mhat)``; ``mhat`` is indexed like ``m`` (sender-major)."""

    x: np.ndarray
    z: np.ndarray
    m: np.ndarray
    mhat: np.ndarray


def from_network_state(state, graph: Graph) -> AggregateState:
    """Stack an engine state; the engine keeps ``mhat`` receiver-indexed."""
    return AggregateState(state.x.ravel().copy(), state.z.ravel().copy(), state.m.ravel().copy(),
                          state.mhat[graph.reverse].ravel().copy())


def to_network_state(agg: AggregateState, graph: Graph, n: int) -> NetworkState:
    rows = (graph.n_directed, 2 * n)
    mhat = agg.mhat.reshape(rows)[graph.reverse]
    return NetworkState(agg.x.reshape(graph.N, n).copy(), agg.z.reshape(rows).copy(),
                        agg.m.reshape(rows).copy(), mhat.copy())


def aggregate_step(
    model: AggregateModel,
    state: AggregateState,
    params,
    problem: ProblemInstance,
    compress: Callable[[np.ndarray], np.ndarray],
    variant: str = "delayed",
) -> AggregateState:
    """One evaluation of the stacked iteration; ``compress`` acts on the full edge vector."""
    x, z, m, mhat = state.x, state.z, state.m, state.mhat
    if x.shape != (model.H.shape[0],) or z.shape != (model.edge_dim,):
        raise ValueError("state dimensions do not match the aggregate model")
    if m.shape != z.shape or mhat.shape != z.shape:
        raise ValueError("m and mhat must have the edge dimension")
    g, d, a, rho = params.gamma, params.delta, params.alpha, model.rho
    H = model.H
    x_next = x + g * (H @ (x + model.A_x.T @ z) - x) - g * d * H @ (stacked_G(problem, x) + model.A_grad.T @ z)
    residual = -z + 2.0 * rho * model.A @ (model.H2 @ (model.A.T @ z + stacked_v(problem, x))) - m
    c = compress(residual)
    m_next = m + c
    mhat_next = mhat + c
    z_next = (1.0 - a) * z + a * model.P @ (mhat if variant == "delayed" else mhat_next)
    return AggregateState(x_next, z_next, m_next, mhat_next)


def consensus_complement(N: int, n: int) -> np.ndarray:
    """``R`` with orthonormal columns spanning the complement of ``1_N (x) I_n``.

    Built from the Householder reflector mapping ``e_1`` to ``1_N / sqrt(N)``.
    """
    u = np.ones(N) / np.sqrt(N)
    w = u.copy()
    w[0] -= 1.0
    nw = np.linalg.norm(w)
    Q = np.eye(N) if nw == 0 else np.eye(N) - 2.0 * np.outer(w, w) / nw**2
    return np.kron(Q[:, 1:], np.eye(n))


def reduced_step(x: np.ndarray, gamma: float, delta: float, problem: ProblemInstance) -> np.ndarray:
    """Slow dynamics with the fast state at equilibrium:
    ``x - gamma (I - 11^T/N) x - (gamma delta / N) 1 1^T G(x)``."""
    N, n = problem.N, problem.n
    X = np.reshape(x, (N, n))
    xbar = X.mean(axis=0)
    gsum = problem.stacked_grad(X).sum(axis=0)
    out = X - gamma * (X - xbar) - (gamma * delta / N) * gsum
    return out.ravel()


def mean_step(xbar: np.ndarray, x_perp: np.ndarray, gamma: float, delta: float, problem: ProblemInstance, R=None):
    """Reduced dynamics in ``(xbar, x_perp)`` coordinates."""
    N, n = problem.N, problem.n
    R = consensus_complement(N, n) if R is None else R
    x = np.tile(xbar, N) + R @ x_perp
    gsum = problem.stacked_grad(x.reshape(N, n)).sum(axis=0)
    return xbar - (gamma * delta / N) * gsum, (1.0 - gamma) * x_perp


def boundary_layer_step(
    zt: np.ndarray,
    mt: np.ndarray,
    alpha: float,
    basis: ConsensusBasis,
    model: AggregateModel,
    compress: Callable[[np.ndarray], np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    """Fast dynamics in error coordinates with the slow state frozen."""
    if zt.shape != (basis.p,) or mt.shape != (model.edge_dim,):
        raise ValueError("boundary-layer state dimensions do not match the basis")
    M, Rf, P = basis.M, basis.R_fast, model.P
    Jm = -np.eye(model.edge_dim) + 2.0 * model.rho * model.K
    z_next = (1.0 - alpha) * zt + alpha * Rf @ zt + alpha * M.T @ (P @ mt)
    m_next = mt + compress(-mt) - alpha * Jm @ (P @ mt) - alpha * Jm @ (M @ (Rf @ zt - zt))
    return z_next, m_next


def boundary_layer_coordinates(
    basis: ConsensusBasis, model: AggregateModel, state: AggregateState, problem: ProblemInstance
) -> tuple[np.ndarray, np.ndarray]:
    """Map an aggregate state to ``(z_perp - z_eq(x), m - nominal(z, x))``."""
    zt = basis.M.T @ state.z - z_equilibrium(basis, model, state.x, problem)
    nominal = -state.z + 2.0 * model.rho * model.A @ (model.H2 @ (model.A.T @ state.z + stacked_v(problem, state.x)))
    return zt, state.m - nominal


def phi(x: np.ndarray, problem: ProblemInstance, R: np.ndarray | None = None) -> float:
    """Distance-like measure to the consensual stationary set:
    ``||[1 grad f(xbar); R^T x]||``."""
    N, n = problem.N, problem.n
    R = consensus_complement(N, n) if R is None else R
    x = np.ravel(x)
    xbar = x.reshape(N, n).mean(axis=0)
    gpart = np.sqrt(N) * np.linalg.norm(problem.grad(xbar))
    return float(np.hypot(gpart, np.linalg.norm(R.T @ x)))


def lyapunov_U(zt: np.ndarray, mt: np.ndarray) -> float:
    return float(zt @ zt + mt @ mt)


def lyapunov_W(x: np.ndarray, problem: ProblemInstance, kappa: float, f_star: float, R: np.ndarray | None = None) -> float:
    N, n = problem.N, problem.n
    R = consensus_complement(N, n) if R is None else R
    x = np.ravel(x)
    xp = R.T @ x
    return problem.cost(x.reshape(N, n).mean(axis=0)) - f_star + 0.5 * kappa * float(xp @ xp)


def expected_U_increment(
    zt: np.ndarray,
    mt: np.ndarray,
    alpha: float,
    basis: ConsensusBasis,
    model: AggregateModel,
    compress: Callable[[np.ndarray], np.ndarray],
    samples: int,
) -> tuple[float, float]:
    """Monte Carlo ``E[U(next)] - U(now)`` and its standard error."""
    u0 = lyapunov_U(zt, mt)
    vals = np.empty(samples)
    for k in range(samples):
        vals[k] = lyapunov_U(*boundary_layer_step(zt, mt, alpha, basis, model, compress)) - u0
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0


def fit_decrease_constant(
    x0: np.ndarray,
    gamma: float,
    delta: float,
    problem: ProblemInstance,
    kappa: float,
    f_star: float,
    steps: int,
) -> tuple[float, np.ndarray]:
    """Largest ``c`` with ``W(x+) <= W(x) - delta c phi(x)^2`` along a reduced trajectory.

    Returns ``(c, W values)``. Steps where ``phi`` has fallen below ``1e-6``
    of its initial value are left out of the fit, since the decrease there is
    below floating-point resolution of ``W``.
    """
    R = consensus_complement(problem.N, problem.n)
    x = np.ravel(x0).astype(float)
    ws = [lyapunov_W(x, problem, kappa, f_star, R)]
    ratios = []
    floor = None
    for _ in range(steps):
        p = phi(x, problem, R)
        floor = 1e-6 * p if floor is None else floor
        x = reduced_step(x, gamma, delta, problem)
        ws.append(lyapunov_W(x, problem, kappa, f_star, R))
        # once phi has shrunk a millionfold the W gap is pure rounding
        if p > floor:
            ratios.append((ws[-2] - ws[-1]) / (delta * p * p))
    return (float(min(ratios)) if ratios else float("inf")), np.array(ws)
