"""Local cost functions for consensus optimization.

Two instances are provided: the regularized logistic-regression
classification problem (nonconvex because of the ``x^2/(1+x^2)`` penalty)
and a separable quadratic whose minimizer is known in closed form.
Gradients are always evaluated for all agents at once on an ``(N, n)``
array whose row ``i`` is agent ``i``'s point.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

__all__ = [
    "ProblemInstance",
    "QuadraticProblem",
    "ClassificationProblem",
    "quadratic_problem",
    "generate_classification",
    "grad_norm_at_mean",
    "finite_difference_grad",
    "save_dataset_csv",
    "load_dataset_csv",
]


class ProblemInstance:
    """Base class: ``N`` agents, decision dimension ``n``, Lipschitz bound ``L``."""

    N: int
    n: int
    lipschitz: float

    def local_cost(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def local_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.stacked_grad(np.broadcast_to(x, (self.N, self.n)))[i]

    def stacked_grad(self, X: np.ndarray) -> np.ndarray:
        """Row ``i`` of the result is ``grad f_i(X[i])``."""
        raise NotImplementedError

    def cost(self, x: np.ndarray) -> float:
        """Global cost ``f(x) = sum_i f_i(x)``."""
        return float(sum(self.local_cost(i, x) for i in range(self.N)))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.stacked_grad(np.broadcast_to(x, (self.N, self.n))).sum(axis=0)


@dataclass(frozen=True, eq=False)
class QuadraticProblem(ProblemInstance):
    """``f_i(x) = 0.5 * ||x - theta_i||^2``; unique minimizer is the mean target."""

    targets: np.ndarray

    @property
    def N(self) -> int:  # type: ignore[override]
        return self.targets.shape[0]

    @property
    def n(self) -> int:  # type: ignore[override]
        return self.targets.shape[1]

    @property
    def lipschitz(self) -> float:  # type: ignore[override]
        return 1.0

    @property
    def minimizer(self) -> np.ndarray:
        return self.targets.mean(axis=0)

    @property
    def f_star(self) -> float:
        return self.cost(self.minimizer)

    def local_cost(self, i: int, x: np.ndarray) -> float:
        d = np.asarray(x) - self.targets[i]
        return 0.5 * float(d @ d)

    def stacked_grad(self, X: np.ndarray) -> np.ndarray:
        return X - self.targets


def quadratic_problem(targets) -> QuadraticProblem:
    """Build the quadratic oracle instance from a list of per-agent targets."""
    rows = [np.atleast_1d(np.asarray(t, dtype=float)) for t in targets]
    if not rows:
        raise ValueError("need at least one target")
    dims = {r.shape for r in rows}
    if len(dims) != 1 or rows[0].ndim != 1:
        raise ValueError(f"targets must share one 1-d shape, got {sorted(dims)}")
    arr = np.stack(rows)
    arr.setflags(write=False)
    return QuadraticProblem(arr)


@dataclass(frozen=True, eq=False)
class ClassificationProblem(ProblemInstance):
    """Logistic loss per agent plus an even share of the nonconvex regularizer.

    ``f_i(x) = mean_h log(1 + exp(-b_ih a_ih^T x)) + (eps/N) sum_l x_l^2/(1+x_l^2)``
    """

    features: tuple[np.ndarray, ...]
    labels: tuple[np.ndarray, ...]
    reg_eps: float

    def __post_init__(self) -> None:
        if len(self.features) != len(self.labels) or not self.features:
            raise ValueError("features and labels must list the same, nonzero number of agents")
        for a, b in zip(self.features, self.labels):
            if a.ndim != 2 or a.shape[0] != b.shape[0] or a.shape[0] < 1:
                raise ValueError("each agent needs m_i >= 1 samples with matching labels")
            if not np.all(np.abs(b) == 1.0):
                raise ValueError("labels must be exactly +1 or -1")
        if self.reg_eps <= 0:
            raise ValueError("reg_eps must be positive")
        sizes = {a.shape[0] for a in self.features}
        # uniform m_i lets stacked_grad run as one batched contraction
        if len(sizes) == 1:
            signed = np.stack([a * b[:, None] for a, b in zip(self.features, self.labels)])
        else:
            signed = None
        object.__setattr__(self, "_signed", signed)
        flat = np.concatenate([a * b[:, None] for a, b in zip(self.features, self.labels)])
        weights = np.concatenate([np.full(a.shape[0], 1.0 / a.shape[0]) for a in self.features])
        object.__setattr__(self, "_flat", (flat, weights))

    @property
    def N(self) -> int:  # type: ignore[override]
        return len(self.features)

    @property
    def n(self) -> int:  # type: ignore[override]
        return self.features[0].shape[1]

    @property
    def samples(self) -> list[int]:
        return [a.shape[0] for a in self.features]

    @property
    def lipschitz(self) -> float:  # type: ignore[override]
        logistic = max(float(np.sum(a * a)) / (4.0 * a.shape[0]) for a in self.features)
        return logistic + 2.0 * self.reg_eps

    def grad(self, x: np.ndarray) -> np.ndarray:
        # all agents share one point: a single pass over the pooled samples
        x = np.asarray(x, dtype=float)
        flat, weights = self._flat
        w = expit(-(flat @ x)) * weights
        return 2.0 * self.reg_eps * x / (1.0 + x * x) ** 2 - w @ flat

    def _reg(self, x: np.ndarray) -> float:
        x2 = x * x
        return self.reg_eps / self.N * float(np.sum(x2 / (1.0 + x2)))

    def local_cost(self, i: int, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        margins = self.labels[i] * (self.features[i] @ x)
        return float(np.mean(np.logaddexp(0.0, -margins))) + self._reg(x)

    def stacked_grad(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        reg = (2.0 * self.reg_eps / self.N) * X / (1.0 + X * X) ** 2
        if self._signed is not None:
            S = self._signed
            w = expit(-np.matmul(S, X[:, :, None])) / S.shape[1]
            return reg - np.matmul(np.swapaxes(w, 1, 2), S)[:, 0, :]
        out = np.empty_like(reg)
        for i, (a, b) in enumerate(zip(self.features, self.labels)):
            sa = a * b[:, None]
            w = expit(-(sa @ X[i])) / a.shape[0]
            out[i] = reg[i] - w @ sa
        return out


def generate_classification(
    N: int,
    n: int,
    samples_per_agent: int,
    reg_eps: float,
    seed: int | np.random.SeedSequence,
    separation: float = 1.0,
    flip: float = 0.02,
) -> ClassificationProblem:
    """Synthetic binary classification data split evenly across agents.

    Features come from two unit-covariance Gaussian clusters centred at
    ``+mu`` and ``-mu`` (``mu`` a random direction of norm ``separation``);
    the label is the cluster sign, flipped with probability ``flip``.
    """
    if min(N, n, samples_per_agent) < 1:
        raise ValueError("N, n and samples_per_agent must be positive")
    if reg_eps <= 0:
        raise ValueError("reg_eps must be positive")
    rng = np.random.default_rng(seed)
    mu = rng.standard_normal(n)
    mu *= separation / np.linalg.norm(mu)
    feats, labs = [], []
    for _ in range(N):
        cls = rng.choice(np.array([-1.0, 1.0]), size=samples_per_agent)
        a = cls[:, None] * mu + rng.standard_normal((samples_per_agent, n))
        b = np.where(rng.random(samples_per_agent) < flip, -cls, cls)
        feats.append(a)
        labs.append(b)
    return ClassificationProblem(tuple(feats), tuple(labs), float(reg_eps))


def grad_norm_at_mean(problem: ProblemInstance, x: np.ndarray) -> float:
    """``||sum_i grad f_i(xbar)||`` where ``xbar`` averages the agents' estimates."""
    X = np.asarray(x, dtype=float).reshape(problem.N, problem.n)
    return float(np.linalg.norm(problem.grad(X.mean(axis=0))))


def finite_difference_grad(problem: ProblemInstance, i: int, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of ``f_i``; independent of ``stacked_grad``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        g[k] = (problem.local_cost(i, x + e) - problem.local_cost(i, x - e)) / (2 * step)
    return g


def save_dataset_csv(problem: ClassificationProblem, path: str | Path) -> None:
    """One row per sample: ``agent_id, label, features...``; ``reg_eps`` in the header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["agent_id", "label", *(f"a{k}" for k in range(problem.n)), f"reg_eps={problem.reg_eps!r}"])
        for i, (a, b) in enumerate(zip(problem.features, problem.labels)):
            for row, lab in zip(a, b):
                w.writerow([i, int(lab), *(repr(float(v)) for v in row)])


def load_dataset_csv(path: str | Path, reg_eps: float | None = None) -> ClassificationProblem:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        eps = reg_eps
        if eps is None:
            tag = [h for h in header if h.startswith("reg_eps=")]
            if not tag:
                raise ValueError("reg_eps not given and not recorded in the file header")
            eps = float(tag[0].split("=", 1)[1])
        rows: dict[int, list[list[str]]] = {}
        for row in r:
            rows.setdefault(int(row[0]), []).append(row[1:])
    if sorted(rows) != list(range(len(rows))):
        raise ValueError("agent ids must be 0..N-1")
    feats, labs = [], []
    for i in range(len(rows)):
        arr = np.array(rows[i], dtype=float)
        labs.append(arr[:, 0])
        feats.append(arr[:, 1:])
    return ClassificationProblem(tuple(feats), tuple(labs), float(eps))
