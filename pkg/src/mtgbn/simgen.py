"""Synthetic multitask data and perturbed families of benchmark networks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, RetriesExhausted
from .graph import Dag, UGraph, topological_order_masks
from .likelihood import TaskData
from .matrix_stats import sample_inverse_wishart, sample_mvn, sample_uniform_spd_unit_trace


@dataclass(frozen=True)
class SynthSpec:
    m: int
    p: int
    n: int | tuple[int, ...]
    density: float
    nu0: float | None = None
    seed: int = 0
    max_retries: int = 100
    # whole-draw restarts (new shared covariance) after a task exhausts max_retries
    max_shared_redraws: int = 200

    def __post_init__(self):
        if self.m < 1 or self.p < 1:
            raise DomainError("m and p must be positive")
        if not 0.0 < self.density < 1.0:
            raise DomainError("density must lie in (0, 1)")
        if any(k < 1 for k in self.sizes()):
            raise DomainError("sample sizes must be positive")
        if len(self.sizes()) != self.m:
            raise DomainError("need one sample size per task")
        if not self.df > self.p - 1:
            raise DomainError(f"nu0 must exceed p - 1 = {self.p - 1}")
        if self.max_retries < 1 or self.max_shared_redraws < 1:
            raise DomainError("max_retries and max_shared_redraws must be >= 1")

    def sizes(self) -> tuple[int, ...]:
        if isinstance(self.n, int):
            return (self.n,) * self.m
        return tuple(int(k) for k in self.n)

    @property
    def df(self) -> float:
        return float(2 * self.p) if self.nu0 is None else float(self.nu0)


@dataclass
class SynthOutput:
    sigma_h_true: np.ndarray
    graphs: list[UGraph]
    precisions: list[np.ndarray]
    tasks: list[TaskData]
    retries: list[int]

    @property
    def covariances(self) -> list[np.ndarray]:
        return [np.linalg.inv(o) for o in self.precisions]


def realized_density(g: UGraph) -> float:
    """``|E| / p^2`` with ``E`` counted as ordered pairs."""
    return 2.0 * len(g.edges) / g.p**2


def _threshold(omega: np.ndarray, density: float) -> np.ndarray:
    """Keep the off-diagonal entries whose magnitude ranks in the top share giving the closest density."""
    p = omega.shape[0]
    iu = np.triu_indices(p, 1)
    mags = np.abs(omega[iu])
    # |E| = 2 k over p^2, so the closest count of kept pairs is:
    k = int(min(max(round(density * p * p / 2.0), 0), mags.size))
    keep = np.zeros(mags.size, dtype=bool)
    if k:
        # stable order so equal magnitudes resolve by position
        keep[np.argsort(-mags, kind="stable")[:k]] = True
    out = np.diag(np.diag(omega)).astype(float)
    out[iu[0][keep], iu[1][keep]] = omega[iu][keep]
    out[iu[1][keep], iu[0][keep]] = omega[iu][keep]
    return out


def _is_spd(m: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return False
    return True


def _draw_task(sigma_h, df, density, max_retries, rng):
    for attempt in range(max_retries):
        s_tilde = sample_inverse_wishart(sigma_h, df, rng)
        omega_tilde = np.linalg.inv(s_tilde)
        omega_tilde = 0.5 * (omega_tilde + omega_tilde.T)
        omega = _threshold(omega_tilde, density)
        if _is_spd(omega):
            return omega, attempt
    return None, max_retries


def generate_synthetic(spec: SynthSpec, rng: np.random.Generator | None = None) -> SynthOutput:
    """Draw a shared covariance, related sparse precisions, and Gaussian data for each task.

    Each task redraws its intermediate covariance until the thresholded
    precision is positive definite.  If some task fails ``max_retries`` times
    the whole draw, shared covariance included, is rejected and repeated.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    p = spec.p
    names = tuple(f"X{i + 1}" for i in range(p))
    for _ in range(spec.max_shared_redraws):
        sigma_h = sample_uniform_spd_unit_trace(p, rng)
        children = rng.spawn(spec.m)
        precs, retries = [], []
        for child in children:
            omega, attempt = _draw_task(sigma_h, spec.df, spec.density, spec.max_retries, child)
            if omega is None:
                break
            precs.append(omega)
            retries.append(attempt)
        else:
            break
    else:
        raise RetriesExhausted(
            f"no positive definite precision within {spec.max_retries} draws, "
            f"for {spec.max_shared_redraws} shared covariances"
        )
    graphs, tasks = [], []
    for omega, n_l, child in zip(precs, spec.sizes(), children):
        cov = np.linalg.inv(omega)
        cov = 0.5 * (cov + cov.T)
        adj = (omega != 0).astype(int)
        np.fill_diagonal(adj, 0)
        graphs.append(UGraph(names, frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(adj, 1))))))
        tasks.append(TaskData.from_data(sample_mvn(cov, n_l, child)))
    return SynthOutput(sigma_h, graphs, precs, tasks, retries)


@dataclass(frozen=True)
class PerturbSpec:
    base_dag: Dag
    level: float
    m: int
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.level <= 1.0:
            raise DomainError("level must lie in [0, 1]")
        if self.m < 1:
            raise DomainError("m must be positive")


def _perturb_one(base: Dag, level: float, rng: np.random.Generator) -> tuple[Dag, int]:
    p = base.p
    order = base.topological_order()
    rank = {v: r for r, v in enumerate(order)}
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    target = math.ceil(level * len(pairs) - 1e-12)
    parents = list(base.parent_masks)
    positions = rng.permutation(len(pairs))
    applied = 0
    for pos in positions:
        if applied >= target:
            break
        i, j = pairs[pos]
        new = list(parents)
        if (parents[j] >> i) & 1 or (parents[i] >> j) & 1:
            a, b = (i, j) if (parents[j] >> i) & 1 else (j, i)
            new[b] &= ~(1 << a)
            if rng.uniform() >= 0.5:
                new[a] |= 1 << b
        else:
            a, b = (i, j) if rank[i] < rank[j] else (j, i)
            new[b] |= 1 << a
        if topological_order_masks(new) is None:
            # a cyclic result is discarded and another position drawn
            continue
        parents = new
        applied += 1
    return Dag.from_parent_masks(base.node_names, parents), applied


def perturb_benchmark(spec: PerturbSpec, rng: np.random.Generator | None = None) -> list[Dag]:
    """``m`` related DAGs, each modifying ``ceil(level * p(p-1)/2)`` node pairs of the base."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    return [_perturb_one(spec.base_dag, spec.level, child)[0] for child in rng.spawn(spec.m)]


def pair_hamming(a: Dag, b: Dag) -> int:
    """Number of unordered node pairs whose edge state (absent, forward, backward) differs."""
    ea, eb = a.edges, b.edges
    p = a.p
    count = 0
    for i in range(p):
        for j in range(i + 1, p):
            if ((i, j) in ea, (j, i) in ea) != ((i, j) in eb, (j, i) in eb):
                count += 1
    return count


def random_dag(p: int, n_edges: int, rng: np.random.Generator, node_names: Sequence[str] | None = None) -> Dag:
    """Uniformly chosen edge set of the given size, oriented along a random node order."""
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    if not 0 <= n_edges <= len(pairs):
        raise DomainError(f"n_edges must lie in [0, {len(pairs)}]")
    order = rng.permutation(p)
    chosen = rng.choice(len(pairs), size=n_edges, replace=False)
    edges = []
    for c in sorted(chosen):
        a, b = order[pairs[c][0]], order[pairs[c][1]]
        edges.append((int(a), int(b)))
    names = tuple(node_names) if node_names is not None else tuple(f"X{i + 1}" for i in range(p))
    return Dag(names, frozenset(edges))


def sem_weights(dag: Dag, rng: np.random.Generator, low: float = 0.5, high: float = 1.0) -> np.ndarray:
    """Edge weights with magnitude uniform on ``[low, high]`` and a random sign; ``w[j, k]`` for ``j -> k``."""
    w = np.zeros((dag.p, dag.p))
    for j, k in dag.sorted_edges():
        w[j, k] = rng.uniform(low, high) * (1.0 if rng.uniform() < 0.5 else -1.0)
    return w


def sample_sem(dag: Dag, n: int, rng: np.random.Generator, weights: np.ndarray | None = None) -> np.ndarray:
    """Rows from the linear Gaussian model ``x_k = sum_j w_jk x_j + e_k`` with unit noise."""
    w = sem_weights(dag, rng) if weights is None else weights
    x = np.zeros((n, dag.p))
    noise = rng.standard_normal((n, dag.p))
    for k in dag.topological_order():
        x[:, k] = x @ w[:, k] + noise[:, k]
    return x


def simulate_benchmark(
    base: Dag, level: float, m: int, n: int, rng: np.random.Generator
) -> tuple[list[Dag], list[TaskData]]:
    """Perturbed structures plus random-SEM data for each of them."""
    dags = perturb_benchmark(PerturbSpec(base, level, m), rng)
    tasks = [TaskData.from_data(sample_sem(d, n, child)) for d, child in zip(dags, rng.spawn(m))]
    return dags, tasks
