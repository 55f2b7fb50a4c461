"""Closed-form densities of the hierarchical model.

Everything here is computed in log space.  ``log_h`` is the hyper inverse
Wishart normalizing term of a decomposable graph, ``log_marginal_task`` the
structure-conditional marginal likelihood of one dataset, and
``log_density_v`` / ``grad_log_density_v`` the posterior of the shared
covariance in the unconstrained Cholesky coordinates used by HMC.

The plain functions loop over cliques and favour readability;
:class:`PosteriorTarget` evaluates the same density and gradient with
batched linear algebra for the sampler.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, DomainError, NotPositiveDefinite, Overflow
from .graph import CliqueSequence, Dag
from .matrix_stats import (
    LOG_2,
    LOG_PI,
    check_spd,
    cholesky_factor,
    inverse_transform,
    lmvgamma,
    logdet,
    logdet_sub,
    sample_cov,
)


@dataclass(frozen=True)
class TaskData:
    """One task's observations with their zero-mean sample covariance."""

    data: np.ndarray
    s: np.ndarray
    n: int

    @classmethod
    def from_data(cls, data) -> "TaskData":
        x = np.asarray(data, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("task data must be a non-empty n x p array")
        return cls(x, sample_cov(x), x.shape[0])

    @property
    def p(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class HyperParams:
    nu0: float
    p: int
    m: int

    def __post_init__(self):
        if not self.nu0 > self.p - 1:
            raise DomainError(f"nu0 must exceed p - 1 = {self.p - 1}, got {self.nu0}")

    @classmethod
    def default(cls, p: int, m: int) -> "HyperParams":
        return cls(float(p + 2), p, m)


def check_tasks(tasks: Sequence[TaskData], p: int | None = None) -> int:
    dims = {t.p for t in tasks}
    if p is not None:
        dims.add(p)
    if len(dims) > 1:
        raise DimensionMismatch(f"inconsistent dimensions {sorted(dims)}")
    return dims.pop() if dims else (p or 0)


def _clique_term(sigma: np.ndarray, c, nu0: float) -> float:
    k = len(c)
    a = (nu0 + k - 1) / 2.0
    return a * (logdet_sub(sigma, c) - k * LOG_2) - lmvgamma(k, a)


def log_h(sigma: np.ndarray, cs: CliqueSequence, nu0: float) -> float:
    """Log of the HIW normalizing term for the decomposition ``cs``."""
    total = 0.0
    for c in cs.cliques:
        total += _clique_term(sigma, c, nu0)
    for s in cs.separators:
        if s:
            total -= _clique_term(sigma, s, nu0)
    return total


def log_term(sigma_h: np.ndarray, ns: np.ndarray, n: int, idx, nu0: float) -> float:
    """Log marginal density of the data restricted to ``idx``; zero for the empty set.

    ``ns`` is ``n * S`` for the task.  The multivariate gamma and the power
    of pi use ``|idx|`` as the dimension.
    """
    idx = sorted(idx)
    k = len(idx)
    if k == 0:
        return 0.0
    post = sigma_h + ns
    return (
        nu0 / 2.0 * logdet_sub(sigma_h, idx)
        + lmvgamma(k, (nu0 + n) / 2.0)
        - n * k / 2.0 * LOG_PI
        - (nu0 + n) / 2.0 * logdet_sub(post, idx)
        - lmvgamma(k, nu0 / 2.0)
    )


def log_marginal_task(task: TaskData, dag: Dag, sigma_h: np.ndarray, hp: HyperParams) -> float:
    """Log P(D_i | B_i, Sigma_h) as a product of family ratios."""
    if dag.p != task.p or sigma_h.shape[0] != task.p:
        raise DimensionMismatch("dag, task and sigma_h disagree on p")
    ns = task.n * task.s
    total = 0.0
    for k in range(dag.p):
        pa = dag.parents(k)
        total += log_term(sigma_h, ns, task.n, pa + [k], hp.nu0)
        total -= log_term(sigma_h, ns, task.n, pa, hp.nu0)
    return total


def _task_kernel(sigma_h, ldet_h, task, cover, nu0):
    post = sigma_h + task.n * task.s
    return (
        nu0 / 2.0 * ldet_h
        + log_h(post, cover, nu0)
        - (nu0 + task.n) / 2.0 * logdet(post)
    )


def log_post_kernel_sigma_h(
    sigma_h: np.ndarray,
    tasks: Sequence[TaskData],
    covers: Sequence[CliqueSequence],
    hp: HyperParams,
) -> float:
    """Unnormalized log posterior of Sigma_h given all structures and data."""
    if len(tasks) != len(covers):
        raise DimensionMismatch("tasks and covers must align")
    ldet_h = logdet(sigma_h)
    return sum(_task_kernel(sigma_h, ldet_h, t, c, hp.nu0) for t, c in zip(tasks, covers))


def _linear_coef(p: int, m: int, nu0: float) -> np.ndarray:
    # prior power of |Sigma_h| plus the Jacobian of V -> Sigma_h
    i = np.arange(1, p + 1)
    return m * nu0 + p - i + 2.0


def log_density_v(
    v: np.ndarray,
    tasks: Sequence[TaskData],
    covers: Sequence[CliqueSequence],
    hp: HyperParams,
) -> float:
    """Log posterior density of the unconstrained coordinates ``v`` (up to a constant)."""
    if len(tasks) != len(covers):
        raise DimensionMismatch("tasks and covers must align")
    v = np.asarray(v, dtype=float)
    p = v.shape[0]
    check_tasks(tasks, p)
    sigma_h = inverse_transform(v)
    total = 0.0
    for task, cover in zip(tasks, covers):
        post = sigma_h + task.n * task.s
        total += log_h(post, cover, hp.nu0) - (hp.nu0 + task.n) / 2.0 * logdet(post)
    total += float(_linear_coef(p, len(tasks), hp.nu0) @ np.diag(v))
    return total


def _embed_inverse(out: np.ndarray, m: np.ndarray, idx, coef: float) -> None:
    idx = np.asarray(sorted(idx), dtype=int)
    sub = m[np.ix_(idx, idx)]
    out[np.ix_(idx, idx)] += coef * np.linalg.inv(sub)


def grad_log_density_v(
    v: np.ndarray,
    tasks: Sequence[TaskData],
    covers: Sequence[CliqueSequence],
    hp: HyperParams,
) -> np.ndarray:
    """Gradient of :func:`log_density_v` with respect to the lower triangle of ``v``.

    Each log-determinant ``log|(Sigma_h + A)_CC|`` contributes
    ``2 lower{I_C^T (Sigma_h + A)_CC^{-1} I_C L}`` to the derivative in ``L``;
    diagonal entries are then multiplied by ``l_ii`` for the log scale.
    """
    v = np.asarray(v, dtype=float)
    p = v.shape[0]
    L = cholesky_factor(v)
    sigma_h = L @ L.T
    nu0 = hp.nu0
    g = np.zeros((p, p))
    for task, cover in zip(tasks, covers):
        post = sigma_h + task.n * task.s
        for c in cover.cliques:
            _embed_inverse(g, post, c, (nu0 + len(c) - 1) / 2.0)
        for s in cover.separators:
            if s:
                _embed_inverse(g, post, s, -(nu0 + len(s) - 1) / 2.0)
        g -= (nu0 + task.n) / 2.0 * np.linalg.inv(post)
    grad = 2.0 * np.tril(g @ L)
    d = np.diag_indices(p)
    grad[d] = grad[d] * np.diag(L) + _linear_coef(p, len(tasks), nu0)
    return grad


class PosteriorTarget:
    """Batched evaluation of the V-space log density and its gradient.

    Clique and separator blocks of every task are grouped by size so each
    group needs a single stacked Cholesky factorization and inverse.
    """

    def __init__(self, tasks: Sequence[TaskData], covers: Sequence[CliqueSequence], hp: HyperParams):
        if len(tasks) != len(covers):
            raise DimensionMismatch("tasks and covers must align")
        self.p = p = check_tasks(tasks, hp.p)
        self.m = m = len(tasks)
        nu0 = hp.nu0
        self.nu0 = nu0
        self.a = np.array([t.n * t.s for t in tasks]).reshape(m, p, p)
        self.full_coef = np.array([(nu0 + t.n) / 2.0 for t in tasks])
        self.lin = _linear_coef(p, m, nu0)
        self.n_evals = 0
        groups: dict[int, tuple[list, list, list]] = {}
        const = 0.0
        for i, cover in enumerate(covers):
            terms = [(c, 1.0) for c in cover.cliques] + [(s, -1.0) for s in cover.separators if s]
            for c, sign in terms:
                k = len(c)
                a = (nu0 + k - 1) / 2.0
                const += sign * (-a * k * LOG_2 - lmvgamma(k, a))
                ti, ix, cf = groups.setdefault(k, ([], [], []))
                ti.append(i)
                ix.append(sorted(c))
                cf.append(sign * a)
        self.const = const
        self.groups = [
            (np.array(ti), np.array(ix, dtype=int), np.array(cf))
            for _, (ti, ix, cf) in sorted(groups.items())
        ]

    def logp_and_grad(self, v: np.ndarray) -> tuple[float, np.ndarray]:
        self.n_evals += 1
        p = self.p
        L = cholesky_factor(v)
        with np.errstate(over="ignore", invalid="ignore"):
            sigma_h = L @ L.T
        if not np.all(np.isfinite(sigma_h)):
            raise Overflow("shared covariance overflowed")
        post = sigma_h[None, :, :] + self.a
        g = np.zeros((p, p))
        value = self.const
        try:
            for ti, ix, cf in self.groups:
                sub = post[ti[:, None, None], ix[:, :, None], ix[:, None, :]]
                ch = np.linalg.cholesky(sub)
                ld = 2.0 * np.log(np.diagonal(ch, axis1=1, axis2=2)).sum(axis=1)
                value += float(cf @ ld)
                inv = np.linalg.inv(sub)
                np.add.at(g, (ix[:, :, None], ix[:, None, :]), cf[:, None, None] * inv)
            if self.m:
                ch = np.linalg.cholesky(post)
                ld = 2.0 * np.log(np.diagonal(ch, axis1=1, axis2=2)).sum(axis=1)
                value -= float(self.full_coef @ ld)
                g -= np.einsum("i,ijk->jk", self.full_coef, np.linalg.inv(post))
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from None
        value += float(self.lin @ np.diag(v))
        grad = 2.0 * np.tril(g @ L)
        d = np.diag_indices(p)
        grad[d] = grad[d] * np.diag(L) + self.lin
        return value, grad

    def logp(self, v: np.ndarray) -> float:
        return self.logp_and_grad(v)[0]

    def grad(self, v: np.ndarray) -> np.ndarray:
        return self.logp_and_grad(v)[1]


def initial_sigma_h(tasks: Sequence[TaskData], hp: HyperParams, ridge: float = 1e-3) -> np.ndarray:
    """Starting point for the sampler: ``nu0`` times the pooled second moment, ridged."""
    p = check_tasks(tasks, hp.p)
    if not tasks:
        return np.eye(p)
    total_n = sum(t.n for t in tasks)
    pooled = sum(t.n * t.s for t in tasks) / total_n
    scale = np.trace(pooled) / p if np.trace(pooled) > 0 else 1.0
    out = hp.nu0 * (pooled + ridge * scale * np.eye(p))
    return check_spd(0.5 * (out + out.T))
