"""Score-based DAG search: the Monte-Carlo M-step score and the SIG/AVG baselines.

Both scores are evaluated through a common scorer interface: a
decomposable per-family term plus, for the Monte-Carlo score, a global term
that depends on the triangulated moral graph.  Per-set log-determinants are
cached by node bitmask so hill climbing only pays for sets it has not seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch
from .graph import (
    Dag,
    bits,
    clique_masks,
    min_fill_masks,
    moral_masks,
    separator_masks,
    topological_order_masks,
)
from .likelihood import HyperParams, TaskData, check_tasks
from .matrix_stats import LOG_2, LOG_PI, lmvgamma

IMPROVE_TOL = 1e-9
_DELETE, _REVERSE, _ADD = 0, 1, 2


@dataclass(frozen=True)
class SearchConfig:
    max_parents: int = 5
    max_iters: int = 1000
    restarts: int = 0
    seed: int = 0
    candidate_skeleton: frozenset[tuple[int, int]] | None = None
    perturb: int | None = None

    def __post_init__(self):
        if self.max_parents < 0:
            raise ValueError("max_parents must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")


@dataclass
class ScoredDag:
    dag: Dag
    score: float
    trace: list[float] = field(default_factory=list)


def correlation_skeleton(task: TaskData, threshold: float = 0.05) -> frozenset[tuple[int, int]]:
    """Unordered pairs whose absolute sample correlation exceeds ``threshold``."""
    s = task.s
    d = np.sqrt(np.clip(np.diag(s), 0.0, None))
    out = set()
    for i in range(task.p):
        for j in range(i + 1, task.p):
            if d[i] > 0 and d[j] > 0 and abs(s[i, j]) / (d[i] * d[j]) > threshold:
                out.add((i, j))
    return frozenset(out)


# ---------------------------------------------------------------------------
# scorers


class SigmaSampleCache:
    """Per-set sums over samples of ``log|Sigma_h^l[C, C]|``, shared across tasks."""

    def __init__(self, sigma_samples, hp: HyperParams):
        self.stack = np.asarray(np.array(sigma_samples), dtype=float)
        if self.stack.ndim != 3 or self.stack.shape[0] < 1:
            raise ValueError("need a non-empty list of p x p samples")
        self.n_samples = self.stack.shape[0]
        self.hp = hp
        self._ld: dict[int, float] = {0: 0.0}
        self._h: dict[int, float] = {0: 0.0}
        self._cover: dict[tuple[int, ...], float] = {}

    def logdet_sum(self, mask: int) -> float:
        val = self._ld.get(mask)
        if val is None:
            idx = bits(mask)
            sub = self.stack[:, idx][:, :, idx]
            val = float(np.linalg.slogdet(sub)[1].sum())
            self._ld[mask] = val
        return val

    def clique_sum(self, mask: int) -> float:
        """Sum over samples of one clique factor of ``log_h``."""
        val = self._h.get(mask)
        if val is None:
            k = mask.bit_count()
            a = (self.hp.nu0 + k - 1) / 2.0
            val = a * (self.logdet_sum(mask) - self.n_samples * k * LOG_2) - self.n_samples * lmvgamma(k, a)
            self._h[mask] = val
        return val

    def cover_sum(self, moral: Sequence[int]) -> float:
        key = tuple(moral)
        val = self._cover.get(key)
        if val is None:
            cl = clique_masks(min_fill_masks(moral))
            val = sum(self.clique_sum(c) for c in cl)
            val -= sum(self.clique_sum(s) for s in separator_masks(cl) if s)
            self._cover[key] = val
        return val


class McScorer:
    """Sum over Sigma_h samples of log P(D_i | B_i, Sigma_h) + log h(Sigma_h, cover(B_i))."""

    has_global = True

    def __init__(self, task: TaskData, sigma_samples, hp: HyperParams, shared: SigmaSampleCache | None = None):
        self.shared = shared if shared is not None else SigmaSampleCache(sigma_samples, hp)
        self.task = task
        self.hp = hp
        n, nu0 = task.n, hp.nu0
        self.post = self.shared.stack + (n * task.s)[None, :, :]
        self._ld_post: dict[int, float] = {0: 0.0}
        self._term: dict[int, float] = {0: 0.0}
        self._family: dict[tuple[int, int], float] = {}
        N = self.shared.n_samples
        self._const = [
            N * (lmvgamma(k, (nu0 + n) / 2.0) - n * k / 2.0 * LOG_PI - lmvgamma(k, nu0 / 2.0))
            for k in range(task.p + 1)
        ]

    def _term_sum(self, mask: int) -> float:
        val = self._term.get(mask)
        if val is None:
            nu0, n = self.hp.nu0, self.task.n
            idx = bits(mask)
            sub = self.post[:, idx][:, :, idx]
            ld_post = float(np.linalg.slogdet(sub)[1].sum())
            val = (
                nu0 / 2.0 * self.shared.logdet_sum(mask)
                + self._const[len(idx)]
                - (nu0 + n) / 2.0 * ld_post
            )
            self._term[mask] = val
        return val

    def family(self, k: int, parents: int) -> float:
        key = (k, parents)
        val = self._family.get(key)
        if val is None:
            val = self._term_sum(parents | (1 << k)) - self._term_sum(parents)
            self._family[key] = val
        return val

    def global_term(self, parents: Sequence[int]) -> float:
        return self.shared.cover_sum(moral_masks(parents))


class BicScorer:
    """BIC-penalized Gaussian log-likelihood, each node regressed on its parents."""

    has_global = False

    def __init__(self, task: TaskData, var_floor: float = 1e-300):
        self.s = task.s
        self.n = task.n
        self.var_floor = var_floor
        self._family: dict[tuple[int, int], float] = {}

    def family(self, k: int, parents: int) -> float:
        key = (k, parents)
        val = self._family.get(key)
        if val is None:
            s, n = self.s, self.n
            pa = bits(parents)
            var = s[k, k]
            if pa:
                s_pp = s[np.ix_(pa, pa)]
                s_pk = s[pa, k]
                var = var - s_pk @ np.linalg.pinv(s_pp, hermitian=True) @ s_pk
            var = max(float(var), self.var_floor)
            val = -0.5 * n * (math.log(2.0 * math.pi * var) + 1.0) - 0.5 * (len(pa) + 1) * math.log(n)
            self._family[key] = val
        return val

    def global_term(self, parents: Sequence[int]) -> float:
        return 0.0


def total_score(scorer, parents: Sequence[int]) -> float:
    s = sum(scorer.family(k, pm) for k, pm in enumerate(parents))
    if scorer.has_global:
        s += scorer.global_term(parents)
    return s


# ---------------------------------------------------------------------------
# hill climbing


def _descendants(parents: Sequence[int]) -> list[int]:
    p = len(parents)
    children = [0] * p
    for k, pm in enumerate(parents):
        for j in bits(pm):
            children[j] |= 1 << k
    desc = [0] * p
    for v in reversed(topological_order_masks(parents)):
        d = 0
        for c in bits(children[v]):
            d |= (1 << c) | desc[c]
        desc[v] = d
    return desc


def _allowed_masks(p: int, skeleton) -> list[int]:
    if skeleton is None:
        full = (1 << p) - 1
        return [full & ~(1 << k) for k in range(p)]
    allowed = [0] * p
    for a, b in skeleton:
        allowed[a] |= 1 << b
        allowed[b] |= 1 << a
    return allowed


def _moves(parents, allowed, max_parents):
    """Yield ``(kind, src, dst)`` for every legal single-edge move."""
    p = len(parents)
    desc = _descendants(parents)
    children = [0] * p
    for k, pm in enumerate(parents):
        for j in bits(pm):
            children[j] |= 1 << k
    for k in range(p):
        for j in bits(parents[k]):
            yield _DELETE, j, k
            # reversing j -> k is legal unless another path j ~> k exists
            if (allowed[j] >> k) & 1 and parents[j].bit_count() < max_parents:
                blocked = False
                for c in bits(children[j] & ~(1 << k)):
                    if (desc[c] >> k) & 1:
                        blocked = True
                        break
                if not blocked:
                    yield _REVERSE, j, k
    for k in range(p):
        if parents[k].bit_count() >= max_parents:
            continue
        cand = allowed[k] & ~parents[k] & ~children[k]
        for j in bits(cand):
            # j -> k closes a cycle iff k already reaches j
            if not (desc[k] >> j) & 1:
                yield _ADD, j, k


def _apply(parents, kind, j, k):
    new = list(parents)
    if kind == _DELETE:
        new[k] &= ~(1 << j)
    elif kind == _ADD:
        new[k] |= 1 << j
    else:
        new[k] &= ~(1 << j)
        new[j] |= 1 << k
    return new


def _climb(scorer, parents, cfg: SearchConfig, allowed):
    parents = list(parents)
    p = len(parents)
    fam = [scorer.family(k, parents[k]) for k in range(p)]
    glob = scorer.global_term(parents) if scorer.has_global else 0.0
    score = sum(fam) + glob
    trace = [score]
    for _ in range(cfg.max_iters):
        cands = []
        for kind, j, k in _moves(parents, allowed, cfg.max_parents):
            if kind == _ADD:
                d = scorer.family(k, parents[k] | (1 << j)) - fam[k]
            elif kind == _DELETE:
                d = scorer.family(k, parents[k] & ~(1 << j)) - fam[k]
            else:
                d = (
                    scorer.family(k, parents[k] & ~(1 << j)) - fam[k]
                    + scorer.family(j, parents[j] | (1 << k)) - fam[j]
                )
            if scorer.has_global:
                d += scorer.global_term(_apply(parents, kind, j, k)) - glob
            cands.append((d, kind, j, k))
        if not cands:
            break
        best_d = max(c[0] for c in cands)
        if not best_d > IMPROVE_TOL:
            break
        # near-equal deltas: delete before reverse before add, then lowest (src, dst)
        d, kind, j, k = min(
            (c for c in cands if c[0] >= best_d - IMPROVE_TOL), key=lambda c: (c[1], c[2], c[3])
        )
        parents = _apply(parents, kind, j, k)
        fam[k] = scorer.family(k, parents[k])
        fam[j] = scorer.family(j, parents[j])
        if scorer.has_global:
            glob = scorer.global_term(parents)
        score = sum(fam) + glob
        trace.append(score)
    return parents, score, trace


def _random_moves(parents, allowed, max_parents, n_moves, rng):
    for _ in range(n_moves):
        moves = list(_moves(parents, allowed, max_parents))
        if not moves:
            break
        kind, j, k = moves[rng.integers(len(moves))]
        parents = _apply(parents, kind, j, k)
    return parents


def search(scorer, init: Dag, cfg: SearchConfig) -> ScoredDag:
    """Greedy hill climbing with optional random-restart perturbations."""
    p = init.p
    allowed = _allowed_masks(p, cfg.candidate_skeleton)
    init_parents = list(init.parent_masks)
    for k, pm in enumerate(init_parents):
        if pm.bit_count() > cfg.max_parents:
            raise ValueError(f"initial node {k} exceeds max_parents")
        if pm & ~allowed[k]:
            raise ValueError(f"initial node {k} has a parent outside the skeleton")
    rng = np.random.default_rng(cfg.seed)
    best_parents, best_score, trace = _climb(scorer, init_parents, cfg, allowed)
    n_perturb = cfg.perturb if cfg.perturb is not None else max(1, p // 2)
    for _ in range(cfg.restarts):
        start = _random_moves(best_parents, allowed, cfg.max_parents, n_perturb, rng)
        cand, score, _ = _climb(scorer, start, cfg, allowed)
        if score > best_score + IMPROVE_TOL:
            best_parents, best_score = cand, score
            trace.append(score)
    return ScoredDag(Dag.from_parent_masks(init.node_names, best_parents), best_score, trace)


# ---------------------------------------------------------------------------
# public operations


def mc_score(dag: Dag, task: TaskData, sigma_samples, hp: HyperParams) -> float:
    """Sum over samples of the structure-conditional log likelihood plus ``log h``."""
    if dag.p != task.p:
        raise DimensionMismatch("dag and task disagree on p")
    return total_score(McScorer(task, sigma_samples, hp), dag.parent_masks)


def hill_climb(
    task: TaskData,
    sigma_samples,
    hp: HyperParams,
    cfg: SearchConfig,
    init: Dag,
    shared: SigmaSampleCache | None = None,
) -> ScoredDag:
    """Maximize :func:`mc_score` over DAGs by single-edge moves."""
    scorer = McScorer(task, sigma_samples, hp, shared)
    out = search(scorer, init, cfg)
    out.score = mc_score(out.dag, task, scorer.shared.stack, hp)
    return out


def learn_sig(task: TaskData, cfg: SearchConfig, node_names: Sequence[str] | None = None) -> ScoredDag:
    """Single-task structure under the BIC Gaussian score, starting from the empty graph."""
    init = Dag.empty(task.p if node_names is None else tuple(node_names))
    return search(BicScorer(task), init, cfg)


def pool_tasks(tasks: Sequence[TaskData]) -> TaskData:
    check_tasks(tasks)
    if not tasks:
        raise ValueError("need at least one task")
    return TaskData.from_data(np.vstack([t.data for t in tasks]))


def learn_avg(tasks: Sequence[TaskData], cfg: SearchConfig, node_names: Sequence[str] | None = None) -> ScoredDag:
    """One structure from all rows of all tasks; callers report it for every task."""
    return learn_sig(pool_tasks(tasks), cfg, node_names)


def bic_score(dag: Dag, task: TaskData) -> float:
    return total_score(BicScorer(task), dag.parent_masks)


def all_dags(p: int, node_names: Iterable[str] | None = None) -> list[Dag]:
    """Every DAG on ``p`` labelled nodes (brute force; small ``p`` only)."""
    names = tuple(node_names) if node_names is not None else tuple(f"X{i + 1}" for i in range(p))
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    out = []
    for code in range(3 ** len(pairs)):
        edges = []
        c = code
        for i, j in pairs:
            c, r = divmod(c, 3)
            if r == 1:
                edges.append((i, j))
            elif r == 2:
                edges.append((j, i))
        parents = [0] * p
        for a, b in edges:
            parents[b] |= 1 << a
        if topological_order_masks(parents) is not None:
            out.append(Dag(names, frozenset(edges)))
    return out


def with_seed(cfg: SearchConfig, seed: int) -> SearchConfig:
    return replace(cfg, seed=seed)
