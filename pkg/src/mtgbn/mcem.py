"""Monte-Carlo EM: alternate HMC draws of the shared covariance with per-task searches."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ChainDiverged, DimensionMismatch
from .graph import Dag, bits, clique_masks, decomposable_cover, min_fill_masks, moral_masks, separator_masks
from .hmc import Chain, HmcConfig, sample_sigma_h
from .likelihood import HyperParams, TaskData, check_tasks, initial_sigma_h
from .matrix_stats import LOG_2, LOG_PI, lmvgamma
from .search import (
    ScoredDag,
    SearchConfig,
    SigmaSampleCache,
    correlation_skeleton,
    hill_climb,
    learn_sig,
)


@dataclass(frozen=True)
class RunConfig:
    hp: HyperParams
    hmc: HmcConfig = HmcConfig()
    search: SearchConfig = SearchConfig()
    # None means 1e-2 * m * p
    epsilon: float | None = None
    max_em_iters: int = 20
    seed: int = 0
    max_sample_factor: int = 8
    skeleton_threshold: float | None = None
    warm_burn_in: int | None = None
    # iterations run before the stopping rule may end the loop
    min_em_iters: int = 1

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_em_iters < 1:
            raise ValueError("max_em_iters must be >= 1")
        if not 1 <= self.min_em_iters <= self.max_em_iters:
            raise ValueError("need 1 <= min_em_iters <= max_em_iters")
        if self.max_sample_factor < 1:
            raise ValueError("max_sample_factor must be >= 1")

    def tolerance(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return 1e-2 * self.hp.m * self.hp.p


@dataclass
class McemResult:
    dags: list[ScoredDag]
    q_trace: list[float]
    em_iters_used: int
    chains: list[Chain] = field(default_factory=list, repr=False)
    # Q-tilde of the previous structures under each iteration's sample set
    q_prev_trace: list[float] = field(default_factory=list)
    records: list[dict] = field(default_factory=list, repr=False)


def derive_seed(*keys: int) -> int:
    """Stable 64-bit seed for a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0])


def _sum_logdets(stack: np.ndarray, mask: int) -> np.ndarray:
    if mask == 0:
        return np.zeros(stack.shape[0])
    idx = bits(mask)
    return np.linalg.slogdet(stack[:, idx][:, :, idx])[1]


def score_per_sample(dag: Dag, task: TaskData, sigma_samples, hp: HyperParams) -> np.ndarray:
    """Per-sample terms of the Monte-Carlo structure score, one entry per draw."""
    stack = np.asarray(np.array(sigma_samples), dtype=float)
    post = stack + (task.n * task.s)[None]
    nu0, n = hp.nu0, task.n

    def term(mask):
        if mask == 0:
            return 0.0
        k = mask.bit_count()
        return (
            nu0 / 2.0 * _sum_logdets(stack, mask)
            + lmvgamma(k, (nu0 + n) / 2.0)
            - n * k / 2.0 * LOG_PI
            - (nu0 + n) / 2.0 * _sum_logdets(post, mask)
            - lmvgamma(k, nu0 / 2.0)
        )

    def clique(mask):
        k = mask.bit_count()
        a = (nu0 + k - 1) / 2.0
        return a * (_sum_logdets(stack, mask) - k * LOG_2) - lmvgamma(k, a)

    out = np.zeros(stack.shape[0])
    for k, pm in enumerate(dag.parent_masks):
        out += term(pm | (1 << k)) - term(pm)
    cl = clique_masks(min_fill_masks(moral_masks(dag.parent_masks)))
    for c in cl:
        out += clique(c)
    for s in separator_masks(cl):
        if s:
            out -= clique(s)
    return out


def q_tilde(dags: Sequence[Dag], tasks: Sequence[TaskData], sigma_samples, hp: HyperParams) -> float:
    """Monte-Carlo estimate of the expected complete-data log likelihood (prior constant dropped)."""
    if len(dags) != len(tasks):
        raise DimensionMismatch("dags and tasks must align")
    n = len(sigma_samples)
    return float(sum(score_per_sample(d, t, sigma_samples, hp).sum() for d, t in zip(dags, tasks)) / n)


def _mcse(x: np.ndarray) -> float:
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def _task_search_cfg(cfg: RunConfig, task: TaskData, init: Dag, it: int, i: int) -> SearchConfig:
    scfg = replace(cfg.search, seed=derive_seed(cfg.seed, 2, it, i))
    if cfg.skeleton_threshold is not None:
        skel = set(correlation_skeleton(task, cfg.skeleton_threshold))
        # the starting structure is always admissible
        skel.update((min(a, b), max(a, b)) for a, b in init.edges)
        scfg = replace(scfg, candidate_skeleton=frozenset(skel))
    return scfg


def initial_dags(tasks: Sequence[TaskData], cfg: RunConfig, node_names=None) -> list[Dag]:
    """Per-task single-task structures used as the EM starting point."""
    out = []
    for i, t in enumerate(tasks):
        scfg = replace(cfg.search, seed=derive_seed(cfg.seed, 1, i))
        if cfg.skeleton_threshold is not None:
            scfg = replace(scfg, candidate_skeleton=correlation_skeleton(t, cfg.skeleton_threshold))
        out.append(learn_sig(t, scfg, node_names).dag)
    return out


def run_mcem(
    tasks: Sequence[TaskData],
    init_dags: Sequence[Dag] | None,
    cfg: RunConfig,
    log_path: str | Path | None = None,
    keep_chains: bool = False,
    progress: Callable[[dict], None] | None = None,
) -> McemResult:
    """Run Monte-Carlo EM until the stopping rule holds twice in a row or the iteration cap."""
    hp = cfg.hp
    p = check_tasks(tasks, hp.p)
    if len(tasks) != hp.m:
        raise DimensionMismatch(f"hyperparameters say m={hp.m}, got {len(tasks)} tasks")
    dags = list(init_dags) if init_dags is not None else initial_dags(tasks, cfg)
    if len(dags) != len(tasks):
        raise DimensionMismatch("init_dags and tasks must align")
    for d in dags:
        if d.p != p:
            raise DimensionMismatch("init dag dimension differs from data")

    tol = cfg.tolerance()
    sigma = initial_sigma_h(tasks, hp)
    step = cfg.hmc.step_size
    n_samples = cfg.hmc.n_samples
    n_cap = cfg.hmc.n_samples * cfg.max_sample_factor
    warm_burn = cfg.warm_burn_in if cfg.warm_burn_in is not None else max(cfg.hmc.burn_in // 4, min(cfg.hmc.burn_in, 50))

    q_trace, q_prev_trace, chains, records = [], [], [], []
    scored: list[ScoredDag] = [ScoredDag(d, float("nan")) for d in dags]
    streak = 0
    log_fh = open(log_path, "w", encoding="utf-8") if log_path is not None else None
    try:
        for it in range(1, cfg.max_em_iters + 1):
            t0 = time.perf_counter()
            covers = [decomposable_cover(d) for d in dags]
            hcfg = replace(
                cfg.hmc,
                n_samples=n_samples,
                step_size=step,
                seed=derive_seed(cfg.seed, 0, it),
                burn_in=cfg.hmc.burn_in if it == 1 else warm_burn,
            )
            try:
                chain = sample_sigma_h(tasks, covers, hp, hcfg, sigma)
            except ChainDiverged as exc:
                exc.iteration = it
                raise
            samples = chain.samples
            sigma = samples[-1]
            step = chain.step_size
            if keep_chains:
                chains.append(chain)

            shared = SigmaSampleCache(samples, hp)
            new = [
                hill_climb(t, samples, hp, _task_search_cfg(cfg, t, d, it, i), d, shared)
                for i, (t, d) in enumerate(zip(tasks, dags))
            ]
            old_ps = sum(score_per_sample(d, t, samples, hp) for d, t in zip(dags, tasks))
            new_ps = sum(score_per_sample(r.dag, t, samples, hp) for r, t in zip(new, tasks))
            q_old = float(old_ps.mean())
            q_new = float(new_ps.mean())
            mcse = _mcse(new_ps - old_ps)
            q_trace.append(q_new)
            q_prev_trace.append(q_old)
            dags = [r.dag for r in new]
            scored = new

            fired = abs(q_new - q_old) <= tol + mcse
            streak = streak + 1 if fired else 0
            rec = {
                "iter": it,
                "q_tilde": q_new,
                "q_tilde_prev": q_old,
                "mcse": mcse,
                "n_samples": n_samples,
                "accept_rate": chain.accept_rate,
                "step_size": chain.step_size,
                "task_scores": [r.score for r in new],
                "n_edges": [len(r.dag.edges) for r in new],
                "wall_time": time.perf_counter() - t0,
            }
            records.append(rec)
            if log_fh is not None:
                log_fh.write(json.dumps(rec, sort_keys=True) + "\n")
                log_fh.flush()
            if progress is not None:
                progress(rec)
            if it >= cfg.min_em_iters and (math.isinf(tol) or streak >= 2):
                break
            if fired:
                n_samples = min(2 * n_samples, n_cap)
    finally:
        if log_fh is not None:
            log_fh.close()
    return McemResult(scored, q_trace, len(q_trace), chains, q_prev_trace, records)
