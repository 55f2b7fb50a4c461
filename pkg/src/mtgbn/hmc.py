"""Hamiltonian Monte Carlo over the Cholesky coordinates of the shared covariance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import ChainDiverged, MtgbnError, NonFinite
from .graph import CliqueSequence
from .likelihood import HyperParams, PosteriorTarget, TaskData
from .matrix_stats import inverse_transform, transform


class Target(Protocol):
    def logp_and_grad(self, v: np.ndarray) -> tuple[float, np.ndarray]: ...


@dataclass(frozen=True)
class HmcConfig:
    n_samples: int = 200
    n_leapfrog: int = 20
    step_size: float = 0.01
    # one positive mass per lower-triangular coordinate (row-major tril order); None means identity
    mass_diag: tuple[float, ...] | None = None
    burn_in: int = 500
    thin: int = 2
    seed: int = 0
    adapt: bool = True
    target_accept: float = 0.7
    diverge_window: int = 100
    diverge_threshold: float = 0.01

    def __post_init__(self):
        if self.n_samples < 1 or self.n_leapfrog < 1 or self.thin < 1 or self.burn_in < 0:
            raise ValueError("n_samples, n_leapfrog and thin must be >= 1, burn_in >= 0")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.mass_diag is not None and min(self.mass_diag) <= 0:
            raise ValueError("masses must be positive")

    def masses(self, p: int) -> np.ndarray:
        d = p * (p + 1) // 2
        if self.mass_diag is None:
            return np.ones(d)
        m = np.asarray(self.mass_diag, dtype=float)
        if m.shape != (d,):
            raise ValueError(f"mass_diag needs {d} entries for p={p}")
        return m


@dataclass
class Chain:
    samples: list[np.ndarray]
    accept_rate: float
    log_density_trace: list[float]
    step_size: float = 0.0
    final_v: np.ndarray | None = None
    trace: list[tuple[int, float, bool, tuple[float, ...]]] = field(default_factory=list, repr=False)

    def write_trace_csv(self, path: str | Path) -> None:
        """Diagnostic dump: iteration, log density, accepted flag and the diagonal of V."""
        if not self.trace:
            return
        p = len(self.trace[0][3])
        cols = ["iter", "log_density", "accepted"] + [f"v_{i}{i}" for i in range(1, p + 1)]
        lines = [",".join(cols)]
        for it, lp, acc, diag in self.trace:
            lines.append(",".join([str(it), repr(lp), str(int(acc))] + [repr(x) for x in diag]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite("non-finite value in leapfrog step")


def _eval(target: Target, v: np.ndarray) -> tuple[float, np.ndarray]:
    try:
        lp, g = target.logp_and_grad(v)
    except (MtgbnError, np.linalg.LinAlgError, FloatingPointError) as exc:
        raise NonFinite(str(exc)) from None
    _check_finite(lp, g)
    return lp, g


def leapfrog(v, momentum, cfg: HmcConfig, target: Target):
    """One half-kick / drift / half-kick step.

    ``momentum`` is the vector of lower-triangular coordinates in
    ``np.tril_indices`` order.
    """
    v = np.asarray(v, dtype=float)
    p = v.shape[0]
    tri = np.tril_indices(p)
    mass = cfg.masses(p)
    eps = cfg.step_size
    _, g = _eval(target, v)
    mom = momentum + 0.5 * eps * g[tri]
    v_new = np.zeros_like(v)
    v_new[tri] = v[tri] + eps * mom / mass
    _, g = _eval(target, v_new)
    mom = mom + 0.5 * eps * g[tri]
    _check_finite(v_new, mom)
    return v_new, mom


def _trajectory(v, grad, mom, eps, n_steps, mass, tri, target):
    x = v[tri].copy()
    g = grad[tri]
    lp = None
    vm = np.zeros_like(v)
    for _ in range(n_steps):
        mom = mom + 0.5 * eps * g
        x = x + eps * mom / mass
        vm = np.zeros_like(v)
        vm[tri] = x
        lp, gm = _eval(target, vm)
        g = gm[tri]
        mom = mom + 0.5 * eps * g
    _check_finite(x, mom)
    return vm, mom, lp, gm


class _DualAveraging:
    def __init__(self, eps0: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.h_bar = 0.0
        self.log_eps_bar = math.log(eps0)
        self.m = 0

    def update(self, accept_prob: float) -> float:
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob)
        log_eps = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        log_eps = min(max(log_eps, -20.0), 2.0)
        eta = m ** (-self.kappa)
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final(self) -> float:
        return math.exp(self.log_eps_bar)


def run_hmc(target: Target, v0: np.ndarray, cfg: HmcConfig, record_trace: bool = False) -> Chain:
    """Metropolis-corrected HMC on an arbitrary V-space target."""
    rng = np.random.default_rng(cfg.seed)
    v = np.array(v0, dtype=float)
    p = v.shape[0]
    tri = np.tril_indices(p)
    mass = cfg.masses(p)
    sqrt_mass = np.sqrt(mass)
    lp, grad = _eval(target, v)

    eps = cfg.step_size
    adapter = _DualAveraging(eps, cfg.target_accept) if cfg.adapt and cfg.burn_in > 0 else None
    total = cfg.burn_in + cfg.n_samples * cfg.thin
    samples, lp_trace, trace = [], [], []
    window: list[bool] = []
    n_acc = 0
    for it in range(total):
        mom0 = rng.standard_normal(tri[0].size) * sqrt_mass
        h0 = lp - 0.5 * float(np.sum(mom0**2 / mass))
        try:
            v1, mom1, lp1, g1 = _trajectory(v, grad, mom0, eps, cfg.n_leapfrog, mass, tri, target)
            log_alpha = lp1 - 0.5 * float(np.sum(mom1**2 / mass)) - h0
            if not math.isfinite(log_alpha):
                log_alpha = -math.inf
        except NonFinite:
            log_alpha = -math.inf
        log_alpha = min(0.0, log_alpha)
        accepted = math.log(rng.uniform()) < log_alpha
        if accepted:
            # the momentum flip of the acceptance step is moot: momentum is redrawn every iteration
            v, lp, grad = v1, lp1, g1

        if it < cfg.burn_in:
            if adapter is not None:
                eps = adapter.update(math.exp(log_alpha))
                if it == cfg.burn_in - 1:
                    eps = adapter.final
        else:
            n_acc += accepted
            window.append(accepted)
            if len(window) > cfg.diverge_window:
                window.pop(0)
            if len(window) == cfg.diverge_window and sum(window) / len(window) < cfg.diverge_threshold:
                raise ChainDiverged(
                    f"acceptance {sum(window) / len(window):.3f} over the last {cfg.diverge_window} iterations"
                )
            if (it - cfg.burn_in + 1) % cfg.thin == 0:
                samples.append(inverse_transform(v))
                lp_trace.append(lp)
        if record_trace:
            trace.append((it, lp, bool(accepted), tuple(np.diag(v))))
    kept = cfg.n_samples * cfg.thin
    return Chain(samples, n_acc / kept, lp_trace, eps, v, trace)


def sample_sigma_h(
    tasks: Sequence[TaskData],
    covers: Sequence[CliqueSequence],
    hp: HyperParams,
    cfg: HmcConfig,
    init: np.ndarray,
    record_trace: bool = False,
) -> Chain:
    """Draw the shared covariance from its posterior given the current structures."""
    target = PosteriorTarget(tasks, covers, hp)
    return run_hmc(target, transform(init), cfg, record_trace=record_trace)
