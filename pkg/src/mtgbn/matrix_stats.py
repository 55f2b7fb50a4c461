"""Symmetric-matrix kernels, the Cholesky reparameterization and random samplers."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, NotPositiveDefinite, Overflow

LOG_PI = math.log(math.pi)
LOG_2 = math.log(2.0)


def cholesky(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def check_spd(m: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Validate symmetry (relative to the largest entry) and positive definiteness."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.abs(m).max(initial=0.0), 1.0)
    if np.abs(m - m.T).max(initial=0.0) > rtol * scale:
        raise ValueError("matrix is not symmetric")
    cholesky(m)
    return m


def transform(sigma: np.ndarray) -> np.ndarray:
    """Map an SPD matrix to the unconstrained lower-triangular ``V``.

    ``v_ii = log l_ii`` and ``v_ij = l_ij`` below the diagonal, where ``L``
    is the Cholesky factor of ``sigma``.
    """
    L = cholesky(np.asarray(sigma, dtype=float))
    v = np.tril(L, -1)
    v[np.diag_indices_from(v)] = np.log(np.diag(L))
    return v


def cholesky_factor(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    L = np.tril(v, -1)
    with np.errstate(over="ignore"):
        d = np.exp(np.diag(v))
    if not np.all(np.isfinite(d)):
        raise Overflow("exp of a diagonal entry overflowed")
    L[np.diag_indices_from(L)] = d
    return L


def inverse_transform(v: np.ndarray) -> np.ndarray:
    """Rebuild ``sigma = L L^T`` from ``V`` (exponentiated diagonal)."""
    L = cholesky_factor(v)
    with np.errstate(over="ignore", invalid="ignore"):
        sigma = L @ L.T
    if not np.all(np.isfinite(sigma)):
        raise Overflow("reconstructed covariance is not finite")
    return sigma


def lmvgamma(d: int, a: float) -> float:
    """Log of the multivariate gamma function of dimension ``d``."""
    if d < 0:
        raise DomainError("dimension must be non-negative")
    if d == 0:
        return 0.0
    if not a > (d - 1) / 2.0:
        raise DomainError(f"lmvgamma needs a > {(d - 1) / 2}, got {a}")
    j = np.arange(d)
    return float(d * (d - 1) / 4.0 * LOG_PI + gammaln(a - j / 2.0).sum())


def logdet_sub(m: np.ndarray, idx: Iterable[int]) -> float:
    """Log determinant of the principal submatrix on ``idx``."""
    idx = np.asarray(sorted(idx), dtype=int)
    if idx.size == 0:
        raise ValueError("index set must be non-empty")
    sub = m[np.ix_(idx, idx)]
    L = cholesky(sub)
    return float(2.0 * np.log(np.diag(L)).sum())


def logdet(m: np.ndarray) -> float:
    return float(2.0 * np.log(np.diag(cholesky(m))).sum())


def haar_orthogonal(p: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((p, p))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))


def sample_uniform_spd_unit_trace(p: int, rng: np.random.Generator) -> np.ndarray:
    """Random SPD matrix with unit trace.

    Eigenvalues are a flat Dirichlet draw, eigenvectors Haar-distributed.
    """
    if p < 1:
        raise DomainError("p must be >= 1")
    lam = rng.dirichlet(np.ones(p))
    q = haar_orthogonal(p, rng)
    s = (q * lam) @ q.T
    s = 0.5 * (s + s.T)
    return s / np.trace(s)


def sample_wishart_bartlett(scale: np.ndarray, nu: float, rng: np.random.Generator) -> np.ndarray:
    p = scale.shape[0]
    L = cholesky(scale)
    a = np.tril(rng.standard_normal((p, p)), -1)
    a[np.diag_indices(p)] = np.sqrt(rng.chisquare(nu - np.arange(p)))
    la = L @ a
    return la @ la.T


def sample_inverse_wishart(scale: np.ndarray, nu: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from ``IW(scale, nu)``: the inverse of a Wishart(scale^-1, nu) draw."""
    scale = np.asarray(scale, dtype=float)
    p = scale.shape[0]
    if not nu > p - 1:
        raise DomainError(f"inverse Wishart needs nu > {p - 1}, got {nu}")
    w = sample_wishart_bartlett(np.linalg.inv(scale), nu, rng)
    out = np.linalg.inv(w)
    return 0.5 * (out + out.T)


def sample_mvn(cov: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` zero-mean Gaussian rows with covariance ``cov``."""
    cov = np.asarray(cov, dtype=float)
    L = cholesky(cov)
    return rng.standard_normal((n, cov.shape[0])) @ L.T


def sample_cov(data: np.ndarray) -> np.ndarray:
    """Zero-mean second moment ``X^T X / n`` (no centering, divisor ``n``)."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("data must be a non-empty 2-D array")
    s = x.T @ x / x.shape[0]
    return 0.5 * (s + s.T)


def standardize(data: np.ndarray) -> np.ndarray:
    """Center columns and scale them to unit variance; constant columns are only centered."""
    x = np.asarray(data, dtype=float)
    x = x - x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return x / sd


def read_matrix_csv(path: str | Path) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV; a non-numeric first row is taken as the header."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    rows = [r for r in text if r.strip()]
    header = None
    first = [c.strip() for c in rows[0].split(",")]
    try:
        [float(c) for c in first]
    except ValueError:
        header = first
        rows = rows[1:]
    data = np.array([[float(c) for c in r.split(",")] for r in rows], dtype=float)
    if data.ndim == 1:
        data = data.reshape(0, len(header or []))
    return data, header


def format_matrix_csv(m: np.ndarray, header: list[str] | None = None) -> str:
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in np.atleast_2d(m):
        lines.append(",".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def write_matrix_csv(path: str | Path, m: np.ndarray, header: list[str] | None = None) -> None:
    Path(path).write_text(format_matrix_csv(m, header), encoding="utf-8")
