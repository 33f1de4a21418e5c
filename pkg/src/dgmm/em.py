"""Offline EM fitting of fixed-size Gaussian mixtures, plus the two scoring
metrics used to compare density estimates: summed log-likelihood and the
mean integrated square error between two densities on a rectangular grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .gaussian import Gaussian, ensure_positive_definite, symmetrize

#: Densities are floored here before taking logs, so held-out points far
#: from every component keep fold averages finite.
DENSITY_FLOOR = 1e-300


class FixedGaussianMixture:
    """Gaussian mixture with a component count fixed at fit time; weights
    are normalized mixture proportions summing to 1."""

    def __init__(self, weights, gaussians: list[Gaussian]):
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        self.gaussians = list(gaussians)
        if len(self.gaussians) != self.weights.shape[0]:
            raise ValueError("one weight per component required")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        dims = {g.dim for g in self.gaussians}
        if len(dims) != 1:
            raise ValueError("components must share one dimension")
        self.dim = dims.pop()
        #: per-iteration data log-likelihood of the restart that produced
        #: this fit; useful for monotonicity checks.
        self.loglik_path: list[float] = []

    def __len__(self):
        return len(self.gaussians)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        vals = np.zeros(pts.shape[0])
        for w, g in zip(self.weights, self.gaussians):
            vals += w * g.density(pts)
        return float(vals[0]) if single else vals

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        logs = np.stack([g.log_density(pts) for g in self.gaussians], axis=1)
        out = logsumexp(logs + np.log(self.weights)[None, :], axis=1)
        return float(out[0]) if single else out


def _em_once(points: np.ndarray, m: int, tol: float, max_iter: int,
             rng: np.random.Generator) -> FixedGaussianMixture:
    n, d = points.shape
    # init: m distinct data points as means, shared data covariance, uniform weights
    idx = rng.choice(n, size=m, replace=False)
    means = points[idx].copy()
    base_cov = symmetrize(np.atleast_2d(np.cov(points, rowvar=False, bias=True)))
    covs = [base_cov.copy() for _ in range(m)]
    weights = np.full(m, 1.0 / m)

    gaussians = [ensure_positive_definite(Gaussian(means[j], covs[j])) for j in range(m)]
    path = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        # E-step
        log_prob = np.stack([g.log_density(points) for g in gaussians], axis=1)
        log_weighted = log_prob + np.log(weights)[None, :]
        log_total = logsumexp(log_weighted, axis=1)
        ll = float(log_total.sum())
        path.append(ll)
        resp = np.exp(log_weighted - log_total[:, None])
        # M-step
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / n
        means = (resp.T @ points) / nk[:, None]
        gaussians = []
        for j in range(m):
            diff = points - means[j]
            cov = symmetrize((resp[:, j][:, None] * diff).T @ diff / nk[j])
            gaussians.append(ensure_positive_definite(Gaussian(means[j], cov)))
        if (ll - prev_ll) / n < tol and np.isfinite(prev_ll):
            break
        prev_ll = ll
    fit = FixedGaussianMixture(weights / weights.sum(), gaussians)
    fit.loglik_path = path
    return fit


def em_fit(points, m: int, tol: float = 1e-8, max_iter: int = 500,
           rng: np.random.Generator | None = None, restarts: int = 5) -> FixedGaussianMixture:
    """Fit an m-component Gaussian mixture by expectation-maximization.

    Means initialize to m distinct random data points, covariances to the
    data covariance, weights uniform; the best of `restarts` runs (by final
    data log-likelihood) is returned.  Iteration stops when the per-point
    log-likelihood improves by less than tol.  Covariances that collapse
    (e.g. duplicated points) are regularized rather than failing.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.size == 0:
        raise ValueError("no points to fit")
    if m < 1:
        raise ValueError("m must be >= 1")
    if points.shape[0] < m:
        raise ValueError(f"need at least {m} points to fit {m} components")
    if rng is None:
        rng = np.random.default_rng()
    best = None
    for _ in range(max(1, restarts)):
        fit = _em_once(points, m, tol, max_iter, rng)
        if best is None or fit.loglik_path[-1] > best.loglik_path[-1]:
            best = fit
    return best


def log_likelihood(density, points) -> float:
    """Sum of ln density over the points, with the density floored at
    DENSITY_FLOOR so the result is always finite.  `density` is any
    callable mapping a point (or batch of points) to pdf values, e.g. the
    bound density method of a fitted mixture."""
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        return 0.0
    if points.ndim == 1:
        points = points[:, None]
    vals = np.asarray(density(points), dtype=float).reshape(-1)
    return float(np.log(np.maximum(vals, DENSITY_FLOOR)).sum())


@dataclass(frozen=True)
class Grid:
    """Rectangular evaluation grid: cell-centered, `shape[i]` cells along
    axis i between lower[i] and upper[i]."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        lo, hi, sh = map(np.asarray, (self.lower, self.upper, self.shape))
        if not (lo.shape == hi.shape == sh.shape) or lo.ndim != 1:
            raise ValueError("lower, upper, shape must be equal-length 1-D")
        if np.any(hi <= lo) or np.any(sh < 2):
            raise ValueError("degenerate grid: need upper > lower and >= 2 cells per axis")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def cell_volume(self) -> float:
        steps = [(u - l) / s for l, u, s in zip(self.lower, self.upper, self.shape)]
        return float(np.prod(steps))

    def centers(self) -> np.ndarray:
        """All cell centers, shape (prod(shape), ndim)."""
        axes = [
            l + (u - l) * (np.arange(s) + 0.5) / s
            for l, u, s in zip(self.lower, self.upper, self.shape)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


def integrate_on_grid(density, grid: Grid) -> float:
    """Midpoint-rule integral of a density over the grid."""
    vals = np.asarray(density(grid.centers()), dtype=float)
    return float(vals.sum() * grid.cell_volume())


def mise(p, q, grid: Grid) -> float:
    """Mean integrated square error between two densities: the midpoint-rule
    approximation of the integral of (p - q)^2 over the grid."""
    pts = grid.centers()
    diff = np.asarray(p(pts), dtype=float) - np.asarray(q(pts), dtype=float)
    return float(np.sum(diff * diff) * grid.cell_volume())


def mixture_support_box(mixtures, n_sigma: float = 8.0) -> tuple[np.ndarray, np.ndarray]:
    """Bounding box covering every component mean +- n_sigma marginal
    standard deviations, across one or more mixtures (any object exposing
    per-component Gaussians via .components or .gaussians)."""
    lows, highs = [], []
    for mix in mixtures:
        comps = getattr(mix, "components", None)
        gaussians = [c.pd_gaussian() for c in comps] if comps is not None else mix.gaussians
        for g in gaussians:
            sig = np.sqrt(np.clip(np.diag(g.cov), 0.0, None))
            lows.append(g.mean - n_sigma * sig)
            highs.append(g.mean + n_sigma * sig)
    if not lows:
        raise ValueError("no components to bound")
    return np.min(lows, axis=0), np.max(highs, axis=0)


def support_grid(mixtures, resolution: int = 150, n_sigma: float = 8.0) -> Grid:
    lo, hi = mixture_support_box(mixtures, n_sigma)
    return Grid(tuple(lo), tuple(hi), (resolution,) * lo.shape[0])
