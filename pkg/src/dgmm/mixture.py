"""Dynamic Gaussian mixture: a weighted Gaussian set that grows online.

Each incoming sample either refines an existing component or becomes a new
one.  The choice is probabilistic: a merge threshold

    t = 1 - (1 - d) * exp(-k * n)

is compared against a uniform draw, where d is the peak-normalized mixture
density at the sample, n is the number of samples already absorbed, and k
is the merge likelihood constant.  Low density and a young model favor new
components; as the model matures (n grows) merging dominates.

Component weights are unnormalized sample counts.  Merging uses exact
incremental updates of the unbiased mean/covariance estimators, so a
component that has absorbed samples y_1..y_n carries exactly their batch
mean and unbiased covariance (the creation-time identity covariance is a
placeholder that drops out on the first merge).
"""

from __future__ import annotations

import numpy as np

from .gaussian import Gaussian, ensure_positive_definite, symmetrize


def merge_threshold(d: float, n: float, k: float) -> float:
    """Probability of merging rather than adding: 1 - (1 - d) e^{-kn}.

    Non-decreasing in each argument; equals d at n = 0 and tends to 1 as
    n grows for any k > 0.
    """
    if not 0.0 <= d <= 1.0:
        raise ValueError("normalized density d must lie in [0, 1]")
    if n < 0 or k < 0:
        raise ValueError("n and k must be non-negative")
    return 1.0 - (1.0 - d) * np.exp(-k * n)


class WeightedGaussian:
    """A mixture component: Gaussian moments plus an unnormalized weight.

    Under the online update rules w counts contributing samples (integral,
    >= 1).  Derived mixtures (e.g. conditioned queries) may carry arbitrary
    positive weights.

    Components created by the online update remember their creation
    covariance.  The stored moments `g` are always the exact incremental
    estimators, which are rank-deficient right after the first merge (the
    unbiased covariance of two points), so densities are evaluated against
    a blend that treats the creation covariance as one pseudo-sample:

        S_eval = ((w - 1) S + S_creation) / w

    The prior washes out as the component matures, keeps young components
    selectable instead of freezing them at their second sample, and never
    touches the exact moments.  Components without a creation covariance
    (hand-built mixtures, conditioned queries) evaluate their moments
    as-is, with minimal diagonal loading only if factorization fails.
    """

    __slots__ = ("g", "w", "creation_cov", "_pd")

    def __init__(self, g: Gaussian, w: float, creation_cov: np.ndarray | None = None):
        if w <= 0:
            raise ValueError("component weight must be positive")
        self.g = g
        self.w = float(w)
        self.creation_cov = creation_cov
        self._pd = None

    def pd_gaussian(self) -> Gaussian:
        """Gaussian used for density evaluation (see class docstring)."""
        if self._pd is None:
            if self.creation_cov is not None and self.w >= 1.0:
                cov = ((self.w - 1.0) * self.g.cov + self.creation_cov) / self.w
                self._pd = ensure_positive_definite(Gaussian(self.g.mean, symmetrize(cov)))
            else:
                self._pd = ensure_positive_definite(self.g)
        return self._pd

    def __repr__(self):
        return f"WeightedGaussian(w={self.w}, {self.g!r})"


def merge_into(c: WeightedGaussian, x) -> WeightedGaussian:
    """Absorb one sample into a component, returning the updated component.

    Exact one-pass update of the unbiased estimators:

        w'  = w + 1
        mu' = (w mu + x) / w'
        S'  = ((w-1)/w) S + mu mu^T + (1/w) x x^T - (w'/w) mu' mu'^T

    For w = 1 the (w-1)/w factor is zero, so the creation covariance is
    discarded and S' is the unbiased covariance of the two samples seen.
    """
    if c.w < 1:
        raise ValueError("merge requires a component with weight >= 1")
    x = np.asarray(x, dtype=float).reshape(-1)
    mu = c.g.mean
    if x.shape[0] != mu.shape[0]:
        raise ValueError(f"sample dimension {x.shape[0]} != component dimension {mu.shape[0]}")
    w = c.w
    w_new = w + 1.0
    mu_new = (w * mu + x) / w_new
    cov_new = (
        ((w - 1.0) / w) * c.g.cov
        + np.outer(mu, mu)
        + np.outer(x, x) / w
        - (w_new / w) * np.outer(mu_new, mu_new)
    )
    return WeightedGaussian(Gaussian(mu_new, symmetrize(cov_new)), w_new, c.creation_cov)


class DynamicGaussianMixture:
    """Variable-size weighted Gaussian mixture over a D-dimensional space."""

    def __init__(self, dim: int, components: list[WeightedGaussian] | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        self.components: list[WeightedGaussian] = []
        # stacked evaluation cache, rebuilt lazily after any mutation
        self._stack = None
        for c in components or []:
            self._append(c)

    # -- bookkeeping ------------------------------------------------------

    def _append(self, c: WeightedGaussian) -> None:
        if c.g.dim != self.dim:
            raise ValueError(f"component dimension {c.g.dim} != mixture dimension {self.dim}")
        self.components.append(c)
        self._stack = None

    def _replace(self, i: int, c: WeightedGaussian) -> None:
        self.components[i] = c
        self._stack = None

    def __len__(self) -> int:
        return len(self.components)

    def __repr__(self):
        return f"DynamicGaussianMixture(dim={self.dim}, components={len(self)}, weight={self.total_weight()})"

    def total_weight(self) -> float:
        """Sum of unnormalized weights; the number of absorbed samples for
        models built purely by add_sample."""
        return float(sum(c.w for c in self.components))

    def weights(self) -> np.ndarray:
        return np.array([c.w for c in self.components], dtype=float)

    def means(self) -> np.ndarray:
        return np.array([c.g.mean for c in self.components], dtype=float)

    # -- evaluation --------------------------------------------------------

    def _stacked(self):
        """(means, inverse Cholesky factors, log norm constants, weights)
        for all components, using each component's evaluation Gaussian."""
        if self._stack is None:
            pds = [c.pd_gaussian() for c in self.components]
            self._stack = (
                np.array([g.mean for g in pds]),
                np.array([g.chol_inv() for g in pds]),
                np.array([g.log_norm_const() for g in pds]),
                self.weights(),
            )
        return self._stack

    def _component_log_densities(self, pts: np.ndarray) -> np.ndarray:
        """Log density of every component at every point: shape (N, m)."""
        means, l_inv, log_norms, _ = self._stacked()
        diff = pts[:, None, :] - means[None, :, :]            # (N, m, D)
        y = np.einsum("mij,nmj->nmi", l_inv, diff)            # (N, m, D)
        quad = np.einsum("nmi,nmi->nm", y, y)
        return log_norms[None, :] - 0.5 * quad

    def _check_points(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dim:
            raise ValueError(f"point dimension {pts.shape[1]} != mixture dimension {self.dim}")
        return pts, single

    def density(self, x):
        """Mixture pdf: sum_i (w_i / W) N(x; mu_i, S_i).  Accepts one point
        (D,) or a batch (N, D)."""
        if not self.components:
            raise ValueError("mixture is empty")
        pts, single = self._check_points(x)
        w = self.weights()
        w_hat = w / w.sum()
        vals = np.exp(self._component_log_densities(pts)) @ w_hat
        return float(vals[0]) if single else vals

    def _peak_estimate(self) -> float:
        """Estimated mixture maximum: the largest mixture value over all
        component means.  Exact for well-separated components; can
        undershoot when components overlap, so callers clamp ratios at 1."""
        means, _, _, w = self._stacked()
        w_hat = w / w.sum()
        vals = np.exp(self._component_log_densities(means)) @ w_hat
        return float(vals.max())

    def normalized_density(self, x):
        """Mixture density rescaled so the estimated peak is 1; in (0, 1]."""
        if not self.components:
            raise ValueError("mixture is empty")
        peak = self._peak_estimate()
        return np.minimum(self.density(x) / peak, 1.0)

    # -- online update -----------------------------------------------------

    def select_component(self, x, rng: np.random.Generator) -> int:
        """Draw a component index with probability proportional to
        w_i * exp(-maha_i(x)^2 / 2).  If every score underflows to zero the
        sample is out of support everywhere; fall back to the nearest
        component by Mahalanobis distance."""
        if not self.components:
            raise ValueError("mixture is empty")
        pts, _ = self._check_points(x)
        _, _, log_norms, w = self._stacked()
        log_dens = self._component_log_densities(pts)[0]
        scores = w * np.exp(log_dens - log_norms)
        total = scores.sum()
        if total <= 0.0 or not np.isfinite(total):
            maha_sq = 2.0 * (log_norms - log_dens)
            return int(np.argmin(maha_sq))
        u = rng.random()
        return int(np.searchsorted(np.cumsum(scores / total), u, side="right").clip(max=len(scores) - 1))

    def add_sample(self, x, k: float, rng: np.random.Generator, new_cov_scale: float = 1.0) -> None:
        """Absorb one sample: merge into a stochastically chosen component
        or append a fresh one with mean x, covariance new_cov_scale * I and
        weight 1.  Total weight always grows by exactly 1.

        The uniform draw happens first, unconditionally, so a fixed seed
        yields the same decision sequence regardless of branch outcomes.
        """
        if k < 0:
            raise ValueError("k must be non-negative")
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise ValueError(f"sample dimension {x.shape[0]} != mixture dimension {self.dim}")
        r = rng.random()
        if self.components:
            d = float(self.normalized_density(x))
            n = self.total_weight()
        else:
            d, n = 0.0, 0.0
        t = merge_threshold(d, n, k)
        if r < t:
            i = self.select_component(x, rng)
            self._replace(i, merge_into(self.components[i], x))
        else:
            cov = new_cov_scale * np.eye(self.dim)
            self._append(WeightedGaussian(Gaussian(x, cov), 1.0, creation_cov=cov))

    # -- construction ------------------------------------------------------

    @classmethod
    def from_components(cls, components: list[WeightedGaussian]) -> "DynamicGaussianMixture":
        if not components:
            raise ValueError("need at least one component")
        return cls(components[0].g.dim, components)
